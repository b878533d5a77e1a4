//! Ego-centric bird's-eye-view occupancy raster.

use base64::Engine;
use serde::de::Error as DeError;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::sim::{ActorKind, WorldState};
use crate::world::{DenseRoute, MapSpec, Pose, Vec2};

use super::SensorConfig;

/// Grid side length, cells (1 m each).
pub const BEV_SIZE: usize = 32;
/// Channels: 0 = vehicles (incl. parked/static boxes), 1 = pedestrians, 2 = route.
pub const BEV_CHANNELS: usize = 3;
pub const BEV_CELLS: usize = BEV_SIZE * BEV_SIZE * BEV_CHANNELS;
/// Ego cell: column 16, row 4, facing +row.
pub const BEV_EGO_COL: f64 = 16.0;
pub const BEV_EGO_ROW: f64 = 4.0;

/// Binary occupancy grid, bit-packed for serialization (base64 of 384 bytes).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BevGrid {
    packed: Vec<u8>,
}

impl Default for BevGrid {
    fn default() -> Self {
        BevGrid {
            packed: vec![0u8; BEV_CELLS / 8],
        }
    }
}

impl BevGrid {
    pub fn new() -> BevGrid {
        BevGrid::default()
    }

    fn index(channel: usize, col: usize, row: usize) -> usize {
        channel * BEV_SIZE * BEV_SIZE + row * BEV_SIZE + col
    }

    pub fn get(&self, channel: usize, col: usize, row: usize) -> bool {
        let i = Self::index(channel, col, row);
        self.packed[i / 8] & (1 << (i % 8)) != 0
    }

    pub fn set(&mut self, channel: usize, col: usize, row: usize) {
        let i = Self::index(channel, col, row);
        self.packed[i / 8] |= 1 << (i % 8);
    }

    /// Number of occupied cells in a channel.
    pub fn channel_count(&self, channel: usize) -> usize {
        let mut n = 0;
        for row in 0..BEV_SIZE {
            for col in 0..BEV_SIZE {
                if self.get(channel, col, row) {
                    n += 1;
                }
            }
        }
        n
    }

    /// Flattens to 0/1 values in channel-major, row-major order.
    pub fn to_f64(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(BEV_CELLS);
        for c in 0..BEV_CHANNELS {
            for row in 0..BEV_SIZE {
                for col in 0..BEV_SIZE {
                    out.push(if self.get(c, col, row) { 1.0 } else { 0.0 });
                }
            }
        }
        out
    }
}

impl Serialize for BevGrid {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let encoded = base64::engine::general_purpose::STANDARD.encode(&self.packed);
        serializer.serialize_str(&encoded)
    }
}

impl<'de> Deserialize<'de> for BevGrid {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        let packed = base64::engine::general_purpose::STANDARD
            .decode(text.as_bytes())
            .map_err(D::Error::custom)?;
        if packed.len() != BEV_CELLS / 8 {
            return Err(D::Error::custom(format!(
                "bev grid must pack {} bytes, got {}",
                BEV_CELLS / 8,
                packed.len()
            )));
        }
        Ok(BevGrid { packed })
    }
}

/// Ego-frame coordinates (+x right, +y forward) of a cell center.
fn cell_center(col: usize, row: usize) -> Vec2 {
    Vec2::new(
        col as f64 + 0.5 - BEV_EGO_COL,
        row as f64 + 0.5 - BEV_EGO_ROW,
    )
}

fn ego_frame_to_world(ego_pose: Pose, local: Vec2) -> Vec2 {
    let fwd = ego_pose.heading();
    let right = Vec2::new(fwd.y, -fwd.x);
    ego_pose.position + fwd * local.y + right * local.x
}

/// Stamps visible actors and the route into the grid. Deterministic.
pub fn rasterize_bev(
    world: &WorldState,
    map: &MapSpec,
    route: Option<&DenseRoute>,
    ego_pose: Pose,
    cfg: &SensorConfig,
) -> BevGrid {
    let mut grid = BevGrid::new();
    for actor in &world.actors {
        if actor.id == world.ego_id {
            continue;
        }
        let channel = match actor.kind {
            ActorKind::Vehicle | ActorKind::Static => 0,
            ActorKind::Pedestrian => 1,
        };
        if !super::visible(ego_pose, actor, world, map, cfg) {
            continue;
        }
        stamp_box(&mut grid, channel, ego_pose, actor);
    }
    if let Some(route) = route {
        stamp_route(&mut grid, ego_pose, route);
    }
    grid
}

fn stamp_box(grid: &mut BevGrid, channel: usize, ego_pose: Pose, actor: &crate::sim::ActorState) {
    let fp = actor.footprint();
    // Bounding rectangle of the footprint in ego-frame cells.
    let corners = fp.corners();
    let locals: Vec<Vec2> = corners.iter().map(|c| ego_pose.to_local(*c)).collect();
    let min_x = locals.iter().map(|p| p.x).fold(f64::MAX, f64::min);
    let max_x = locals.iter().map(|p| p.x).fold(f64::MIN, f64::max);
    let min_y = locals.iter().map(|p| p.y).fold(f64::MAX, f64::min);
    let max_y = locals.iter().map(|p| p.y).fold(f64::MIN, f64::max);
    let col_lo = ((min_x + BEV_EGO_COL).floor().max(0.0)) as usize;
    let col_hi = ((max_x + BEV_EGO_COL).ceil().min(BEV_SIZE as f64 - 1.0)) as usize;
    let row_lo = ((min_y + BEV_EGO_ROW).floor().max(0.0)) as usize;
    let row_hi = ((max_y + BEV_EGO_ROW).ceil().min(BEV_SIZE as f64 - 1.0)) as usize;
    if min_x + BEV_EGO_COL > BEV_SIZE as f64 || max_x + BEV_EGO_COL < 0.0 {
        return;
    }
    if min_y + BEV_EGO_ROW > BEV_SIZE as f64 || max_y + BEV_EGO_ROW < 0.0 {
        return;
    }
    for row in row_lo..=row_hi {
        for col in col_lo..=col_hi {
            let world_p = ego_frame_to_world(ego_pose, cell_center(col, row));
            if fp.contains(world_p) {
                grid.set(channel, col, row);
            }
        }
    }
}

fn stamp_route(grid: &mut BevGrid, ego_pose: Pose, route: &DenseRoute) {
    let (s_ego, _) = crate::world::project_onto_route(route, ego_pose.position);
    let from = (s_ego - (BEV_EGO_ROW + 2.0)).max(0.0);
    let to = (s_ego + BEV_SIZE as f64).min(route.total_length);
    let mut s = from;
    while s <= to {
        let local = ego_pose.to_local(route.point_at(s));
        let col = local.x + BEV_EGO_COL;
        let row = local.y + BEV_EGO_ROW;
        if col >= 0.0 && col < BEV_SIZE as f64 && row >= 0.0 && row < BEV_SIZE as f64 {
            grid.set(2, col as usize, row as usize);
        }
        s += 0.5;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{ActorState, Behavior, Conditions};

    fn empty_map() -> MapSpec {
        MapSpec {
            schema_version: crate::world::MAP_SCHEMA_VERSION,
            seed: 0,
            lanes: vec![],
            junctions: vec![],
            static_obstacles: vec![],
            stop_lines: vec![],
        }
    }

    fn world_with(actors: Vec<ActorState>) -> WorldState {
        let ego = ActorState {
            id: 0,
            kind: ActorKind::Vehicle,
            pose: Pose::new(0.0, 0.0, std::f64::consts::FRAC_PI_2),
            speed: 0.0,
            accel: 0.0,
            half_extent: Vec2::new(2.4, 1.0),
            lane_id: None,
            behavior: Behavior::Ego,
        };
        let mut all = vec![ego];
        all.extend(actors);
        WorldState {
            tick: 0,
            time_s: 0.0,
            actors: all,
            lights: vec![],
            conditions: Conditions::default(),
            ego_id: 0,
            scripted: Vec::new(),
        }
    }

    #[test]
    fn empty_world_has_route_channel_only() {
        let map = empty_map();
        let world = world_with(vec![]);
        // Route straight ahead of the ego (which faces +y).
        let raw: Vec<(Vec2, u32)> = vec![(Vec2::ZERO, 0), (Vec2::new(0.0, 60.0), 0)];
        let route = DenseRoute::from_polyline(&raw, 1.0);
        let grid = rasterize_bev(&world, &map, Some(&route), world.ego().pose, &SensorConfig::mono());
        assert_eq!(grid.channel_count(0), 0);
        assert_eq!(grid.channel_count(1), 0);
        assert!(grid.channel_count(2) > 10);
    }

    #[test]
    fn visible_vehicle_lands_in_expected_cells() {
        let map = empty_map();
        // Ego faces +y; vehicle 8 m ahead.
        let world = world_with(vec![ActorState {
            id: 1,
            kind: ActorKind::Vehicle,
            pose: Pose::new(0.0, 8.0, std::f64::consts::FRAC_PI_2),
            speed: 0.0,
            accel: 0.0,
            half_extent: Vec2::new(2.4, 1.0),
            lane_id: None,
            behavior: Behavior::Static,
        }]);
        let grid = rasterize_bev(&world, &map, None, world.ego().pose, &SensorConfig::mono());
        assert!(grid.channel_count(0) >= 4);
        // Expect occupancy near col 16, row 12 (8 m ahead of the ego row 4).
        let mut found = false;
        for row in 10..=14 {
            for col in 14..=18 {
                found |= grid.get(0, col, row);
            }
        }
        assert!(found);
        assert_eq!(grid.channel_count(1), 0);
    }

    #[test]
    fn bev_serde_roundtrip() {
        let mut g = BevGrid::new();
        g.set(0, 3, 7);
        g.set(2, 31, 31);
        let text = serde_json::to_string(&g).unwrap();
        let back: BevGrid = serde_json::from_str(&text).unwrap();
        assert_eq!(g, back);
    }
}
