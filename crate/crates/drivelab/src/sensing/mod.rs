//! The student's observation model: camera frustums with occlusion, BEV
//! occupancy rasters, and target-point selection/normalization. The aligned
//! expert reuses the same visibility predicate.

mod bev;
mod tp;
mod visibility;

use serde::{Deserialize, Serialize};

use crate::sim::{ActorState, Conditions, Rain, TimeOfDay, WorldState};
use crate::world::route::TpActive;
use crate::world::{DenseRoute, MapSpec, Pose, TargetPoint, Vec2};

pub use bev::{BevGrid, BEV_CELLS, BEV_CHANNELS, BEV_EGO_COL, BEV_EGO_ROW, BEV_SIZE};
pub use tp::{normalize_tp, NormalizeError, TpStats};
pub use visibility::{visible, visible_lights, VisibleLight};

/// Camera suite: planar wedges sharing one origin at the ego center.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SensorConfig {
    /// Per-camera field of view, degrees.
    pub fov_deg: f64,
    /// Camera yaw offsets relative to the ego heading, radians.
    pub camera_yaws: Vec<f64>,
    /// Day detection range, m.
    pub max_range: f64,
    pub night_factor: f64,
    pub heavy_rain_factor: f64,
    /// Footprint sample points per actor for the occlusion test.
    pub occlusion_samples: u32,
}

impl SensorConfig {
    /// One 120° forward camera.
    pub fn mono() -> SensorConfig {
        SensorConfig {
            fov_deg: 120.0,
            camera_yaws: vec![0.0],
            max_range: 64.0,
            night_factor: 0.6,
            heavy_rain_factor: 0.5,
            occlusion_samples: 5,
        }
    }

    /// Three 74° cameras covering 220°.
    pub fn tri() -> SensorConfig {
        let yaw = 73f64.to_radians();
        SensorConfig {
            fov_deg: 74.0,
            camera_yaws: vec![-yaw, 0.0, yaw],
            max_range: 64.0,
            night_factor: 0.6,
            heavy_rain_factor: 0.5,
            occlusion_samples: 5,
        }
    }

    pub fn preset(name: &str) -> Option<SensorConfig> {
        match name {
            "mono" => Some(SensorConfig::mono()),
            "tri" => Some(SensorConfig::tri()),
            _ => None,
        }
    }

    /// Detection range under the given conditions; factors multiply.
    pub fn effective_range(&self, conditions: Conditions) -> f64 {
        let mut r = self.max_range;
        if conditions.time_of_day == TimeOfDay::Night {
            r *= self.night_factor;
        }
        if conditions.rain == Rain::Heavy {
            r *= self.heavy_rain_factor;
        }
        r
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TpMode {
    One,
    Three,
}

impl std::str::FromStr for TpMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "one" => Ok(TpMode::One),
            "three" => Ok(TpMode::Three),
            other => Err(format!("unknown tp mode `{other}` (one|three)")),
        }
    }
}

impl TpMode {
    /// Number of scalars the policy input carries for this mode.
    pub fn scalars(&self) -> usize {
        match self {
            TpMode::One => 2,
            TpMode::Three => 6,
        }
    }

    pub fn switch_radius(&self) -> f64 {
        match self {
            TpMode::One => crate::sim::rollout::TP_SWITCH_RADIUS_ONE,
            TpMode::Three => crate::sim::rollout::TP_SWITCH_RADIUS_THREE,
        }
    }
}

/// The target points handed to the policy at one tick.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TPSet {
    pub mode: TpMode,
    pub previous: Option<TargetPoint>,
    pub current: TargetPoint,
    pub future: Option<TargetPoint>,
    pub switch_radius: f64,
}

impl TPSet {
    pub fn from_active(active: TpActive, mode: TpMode) -> TPSet {
        match mode {
            TpMode::One => TPSet {
                mode,
                previous: None,
                current: active.current,
                future: None,
                switch_radius: mode.switch_radius(),
            },
            TpMode::Three => TPSet {
                mode,
                previous: Some(active.previous),
                current: active.current,
                future: Some(active.future),
                switch_radius: mode.switch_radius(),
            },
        }
    }

    /// World-frame point sequence in input order.
    pub fn points(&self) -> Vec<Vec2> {
        let mut out = Vec::new();
        if let Some(p) = self.previous {
            out.push(p.position);
        }
        out.push(self.current.position);
        if let Some(f) = self.future {
            out.push(f.position);
        }
        out
    }
}

/// Traffic-light signal as the student sees it: yellow is treated as red.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LightObs {
    None,
    Red,
    Green,
}

/// Everything the student conditions on.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Observation {
    pub bev: BevGrid,
    pub ego_speed: f64,
    pub light_state: LightObs,
    pub tp_mode: TpMode,
    /// Ego-frame TP coordinates (+x right, +y forward), unnormalized.
    pub tps_raw: Vec<Vec2>,
    /// Normalized scalars in [-1, 1]; present once dataset stats exist.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tps_norm: Option<Vec<f64>>,
}

/// Composes the full observation. Pure in all inputs; `stats = None` leaves
/// the normalized TP scalars unset (dataset collection runs before stats
/// exist).
pub fn observe(
    world: &WorldState,
    map: &MapSpec,
    route: &DenseRoute,
    tp_active: TpActive,
    cfg: &SensorConfig,
    mode: TpMode,
    stats: Option<&TpStats>,
) -> Observation {
    let ego = world.ego();
    let bev = bev::rasterize_bev(world, map, Some(route), ego.pose, cfg);
    let lights = visible_lights(ego.pose, world, map, cfg);
    let light_state = nearest_light_state(&lights, ego.pose);
    let tpset = TPSet::from_active(tp_active, mode);
    let tps_raw: Vec<Vec2> = tpset
        .points()
        .iter()
        .map(|p| ego.pose.to_local(*p))
        .collect();
    let tps_norm = stats.map(|st| {
        tps_raw
            .iter()
            .flat_map(|p| {
                let (x, y) = normalize_tp(*p, st);
                [x, y]
            })
            .collect()
    });
    Observation {
        bev,
        ego_speed: ego.speed,
        light_state,
        tp_mode: mode,
        tps_raw,
        tps_norm,
    }
}

fn nearest_light_state(lights: &[VisibleLight], ego_pose: Pose) -> LightObs {
    lights
        .iter()
        .min_by(|a, b| {
            let da = a.ref_point.dist(ego_pose.position);
            let db = b.ref_point.dist(ego_pose.position);
            da.partial_cmp(&db).unwrap()
        })
        .map(|l| match l.phase {
            crate::sim::LightPhase::Green => LightObs::Green,
            _ => LightObs::Red,
        })
        .unwrap_or(LightObs::None)
}

/// Occluder set for visibility checks: every other actor's box plus the
/// map's static obstacles.
pub(crate) fn occluders<'w>(
    world: &'w WorldState,
    map: &'w MapSpec,
    exclude_actor: u32,
) -> impl Iterator<Item = crate::world::OrientedBox> + 'w {
    world
        .actors
        .iter()
        .filter(move |a| a.id != exclude_actor && a.id != world.ego_id)
        .map(|a| a.footprint())
        .chain(map.static_obstacles.iter().copied())
}

/// Footprint sample points used by the visibility predicate: 4 corners + centroid.
pub(crate) fn sample_points(actor: &ActorState) -> Vec<Vec2> {
    let fp = actor.footprint();
    let mut pts = fp.corners().to_vec();
    pts.push(fp.center);
    pts
}
