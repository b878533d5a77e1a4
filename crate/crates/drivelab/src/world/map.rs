//! Map schema: lanes, junctions, static obstacles and stop lines.
//!
//! A town is a single JSON document (`town_<seed>.json`) holding these
//! records verbatim. Units are meters and radians; the frame is
//! right-handed, x-east, y-north.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::geometry::{segment_param, OrientedBox, Vec2};

pub const MAP_SCHEMA_VERSION: u32 = 1;

pub type LaneId = u32;

/// One drivable lane: a centerline polyline plus topology links.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LaneSpec {
    pub id: LaneId,
    /// Centerline points in meters, strictly increasing arc length.
    pub centerline: Vec<Vec2>,
    pub width: f64,
    pub speed_limit: f64,
    pub successors: Vec<LaneId>,
    pub predecessors: Vec<LaneId>,
    pub left_neighbor: Option<LaneId>,
    pub right_neighbor: Option<LaneId>,
}

impl LaneSpec {
    pub fn length(&self) -> f64 {
        self.centerline
            .windows(2)
            .map(|w| w[0].dist(w[1]))
            .sum()
    }

    /// Point on the centerline at arc position `s` (clamped to the lane).
    pub fn point_at(&self, s: f64) -> Vec2 {
        let mut remaining = s.max(0.0);
        for w in self.centerline.windows(2) {
            let seg = w[0].dist(w[1]);
            if remaining <= seg {
                return w[0].lerp(w[1], if seg > 0.0 { remaining / seg } else { 0.0 });
            }
            remaining -= seg;
        }
        *self.centerline.last().expect("lane has points")
    }

    /// Tangent direction at arc position `s`.
    pub fn direction_at(&self, s: f64) -> Vec2 {
        let mut remaining = s.max(0.0);
        for w in self.centerline.windows(2) {
            let seg = w[0].dist(w[1]);
            if remaining <= seg || seg <= 0.0 {
                return (w[1] - w[0]).normalized();
            }
            remaining -= seg;
        }
        let n = self.centerline.len();
        (self.centerline[n - 1] - self.centerline[n - 2]).normalized()
    }

    /// Arc position and distance of the closest centerline point to `p`.
    pub fn project(&self, p: Vec2) -> (f64, f64) {
        let mut best = (0.0, f64::MAX);
        let mut acc = 0.0;
        for w in self.centerline.windows(2) {
            let t = segment_param(w[0], w[1], p);
            let q = w[0].lerp(w[1], t);
            let d = q.dist(p);
            let seg = w[0].dist(w[1]);
            if d < best.1 {
                best = (acc + t * seg, d);
            }
            acc += seg;
        }
        best
    }
}

/// Priority relation inside a junction: `lane` must yield to each lane in
/// `yields_to` (all are junction connector lanes).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PriorityRelation {
    pub lane: LaneId,
    pub yields_to: Vec<LaneId>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JunctionSpec {
    pub id: u32,
    pub center: Vec2,
    /// Connector lanes that live inside this junction.
    pub lane_ids: Vec<LaneId>,
    pub priorities: Vec<PriorityRelation>,
}

/// Regulatory line at `s` on `lane_id`. `light_id = None` marks a stop sign.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StopLineSpec {
    pub lane_id: LaneId,
    pub s: f64,
    pub light_id: Option<u32>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MapSpec {
    pub schema_version: u32,
    pub seed: u64,
    pub lanes: Vec<LaneSpec>,
    pub junctions: Vec<JunctionSpec>,
    pub static_obstacles: Vec<OrientedBox>,
    pub stop_lines: Vec<StopLineSpec>,
}

#[derive(Debug, thiserror::Error)]
pub enum MapError {
    #[error("lane {lane} references missing lane {missing} in `{field}`")]
    DanglingLaneRef {
        lane: LaneId,
        missing: LaneId,
        field: &'static str,
    },
    #[error("lane {0} has non-positive width")]
    BadWidth(LaneId),
    #[error("lane {0} centerline needs >= 2 points with strictly increasing arc length")]
    BadCenterline(LaneId),
    #[error("junction {junction} references missing lane {missing}")]
    DanglingJunctionRef { junction: u32, missing: LaneId },
    #[error("stop line references missing lane {0}")]
    DanglingStopLineRef(LaneId),
    #[error("unsupported map schema version {0} (expected {MAP_SCHEMA_VERSION})")]
    SchemaVersion(u32),
}

impl MapSpec {
    /// Checks every structural invariant of the schema.
    pub fn validate(&self) -> Result<(), MapError> {
        if self.schema_version != MAP_SCHEMA_VERSION {
            return Err(MapError::SchemaVersion(self.schema_version));
        }
        let ids: BTreeMap<LaneId, &LaneSpec> = self.lanes.iter().map(|l| (l.id, l)).collect();
        for lane in &self.lanes {
            if lane.width <= 0.0 {
                return Err(MapError::BadWidth(lane.id));
            }
            if lane.centerline.len() < 2 {
                return Err(MapError::BadCenterline(lane.id));
            }
            for w in lane.centerline.windows(2) {
                if w[0].dist(w[1]) <= 0.0 {
                    return Err(MapError::BadCenterline(lane.id));
                }
            }
            let check = |refs: &[LaneId], field: &'static str| -> Result<(), MapError> {
                for &r in refs {
                    if !ids.contains_key(&r) {
                        return Err(MapError::DanglingLaneRef {
                            lane: lane.id,
                            missing: r,
                            field,
                        });
                    }
                }
                Ok(())
            };
            check(&lane.successors, "successors")?;
            check(&lane.predecessors, "predecessors")?;
            if let Some(n) = lane.left_neighbor {
                check(&[n], "left_neighbor")?;
            }
            if let Some(n) = lane.right_neighbor {
                check(&[n], "right_neighbor")?;
            }
        }
        for j in &self.junctions {
            for &l in j.lane_ids.iter() {
                if !ids.contains_key(&l) {
                    return Err(MapError::DanglingJunctionRef {
                        junction: j.id,
                        missing: l,
                    });
                }
            }
            for p in &j.priorities {
                for &l in std::iter::once(&p.lane).chain(p.yields_to.iter()) {
                    if !ids.contains_key(&l) {
                        return Err(MapError::DanglingJunctionRef {
                            junction: j.id,
                            missing: l,
                        });
                    }
                }
            }
        }
        for sl in &self.stop_lines {
            if !ids.contains_key(&sl.lane_id) {
                return Err(MapError::DanglingStopLineRef(sl.lane_id));
            }
        }
        Ok(())
    }

    pub fn lane(&self, id: LaneId) -> Option<&LaneSpec> {
        self.lanes.iter().find(|l| l.id == id)
    }

    /// Junction that owns the connector lane `id`, if any.
    pub fn junction_of_lane(&self, id: LaneId) -> Option<&JunctionSpec> {
        self.junctions.iter().find(|j| j.lane_ids.contains(&id))
    }

    /// Lane whose centerline is closest to `p`, with arc position and
    /// distance. Returns `None` for an empty map.
    pub fn nearest_lane(&self, p: Vec2) -> Option<(LaneId, f64, f64)> {
        let mut best: Option<(LaneId, f64, f64)> = None;
        for lane in &self.lanes {
            let (s, d) = lane.project(p);
            let better = match best {
                None => true,
                Some((_, _, bd)) => d < bd - 1e-12 || (d < bd + 1e-12 && lane.id < best.unwrap().0),
            };
            if better {
                best = Some((lane.id, s, d));
            }
        }
        best
    }

    /// True iff `p` lies within half a lane width of some lane centerline.
    pub fn on_any_lane(&self, p: Vec2) -> bool {
        self.lanes.iter().any(|lane| {
            let (_, d) = lane.project(p);
            d <= lane.width * 0.5
        })
    }

    /// World position of a stop line (point on its lane at the line's arc position).
    pub fn stop_line_position(&self, sl: &StopLineSpec) -> Vec2 {
        self.lane(sl.lane_id)
            .map(|l| l.point_at(sl.s))
            .unwrap_or(Vec2::ZERO)
    }

    /// All light ids referenced by stop lines, deduplicated and sorted.
    pub fn light_ids(&self) -> Vec<u32> {
        let mut ids: Vec<u32> = self.stop_lines.iter().filter_map(|s| s.light_id).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn straight_lane(id: LaneId, x0: f64, x1: f64, y: f64) -> LaneSpec {
        LaneSpec {
            id,
            centerline: vec![Vec2::new(x0, y), Vec2::new(x1, y)],
            width: 3.5,
            speed_limit: 8.33,
            successors: vec![],
            predecessors: vec![],
            left_neighbor: None,
            right_neighbor: None,
        }
    }

    fn tiny_map() -> MapSpec {
        MapSpec {
            schema_version: MAP_SCHEMA_VERSION,
            seed: 0,
            lanes: vec![straight_lane(0, 0.0, 50.0, 0.0)],
            junctions: vec![],
            static_obstacles: vec![],
            stop_lines: vec![],
        }
    }

    #[test]
    fn validate_accepts_simple_map() {
        assert!(tiny_map().validate().is_ok());
    }

    #[test]
    fn validate_rejects_dangling_successor() {
        let mut m = tiny_map();
        m.lanes[0].successors.push(99);
        let err = m.validate().unwrap_err();
        assert!(err.to_string().contains("99"));
    }

    #[test]
    fn validate_rejects_zero_width() {
        let mut m = tiny_map();
        m.lanes[0].width = 0.0;
        assert!(m.validate().is_err());
    }

    #[test]
    fn lane_projection_runs_along_centerline() {
        let lane = straight_lane(0, 0.0, 100.0, 0.0);
        let (s, d) = lane.project(Vec2::new(40.0, 2.0));
        assert!((s - 40.0).abs() < 1e-9);
        assert!((d - 2.0).abs() < 1e-9);
        assert!((lane.length() - 100.0).abs() < 1e-12);
        let p = lane.point_at(60.0);
        assert!((p.x - 60.0).abs() < 1e-9 && p.y.abs() < 1e-9);
    }
}
