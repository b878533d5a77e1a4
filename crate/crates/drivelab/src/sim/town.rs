//! Procedural grid towns: jittered intersection grids, 1–3-lane roads split
//! into sub-50 m lane records, junction connectors with priorities, traffic
//! lights, stop signs, and parked obstacles.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::rng::stream;
use crate::world::geometry::{wrap_angle, OrientedBox, Vec2};
use crate::world::map::{
    JunctionSpec, LaneId, LaneSpec, MapSpec, PriorityRelation, StopLineSpec, MAP_SCHEMA_VERSION,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TownSize {
    /// 2×2 intersections, ~400 m of road.
    Small,
    /// 4×4 intersections, ~4 km of road.
    Large,
}

impl std::str::FromStr for TownSize {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "small" => Ok(TownSize::Small),
            "large" => Ok(TownSize::Large),
            other => Err(format!("unknown town size `{other}` (small|large)")),
        }
    }
}

const LANE_WIDTH: f64 = 3.5;
const ROAD_LIMIT: f64 = 8.33;
const TURN_LIMIT: f64 = 5.0;
const JUNCTION_RADIUS: f64 = 14.0;
const MAX_CHUNK: f64 = 50.0;

/// Grid-town generator; byte-deterministic in `(seed, size)`.
pub fn generate_town(seed: u64, size: TownSize) -> MapSpec {
    let (rows, cols, base_spacing) = match size {
        TownSize::Small => (2usize, 2usize, 100.0),
        TownSize::Large => (4, 4, 165.0),
    };
    let mut rng = stream(seed, "town");

    // Jittered grid coordinates in 0.5 m steps.
    let jitter = |rng: &mut rand_chacha::ChaCha12Rng| -> f64 {
        (rng.gen_range(-20i32..=20) as f64) * 0.5
    };
    let mut xs = vec![0.0f64];
    for j in 1..cols {
        xs.push(xs[j - 1] + base_spacing + jitter(&mut rng));
    }
    let mut ys = vec![0.0f64];
    for i in 1..rows {
        ys.push(ys[i - 1] + base_spacing + jitter(&mut rng));
    }
    let node = |i: usize, j: usize| Vec2::new(xs[j], ys[i]);

    // Roads between adjacent nodes: horizontal first, then vertical.
    struct Road {
        a: (usize, usize),
        b: (usize, usize),
        lanes_per_dir: usize,
    }
    let mut roads = Vec::new();
    for i in 0..rows {
        for j in 0..cols.saturating_sub(1) {
            roads.push(Road {
                a: (i, j),
                b: (i, j + 1),
                lanes_per_dir: 0,
            });
        }
    }
    for i in 0..rows.saturating_sub(1) {
        for j in 0..cols {
            roads.push(Road {
                a: (i, j),
                b: (i + 1, j),
                lanes_per_dir: 0,
            });
        }
    }
    for road in &mut roads {
        let roll: u32 = rng.gen_range(0..100);
        road.lanes_per_dir = if roll < 45 {
            1
        } else if roll < 90 {
            2
        } else {
            3
        };
    }

    let mut lanes: Vec<LaneSpec> = Vec::new();
    let mut next_id: LaneId = 0;
    let alloc = |lanes: &mut Vec<LaneSpec>, spec: LaneSpec| -> LaneId {
        let id = spec.id;
        lanes.push(spec);
        id
    };

    // Per road, per direction (0 = a->b, 1 = b->a), per lane index, chunks.
    let mut road_lanes: Vec<[Vec<Vec<LaneId>>; 2]> = Vec::new();
    for road in &roads {
        let pa = node(road.a.0, road.a.1);
        let pb = node(road.b.0, road.b.1);
        let mut both = [Vec::new(), Vec::new()];
        for (dir_idx, (from, to)) in [(pa, pb), (pb, pa)].iter().enumerate() {
            let u = (*to - *from).normalized();
            let right = Vec2::new(u.y, -u.x);
            let start = *from + u * JUNCTION_RADIUS;
            let end = *to - u * JUNCTION_RADIUS;
            let len = start.dist(end);
            let n_chunks = (len / MAX_CHUNK).ceil().max(1.0) as usize;
            let mut dir_lanes = Vec::new();
            for k in 0..road.lanes_per_dir {
                let offset = right * (LANE_WIDTH * (k as f64 + 0.5));
                let mut chunk_ids = Vec::new();
                for c in 0..n_chunks {
                    let t0 = c as f64 / n_chunks as f64;
                    let t1 = (c + 1) as f64 / n_chunks as f64;
                    let p0 = start.lerp(end, t0) + offset;
                    let p1 = start.lerp(end, t1) + offset;
                    let id = next_id;
                    next_id += 1;
                    chunk_ids.push(alloc(
                        &mut lanes,
                        LaneSpec {
                            id,
                            centerline: vec![p0, p1],
                            width: LANE_WIDTH,
                            speed_limit: ROAD_LIMIT,
                            successors: vec![],
                            predecessors: vec![],
                            left_neighbor: None,
                            right_neighbor: None,
                        },
                    ));
                }
                dir_lanes.push(chunk_ids);
            }
            both[dir_idx] = dir_lanes;
        }
        road_lanes.push(both);
    }

    // Wire chunk chains and same-direction neighbors.
    let lane_index = |lanes: &Vec<LaneSpec>, id: LaneId| -> usize {
        lanes.iter().position(|l| l.id == id).expect("lane exists")
    };
    for both in &road_lanes {
        for dir_lanes in both {
            for (k, chunks) in dir_lanes.iter().enumerate() {
                for (c, &id) in chunks.iter().enumerate() {
                    if c + 1 < chunks.len() {
                        let next = chunks[c + 1];
                        let i = lane_index(&lanes, id);
                        lanes[i].successors.push(next);
                        let n = lane_index(&lanes, next);
                        lanes[n].predecessors.push(id);
                    }
                    let i = lane_index(&lanes, id);
                    if k > 0 {
                        lanes[i].left_neighbor = Some(dir_lanes[k - 1][c]);
                    }
                    if k + 1 < dir_lanes.len() {
                        lanes[i].right_neighbor = Some(dir_lanes[k + 1][c]);
                    }
                }
            }
        }
    }

    // Junction connectors.
    #[derive(Clone)]
    struct Approach {
        /// Heading of traffic arriving at / leaving the node.
        heading: Vec2,
        /// Incoming lanes: last chunks, index = lane k. Empty for departures-only.
        incoming: Vec<LaneId>,
        /// Outgoing lanes: first chunks.
        outgoing: Vec<LaneId>,
        road_idx: usize,
    }

    let mut junctions = Vec::new();
    let mut stop_lines = Vec::new();
    let mut connector_meta: Vec<(LaneId, usize, f64, usize)> = Vec::new(); // (id, junction, turn, approach road)

    for i in 0..rows {
        for j in 0..cols {
            let jid = (i * cols + j) as u32;
            let center = node(i, j);
            let mut approaches: Vec<Approach> = Vec::new();
            for (ri, road) in roads.iter().enumerate() {
                let (into_dir, out_dir) = if road.b == (i, j) {
                    (0usize, 1usize)
                } else if road.a == (i, j) {
                    (1usize, 0usize)
                } else {
                    continue;
                };
                let pa = node(road.a.0, road.a.1);
                let pb = node(road.b.0, road.b.1);
                let u_in = if into_dir == 0 {
                    (pb - pa).normalized()
                } else {
                    (pa - pb).normalized()
                };
                let incoming = road_lanes[ri][into_dir]
                    .iter()
                    .map(|chunks| *chunks.last().expect("chunks"))
                    .collect();
                let outgoing = road_lanes[ri][out_dir]
                    .iter()
                    .map(|chunks| chunks[0])
                    .collect();
                approaches.push(Approach {
                    heading: u_in,
                    incoming,
                    outgoing,
                    road_idx: ri,
                });
            }
            let degree = approaches.len();
            if degree == 0 {
                continue;
            }

            let mut junction_lanes = Vec::new();
            for (ai, app) in approaches.iter().enumerate() {
                for (k, &in_lane) in app.incoming.iter().enumerate() {
                    let mut targets: Vec<(usize, LaneId, f64)> = Vec::new();
                    for dep in &approaches {
                        if dep.road_idx == app.road_idx {
                            continue;
                        }
                        if dep.outgoing.is_empty() {
                            continue;
                        }
                        let jt = k.min(dep.outgoing.len() - 1);
                        let out_lane = dep.outgoing[jt];
                        let a_end = lanes[lane_index(&lanes, in_lane)]
                            .centerline
                            .last()
                            .copied()
                            .unwrap();
                        let b_start = lanes[lane_index(&lanes, out_lane)].centerline[0];
                        let da = app.heading;
                        let li = lane_index(&lanes, out_lane);
                        let db = (lanes[li].centerline[1] - lanes[li].centerline[0]).normalized();
                        let turn = wrap_angle(db.angle() - da.angle());
                        targets.push((lane_index(&lanes, out_lane), out_lane, turn));
                        let pts = connector_polyline(a_end, da, b_start, db);
                        let limit = if turn.abs() < std::f64::consts::FRAC_PI_6 {
                            ROAD_LIMIT
                        } else {
                            TURN_LIMIT
                        };
                        let id = next_id;
                        next_id += 1;
                        alloc(
                            &mut lanes,
                            LaneSpec {
                                id,
                                centerline: pts,
                                width: LANE_WIDTH,
                                speed_limit: limit,
                                successors: vec![out_lane],
                                predecessors: vec![in_lane],
                                left_neighbor: None,
                                right_neighbor: None,
                            },
                        );
                        let ii = lane_index(&lanes, in_lane);
                        lanes[ii].successors.push(id);
                        let oi = lane_index(&lanes, out_lane);
                        lanes[oi].predecessors.push(id);
                        junction_lanes.push(id);
                        connector_meta.push((id, jid as usize, turn, ai));
                    }
                    let _ = targets;
                }
            }

            // Control type: lights, stop signs on a minor axis, or nothing.
            let signal_roll: f64 = rng.gen();
            let signalized = match degree {
                d if d >= 3 => signal_roll < 0.6,
                2 => signal_roll < 0.5,
                _ => false,
            };
            let mut minor_axis_is_ew = false;
            let mut stop_controlled = false;
            if signalized {
                for app in &approaches {
                    let group = if app.heading.x.abs() > app.heading.y.abs() {
                        1
                    } else {
                        0
                    };
                    let light_id = jid * 2 + group;
                    for &in_lane in &app.incoming {
                        let li = lane_index(&lanes, in_lane);
                        stop_lines.push(StopLineSpec {
                            lane_id: in_lane,
                            s: lanes[li].length(),
                            light_id: Some(light_id),
                        });
                    }
                }
            } else if degree >= 3 {
                stop_controlled = rng.gen::<f64>() < 0.7;
                minor_axis_is_ew = rng.gen::<f64>() < 0.5;
                if stop_controlled {
                    for app in &approaches {
                        let is_ew = app.heading.x.abs() > app.heading.y.abs();
                        if is_ew == minor_axis_is_ew {
                            for &in_lane in &app.incoming {
                                let li = lane_index(&lanes, in_lane);
                                stop_lines.push(StopLineSpec {
                                    lane_id: in_lane,
                                    s: lanes[li].length(),
                                    light_id: None,
                                });
                            }
                        }
                    }
                }
            }

            // Priorities among crossing connectors of this junction.
            let mut priorities: Vec<PriorityRelation> = Vec::new();
            let metas: Vec<_> = connector_meta
                .iter()
                .filter(|(_, jm, _, _)| *jm == jid as usize)
                .cloned()
                .collect();
            for (id_a, _, turn_a, app_a) in &metas {
                let mut yields = Vec::new();
                for (id_b, _, turn_b, app_b) in &metas {
                    if app_a == app_b || id_a == id_b {
                        continue;
                    }
                    let la = &lanes[lane_index(&lanes, *id_a)];
                    let lb = &lanes[lane_index(&lanes, *id_b)];
                    if !polylines_cross(&la.centerline, &lb.centerline) {
                        continue;
                    }
                    let ha = approaches[*app_a].heading;
                    let hb = approaches[*app_b].heading;
                    let opposite = ha.dot(hb) < -0.7;
                    let a_left = *turn_a > std::f64::consts::FRAC_PI_6;
                    let b_through = turn_b.abs() < std::f64::consts::FRAC_PI_6
                        || *turn_b < -std::f64::consts::FRAC_PI_6;
                    if opposite && a_left && b_through {
                        yields.push(*id_b);
                    } else if stop_controlled {
                        let a_is_ew = ha.x.abs() > ha.y.abs();
                        let b_is_ew = hb.x.abs() > hb.y.abs();
                        if a_is_ew == minor_axis_is_ew && b_is_ew != minor_axis_is_ew {
                            yields.push(*id_b);
                        }
                    } else if !signalized && degree == 2 && turn_a > turn_b {
                        // Corner junction: the lefter turn yields.
                        yields.push(*id_b);
                    }
                }
                if !yields.is_empty() {
                    yields.sort_unstable();
                    yields.dedup();
                    priorities.push(PriorityRelation {
                        lane: *id_a,
                        yields_to: yields,
                    });
                }
            }
            priorities.sort_by_key(|p| p.lane);
            junction_lanes.sort_unstable();
            junctions.push(JunctionSpec {
                id: jid,
                center,
                lane_ids: junction_lanes,
                priorities,
            });
        }
    }

    // Parked obstacles on road margins.
    let mut static_obstacles = Vec::new();
    for (ri, road) in roads.iter().enumerate() {
        if rng.gen::<f64>() >= 0.35 {
            continue;
        }
        let count = rng.gen_range(1..=2);
        for _ in 0..count {
            let dir_idx = rng.gen_range(0..2usize);
            let pa = node(road.a.0, road.a.1);
            let pb = node(road.b.0, road.b.1);
            let (from, to) = if dir_idx == 0 { (pa, pb) } else { (pb, pa) };
            let u = (to - from).normalized();
            let right = Vec2::new(u.y, -u.x);
            let start = from + u * JUNCTION_RADIUS;
            let end = to - u * JUNCTION_RADIUS;
            let len = start.dist(end);
            let s = rng.gen_range(0.15..0.85) * len;
            let lateral = road.lanes_per_dir as f64 * LANE_WIDTH + 2.0;
            let center = start + u * s + right * lateral;
            static_obstacles.push(OrientedBox::new(center, u.angle(), 2.4, 1.0));
        }
        let _ = ri;
    }

    let spec = MapSpec {
        schema_version: MAP_SCHEMA_VERSION,
        seed,
        lanes,
        junctions,
        static_obstacles,
        stop_lines,
    };
    debug_assert!(spec.validate().is_ok());
    spec
}

/// Connector centerline: straight sampling when headings agree, otherwise a
/// quadratic Bezier through the guide-line intersection.
fn connector_polyline(a: Vec2, da: Vec2, b: Vec2, db: Vec2) -> Vec<Vec2> {
    let denom = da.cross(db);
    let pts: Vec<Vec2> = if denom.abs() < 0.05 {
        let n = ((a.dist(b) / 3.0).ceil() as usize).max(1);
        (0..=n).map(|i| a.lerp(b, i as f64 / n as f64)).collect()
    } else {
        let t = (b - a).cross(db) / denom;
        let c = a + da * t;
        let n = 12usize;
        (0..=n)
            .map(|i| {
                let t = i as f64 / n as f64;
                let p0 = a.lerp(c, t);
                let p1 = c.lerp(b, t);
                p0.lerp(p1, t)
            })
            .collect()
    };
    // Strictly increasing arc length is a schema invariant.
    let mut out: Vec<Vec2> = Vec::with_capacity(pts.len());
    for p in pts {
        if out.last().map_or(true, |q: &Vec2| q.dist(p) > 1e-6) {
            out.push(p);
        }
    }
    if out.len() < 2 {
        out = vec![a, b];
    }
    out
}

fn polylines_cross(a: &[Vec2], b: &[Vec2]) -> bool {
    for wa in a.windows(2) {
        for wb in b.windows(2) {
            if segments_intersect(wa[0], wa[1], wb[0], wb[1]) {
                return true;
            }
        }
    }
    false
}

fn segments_intersect(p1: Vec2, p2: Vec2, q1: Vec2, q2: Vec2) -> bool {
    let d1 = (p2 - p1).cross(q1 - p1);
    let d2 = (p2 - p1).cross(q2 - p1);
    let d3 = (q2 - q1).cross(p1 - q1);
    let d4 = (q2 - q1).cross(p2 - q1);
    (d1 * d2 < 0.0) && (d3 * d4 < 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::build_lane_graph;
    use std::collections::BTreeSet;

    #[test]
    fn same_seed_identical_bytes() {
        let a = serde_json::to_string(&generate_town(3, TownSize::Small)).unwrap();
        let b = serde_json::to_string(&generate_town(3, TownSize::Small)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn different_seeds_differ() {
        let mut blobs = BTreeSet::new();
        for seed in 0..10u64 {
            blobs.insert(serde_json::to_string(&generate_town(seed, TownSize::Small)).unwrap());
        }
        assert_eq!(blobs.len(), 10);
    }

    #[test]
    fn generated_towns_validate_and_build_graphs() {
        for seed in [0u64, 1, 7] {
            for size in [TownSize::Small, TownSize::Large] {
                let town = generate_town(seed, size);
                town.validate().expect("valid town");
                let graph = build_lane_graph(&town).expect("graph builds");
                assert_eq!(graph.node_count(), town.lanes.len());
            }
        }
    }

    #[test]
    fn total_road_length_near_target() {
        let small = generate_town(1, TownSize::Small);
        let small_len: f64 = small
            .lanes
            .iter()
            .filter(|l| small.junction_of_lane(l.id).is_none())
            .filter(|l| l.left_neighbor.is_none()) // innermost lane per direction
            .map(|l| l.length())
            .sum::<f64>()
            / 2.0; // both directions share the road
        assert!(
            (250.0..700.0).contains(&small_len),
            "small road length {small_len}"
        );
        let large = generate_town(1, TownSize::Large);
        let large_len: f64 = large
            .lanes
            .iter()
            .filter(|l| large.junction_of_lane(l.id).is_none())
            .filter(|l| l.left_neighbor.is_none())
            .map(|l| l.length())
            .sum::<f64>()
            / 2.0;
        assert!(
            (2500.0..6000.0).contains(&large_len),
            "large road length {large_len}"
        );
    }
}
