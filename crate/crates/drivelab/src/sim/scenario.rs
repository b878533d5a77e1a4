//! Scenario injection: desk-scale hazard templates placed along a route.

use serde::{Deserialize, Serialize};

use crate::world::{DenseRoute, LaneId, MapSpec, Pose, Vec2};

use super::{
    ActorKind, ActorState, Behavior, LaneFollowState, LeadBrakePhase, LeadBrakeState,
    PedestrianState, ScriptedVehicleState, Sim, Trigger, WorldState,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    LeadVehicleBrake,
    OccludedPedestrianCross,
    UnprotectedLeft,
    LaneChangeRequired,
    RedLight,
    RearJaywalker,
}

/// One scripted hazard. `trigger_s` is the route arc position the scenario
/// anchors to; the remaining parameters refine speeds and placements.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub kind: ScenarioKind,
    pub trigger_s: f64,
    /// Script speed, m/s (lead vehicle cruise, pedestrian walk, oncoming car).
    #[serde(default)]
    pub speed: Option<f64>,
    /// Placement tweak, meters; meaning is kind-specific.
    #[serde(default)]
    pub offset: Option<f64>,
    /// Ego proximity that arms the script, m.
    #[serde(default)]
    pub trigger_distance: Option<f64>,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("trigger_s {trigger_s} outside route of length {route_len}")]
    TriggerOutsideRoute { trigger_s: f64, route_len: f64 },
    #[error("scenario {kind:?} needs {what} near trigger_s {trigger_s}")]
    MissingContext {
        kind: ScenarioKind,
        what: &'static str,
        trigger_s: f64,
    },
}

/// Per-rollout scripting state carried inside the world.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum ScenarioRuntime {
    RedLightHold {
        light_id: u32,
        line_pos: Vec2,
        stopped_time: f64,
        /// Set when the ego first approaches the line; the hold expires a
        /// fixed time later so queued traffic cannot deadlock the route.
        armed_at: Option<f64>,
        released: bool,
    },
}

/// Places the scenario's actors and scripting into the world.
pub fn spawn_scenario(
    sim: &Sim,
    world: &WorldState,
    route: &DenseRoute,
    spec: &ScenarioSpec,
    _rng_seed: u64,
) -> Result<WorldState, ScenarioError> {
    if spec.trigger_s < 0.0 || spec.trigger_s > route.total_length {
        return Err(ScenarioError::TriggerOutsideRoute {
            trigger_s: spec.trigger_s,
            route_len: route.total_length,
        });
    }
    let mut next = world.clone();
    let map = sim.map;
    let anchor = route.point_at(spec.trigger_s);
    let dir = route.direction_at(spec.trigger_s);
    let right = Vec2::new(dir.y, -dir.x);

    match spec.kind {
        ScenarioKind::LeadVehicleBrake => {
            let lane_id = route.lane_at(spec.trigger_s);
            let lane = map
                .lane(lane_id)
                .ok_or(ScenarioError::MissingContext {
                    kind: spec.kind,
                    what: "a route lane",
                    trigger_s: spec.trigger_s,
                })?;
            let (s_on_lane, _) = lane.project(anchor);
            let cruise = spec.speed.unwrap_or(6.0);
            let id = next.next_actor_id();
            next.actors.push(ActorState {
                id,
                kind: ActorKind::Vehicle,
                pose: Pose {
                    position: lane.point_at(s_on_lane),
                    yaw: lane.direction_at(s_on_lane).angle(),
                },
                speed: cruise,
                accel: 0.0,
                half_extent: sim.params.vehicle_half,
                lane_id: Some(lane_id),
                behavior: Behavior::LeadBrake(LeadBrakeState {
                    follow: LaneFollowState {
                        lane_id,
                        s: s_on_lane,
                        next_lane: None,
                        rng_seed: spec.seed,
                        decisions: 0,
                        cleared_stop: None,
                    },
                    trigger_distance: spec.trigger_distance.unwrap_or(25.0),
                    hold_s: 4.0,
                    phase: LeadBrakePhase::Cruise,
                }),
            });
        }
        ScenarioKind::OccludedPedestrianCross => {
            let lane_id = route.lane_at(spec.trigger_s);
            let lane_width = map.lane(lane_id).map(|l| l.width).unwrap_or(3.5);
            // Parked truck on the right margin just before the crossing point.
            let truck_lateral = lane_width * 0.5 + spec.offset.unwrap_or(1.4) + 1.3;
            let truck_center = anchor + right * truck_lateral;
            let truck_id = next.next_actor_id();
            next.actors.push(ActorState {
                id: truck_id,
                kind: ActorKind::Static,
                pose: Pose {
                    position: truck_center,
                    yaw: dir.angle(),
                },
                speed: 0.0,
                accel: 0.0,
                half_extent: Vec2::new(3.4, 1.3),
                lane_id: None,
                behavior: Behavior::Static,
            });
            // Pedestrian hidden just downstream of the truck, crossing left.
            let ped_start = anchor + dir * 4.6 + right * truck_lateral;
            let ped_end = anchor + dir * 4.6 - right * (lane_width * 1.5);
            let walk = spec.speed.unwrap_or(1.5);
            let ped_id = next.next_actor_id();
            next.actors.push(ActorState {
                id: ped_id,
                kind: ActorKind::Pedestrian,
                pose: Pose {
                    position: ped_start,
                    yaw: (ped_end - ped_start).angle(),
                },
                speed: 0.0,
                accel: 0.0,
                half_extent: sim.params.pedestrian_half,
                lane_id: None,
                behavior: Behavior::Pedestrian(PedestrianState {
                    path: vec![ped_start, ped_end],
                    progress: 0.0,
                    walk_speed: walk,
                    trigger: Trigger::EgoWithin {
                        point: anchor,
                        distance: spec.trigger_distance.unwrap_or(22.0),
                    },
                    started: false,
                }),
            });
        }
        ScenarioKind::UnprotectedLeft => {
            // The route's left-turn connector at/after trigger_s.
            let connector = find_left_turn_connector(map, route, spec.trigger_s).ok_or(
                ScenarioError::MissingContext {
                    kind: spec.kind,
                    what: "a left-turn junction connector on the route",
                    trigger_s: spec.trigger_s,
                },
            )?;
            let junction = map
                .junction_of_lane(connector)
                .expect("connector belongs to a junction");
            let yields = junction
                .priorities
                .iter()
                .find(|p| p.lane == connector)
                .map(|p| p.yields_to.clone())
                .unwrap_or_default();
            let oncoming_connector =
                yields
                    .first()
                    .copied()
                    .ok_or(ScenarioError::MissingContext {
                        kind: spec.kind,
                        what: "an oncoming connector with priority",
                        trigger_s: spec.trigger_s,
                    })?;
            let feeder = map
                .lane(oncoming_connector)
                .and_then(|c| c.predecessors.first().copied())
                .ok_or(ScenarioError::MissingContext {
                    kind: spec.kind,
                    what: "a feeder lane for the oncoming connector",
                    trigger_s: spec.trigger_s,
                })?;
            let exit = map
                .lane(oncoming_connector)
                .and_then(|c| c.successors.first().copied())
                .unwrap_or(oncoming_connector);
            let speed = spec.speed.unwrap_or(6.5);
            let trigger_distance = spec.trigger_distance.unwrap_or(35.0);
            // Spawn back on the feeder so both arrive at the junction together.
            let feeder_lane = map.lane(feeder).expect("feeder exists");
            let back = (speed * trigger_distance / 7.0 + spec.offset.unwrap_or(0.0))
                .min(feeder_lane.length() - 1.0)
                .max(2.0);
            let s0 = feeder_lane.length() - back;
            let id = next.next_actor_id();
            next.actors.push(ActorState {
                id,
                kind: ActorKind::Vehicle,
                pose: Pose {
                    position: feeder_lane.point_at(s0),
                    yaw: feeder_lane.direction_at(s0).angle(),
                },
                speed: 0.0,
                accel: 0.0,
                half_extent: sim.params.vehicle_half,
                lane_id: Some(feeder),
                behavior: Behavior::ScriptedVehicle(ScriptedVehicleState {
                    chain: vec![feeder, oncoming_connector, exit],
                    chain_idx: 0,
                    s: s0,
                    speed,
                    trigger: Trigger::EgoWithin {
                        point: junction.center,
                        distance: trigger_distance,
                    },
                    started: false,
                }),
            });
        }
        ScenarioKind::LaneChangeRequired => {
            // Block the lane the route just left, at the trigger point.
            let current = route.lane_at(spec.trigger_s);
            let lookback = (spec.trigger_s - 40.0).max(0.0);
            let before = route.lane_at(lookback);
            let blocked = pick_blocked_lane(map, current, before, route, spec.trigger_s).ok_or(
                ScenarioError::MissingContext {
                    kind: spec.kind,
                    what: "a neighbor lane the route vacated",
                    trigger_s: spec.trigger_s,
                },
            )?;
            let lane = map.lane(blocked).expect("blocked lane exists");
            let (s_on_lane, _) = lane.project(anchor);
            let id = next.next_actor_id();
            next.actors.push(ActorState {
                id,
                kind: ActorKind::Static,
                pose: Pose {
                    position: lane.point_at(s_on_lane),
                    yaw: lane.direction_at(s_on_lane).angle(),
                },
                speed: 0.0,
                accel: 0.0,
                half_extent: sim.params.vehicle_half,
                lane_id: Some(blocked),
                behavior: Behavior::Static,
            });
        }
        ScenarioKind::RedLight => {
            // Hold the next signalized light on the route red until the ego
            // has properly stopped at the line.
            let found = map
                .stop_lines
                .iter()
                .filter_map(|sl| {
                    let light = sl.light_id?;
                    let pos = map.stop_line_position(sl);
                    let (s_on_route, lat) = crate::world::project_onto_route(route, pos);
                    if lat.abs() > 3.0 || s_on_route < spec.trigger_s - 5.0 {
                        return None;
                    }
                    Some((s_on_route, light, pos))
                })
                .min_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
            let (_, light_id, line_pos) = found.ok_or(ScenarioError::MissingContext {
                kind: spec.kind,
                what: "a signalized stop line on the route",
                trigger_s: spec.trigger_s,
            })?;
            next.scripted.push(ScenarioRuntime::RedLightHold {
                light_id,
                line_pos,
                stopped_time: 0.0,
                armed_at: None,
                released: false,
            });
            if let Some(l) = next.lights.iter_mut().find(|l| l.id == light_id) {
                l.phase = super::LightPhase::Red;
                l.phase_time = 0.0;
            }
        }
        ScenarioKind::RearJaywalker => {
            let ego = world.ego();
            let back = ego.pose.position - ego.pose.heading() * spec.offset.unwrap_or(6.0);
            let side = Vec2::new(ego.pose.heading().y, -ego.pose.heading().x);
            let start = back + side * 4.0;
            let end = back - side * 4.0;
            let id = next.next_actor_id();
            next.actors.push(ActorState {
                id,
                kind: ActorKind::Pedestrian,
                pose: Pose {
                    position: start,
                    yaw: (end - start).angle(),
                },
                speed: 0.0,
                accel: 0.0,
                half_extent: sim.params.pedestrian_half,
                lane_id: None,
                behavior: Behavior::Pedestrian(PedestrianState {
                    path: vec![start, end],
                    progress: 0.0,
                    walk_speed: spec.speed.unwrap_or(1.2),
                    trigger: Trigger::Immediate,
                    started: false,
                }),
            });
        }
    }
    Ok(next)
}

/// First junction connector on the route at or after `from_s` that turns left.
pub fn find_left_turn_connector(map: &MapSpec, route: &DenseRoute, from_s: f64) -> Option<LaneId> {
    let mut s = from_s;
    while s <= route.total_length {
        let lane_id = route.lane_at(s);
        if map.junction_of_lane(lane_id).is_some() {
            if let Some(lane) = map.lane(lane_id) {
                let d0 = lane.direction_at(0.0);
                let d1 = lane.direction_at(lane.length());
                let turn = crate::world::wrap_angle(d1.angle() - d0.angle());
                if turn > std::f64::consts::FRAC_PI_6 {
                    return Some(lane_id);
                }
            }
        }
        s += 2.0;
    }
    None
}

fn pick_blocked_lane(
    map: &MapSpec,
    current: LaneId,
    before: LaneId,
    route: &DenseRoute,
    trigger_s: f64,
) -> Option<LaneId> {
    let cur = map.lane(current)?;
    // Prefer the side the route actually came from.
    let candidates = [cur.left_neighbor, cur.right_neighbor];
    for cand in candidates.into_iter().flatten() {
        if cand == before {
            return Some(cand);
        }
        // `before` may be an earlier chunk of the vacated lane's chain.
        if let Some(lane) = map.lane(cand) {
            if lane.predecessors.contains(&before) {
                return Some(cand);
            }
        }
    }
    let _ = (route, trigger_s);
    candidates.into_iter().flatten().next()
}

/// Advances scripted runtimes (light holds) by one tick.
pub(super) fn step_runtimes(sim: &Sim, world: &WorldState, next: &mut WorldState) {
    let ego = world.ego();
    let mut released_now = Vec::new();
    for rt in &mut next.scripted {
        match rt {
            ScenarioRuntime::RedLightHold {
                light_id,
                line_pos,
                stopped_time,
                armed_at,
                released,
            } => {
                if *released {
                    continue;
                }
                let dist = ego.pose.position.dist(*line_pos);
                if armed_at.is_none() && dist <= 40.0 {
                    *armed_at = Some(world.time_s);
                }
                if dist <= 14.0 && ego.speed <= 0.12 {
                    *stopped_time += sim.params.dt;
                } else {
                    *stopped_time = 0.0;
                }
                // Release after a proper stop, once the ego has passed, or
                // when the hold times out (queued traffic must drain).
                let passed = {
                    let to_line = *line_pos - ego.pose.position;
                    to_line.dot(ego.pose.heading()) < -3.0
                };
                let expired = armed_at.map_or(false, |t| world.time_s - t >= 25.0);
                if *stopped_time >= 2.0 || passed || expired {
                    *released = true;
                    released_now.push(*light_id);
                }
            }
        }
    }
    // Freshly released lights turn green and rejoin the normal schedule.
    for light_id in released_now {
        if let Some(l) = next.lights.iter_mut().find(|l| l.id == light_id) {
            l.phase = super::LightPhase::Green;
            l.phase_time = 0.0;
        }
    }
}
