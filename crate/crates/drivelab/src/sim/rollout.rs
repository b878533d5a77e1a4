//! The closed-loop rollout harness: steps a pilot against the world until
//! route completion, deviation, blockage, or timeout, logging every tick.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::io::json_hash;
use crate::rng::{child_seed, stream};
use crate::world::route::{TpActive, TpTracker};
use crate::world::{project_onto_route, PlannedRoute, Pose, TargetPoint};

use super::{
    spawn_scenario, ActorKind, ActorState, Behavior, Conditions, Control, LaneFollowState,
    ScenarioError, ScenarioSpec, Sim, SimParams, WorldState,
};

/// TP switch radius when the policy sees a single target point.
pub const TP_SWITCH_RADIUS_ONE: f64 = 10.0;
/// Reduced switch radius for the three-point representation.
pub const TP_SWITCH_RADIUS_THREE: f64 = 3.0;

pub const ROLLOUT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    RouteComplete,
    RouteDeviation,
    Blocked,
    Timeout,
    AgentFailure,
}

/// What the agent reports about one decision, for the log.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct AgentTickSummary {
    pub agent: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target_speed: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub speed_reason: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub visible_actor_ids: Option<Vec<u32>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub waypoints: Option<Vec<[f64; 2]>>,
}

/// One tick of the log. Field order is part of the file format.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TickRecord {
    pub tick: u64,
    pub state_hash: String,
    pub ego_pose: Pose,
    pub ego_speed: f64,
    pub control: Control,
    pub route_s: f64,
    pub lateral: f64,
    /// Active TP set under three-TP switching (prev/current/future).
    pub tps: TpActive,
    /// Active TP set under one-TP switching (wider radius).
    pub tps_one: TpActive,
    pub summary: AgentTickSummary,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RolloutLog {
    pub schema_version: u32,
    pub route_id: String,
    pub seed: u64,
    pub termination: Termination,
    pub records: Vec<TickRecord>,
}

/// A finished rollout: the serializable log plus the full world trace used
/// by evaluation.
pub struct Rollout {
    pub log: RolloutLog,
    pub trace: Vec<WorldState>,
}

impl Rollout {
    pub fn driven_km(&self) -> f64 {
        let mut total = 0.0;
        for w in self.trace.windows(2) {
            total += w[0].ego().pose.position.dist(w[1].ego().pose.position);
        }
        total / 1000.0
    }
}

#[derive(Debug, thiserror::Error)]
#[error("agent failed: {0}")]
pub struct PilotError(pub String);

pub struct PilotDecision {
    pub control: Control,
    pub summary: AgentTickSummary,
}

/// Everything a pilot may look at besides the world itself.
pub struct PilotCtx<'a> {
    pub params: &'a SimParams,
    pub map: &'a crate::world::MapSpec,
    pub route: &'a PlannedRoute,
    pub tps: &'a [TargetPoint],
    pub tp_one: TpActive,
    pub tp_three: TpActive,
    pub ego_route_s: f64,
    pub ego_lateral: f64,
}

pub trait Pilot {
    fn decide(&mut self, world: &WorldState, ctx: &PilotCtx) -> Result<PilotDecision, PilotError>;
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RolloutConfig {
    pub route_id: String,
    pub seed: u64,
    pub max_ticks: u64,
    pub conditions: Conditions,
    pub ambient_vehicles: u32,
}

/// Runs the closed loop. Deterministic: `(map, route, scenarios, config,
/// pilot)` fully determine the result, bitwise.
pub fn run_rollout(
    sim: &Sim,
    pilot: &mut dyn Pilot,
    route: &PlannedRoute,
    scenarios: &[ScenarioSpec],
    config: &RolloutConfig,
) -> Result<Rollout, ScenarioError> {
    let dense = &route.dense;
    let start_dir = dense.direction_at(0.0);
    let ego_pose = Pose {
        position: dense.point_at(0.0),
        yaw: start_dir.angle(),
    };
    let mut world = sim.initial_world(ego_pose, config.conditions);
    spawn_ambient(sim, &mut world, config);
    for spec in scenarios {
        world = spawn_scenario(sim, &world, dense, spec, config.seed)?;
    }

    let tps = crate::world::sample_target_points(dense, crate::world::TP_INTERVAL);
    let mut tracker_one = TpTracker::new(TP_SWITCH_RADIUS_ONE);
    let mut tracker_three = TpTracker::new(TP_SWITCH_RADIUS_THREE);

    let mut records = Vec::new();
    let mut trace = Vec::new();
    let mut standing_time = 0.0;
    let mut termination = Termination::Timeout;

    for tick in 0..config.max_ticks {
        let ego = world.ego().clone();
        let (route_s, lateral) = project_onto_route(dense, ego.pose.position);
        let tp_one = tracker_one.advance(&tps, ego.pose.position);
        let tp_three = tracker_three.advance(&tps, ego.pose.position);
        let ctx = PilotCtx {
            params: &sim.params,
            map: sim.map,
            route,
            tps: &tps,
            tp_one,
            tp_three,
            ego_route_s: route_s,
            ego_lateral: lateral,
        };
        let (control, summary, failed) = match pilot.decide(&world, &ctx) {
            Ok(d) => (d.control, d.summary, false),
            Err(e) => (
                Control::brake(&sim.params),
                AgentTickSummary {
                    agent: format!("failed: {e}"),
                    ..Default::default()
                },
                true,
            ),
        };
        records.push(TickRecord {
            tick,
            state_hash: json_hash(&world),
            ego_pose: ego.pose,
            ego_speed: ego.speed,
            control,
            route_s,
            lateral,
            tps: tp_three,
            tps_one: tp_one,
            summary,
        });
        trace.push(world.clone());

        if failed {
            termination = Termination::AgentFailure;
            break;
        }
        let complete = route_s >= dense.total_length - 0.6 && lateral.abs() <= 3.0;
        if complete {
            termination = Termination::RouteComplete;
            break;
        }
        if lateral.abs() > sim.params.deviation_threshold {
            termination = Termination::RouteDeviation;
            break;
        }
        if ego.speed < sim.params.blocked_speed {
            standing_time += sim.params.dt;
        } else {
            standing_time = 0.0;
        }
        if standing_time >= sim.params.blocked_duration {
            termination = Termination::Blocked;
            break;
        }
        world = sim.step(&world, control);
    }

    Ok(Rollout {
        log: RolloutLog {
            schema_version: ROLLOUT_SCHEMA_VERSION,
            route_id: config.route_id.clone(),
            seed: config.seed,
            termination,
            records,
        },
        trace,
    })
}

/// Seeds lane-following background vehicles away from the ego.
fn spawn_ambient(sim: &Sim, world: &mut WorldState, config: &RolloutConfig) {
    if config.ambient_vehicles == 0 {
        return;
    }
    let mut rng = stream(config.seed, "ambient");
    let ego_pos = world.ego().pose.position;
    let mut candidates: Vec<&crate::world::LaneSpec> = sim
        .map
        .lanes
        .iter()
        .filter(|l| sim.map.junction_of_lane(l.id).is_none() && l.length() >= 20.0)
        .collect();
    candidates.sort_by_key(|l| l.id);
    if candidates.is_empty() {
        return;
    }
    let mut placed = 0;
    for attempt in 0..config.ambient_vehicles * 8 {
        if placed >= config.ambient_vehicles {
            break;
        }
        let lane = candidates[rng.gen_range(0..candidates.len())];
        let s = rng.gen_range(5.0..lane.length() - 5.0);
        let pos = lane.point_at(s);
        if pos.dist(ego_pos) < 20.0 {
            continue;
        }
        let too_close = world
            .actors
            .iter()
            .any(|a| a.pose.position.dist(pos) < 14.0);
        if too_close {
            continue;
        }
        let id = world.next_actor_id();
        world.actors.push(ActorState {
            id,
            kind: ActorKind::Vehicle,
            pose: Pose {
                position: pos,
                yaw: lane.direction_at(s).angle(),
            },
            speed: lane.speed_limit * 0.7,
            accel: 0.0,
            half_extent: sim.params.vehicle_half,
            lane_id: Some(lane.id),
            behavior: Behavior::LaneFollow(LaneFollowState {
                lane_id: lane.id,
                s,
                next_lane: None,
                rng_seed: child_seed(config.seed, &format!("ambient{attempt}")),
                decisions: 0,
                cleared_stop: None,
            }),
        });
        placed += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{generate_town, TownSize};
    use crate::world::{build_lane_graph, plan_route};

    struct AlwaysBrake;
    impl Pilot for AlwaysBrake {
        fn decide(
            &mut self,
            _world: &WorldState,
            ctx: &PilotCtx,
        ) -> Result<PilotDecision, PilotError> {
            Ok(PilotDecision {
                control: Control::brake(ctx.params),
                summary: AgentTickSummary {
                    agent: "scripted".into(),
                    ..Default::default()
                },
            })
        }
    }

    #[test]
    fn always_brake_gets_blocked() {
        let town = generate_town(1, TownSize::Small);
        let graph = build_lane_graph(&town).unwrap();
        let lane = &town.lanes[0];
        let start = Pose {
            position: lane.point_at(2.0),
            yaw: lane.direction_at(2.0).angle(),
        };
        let goal = Pose {
            position: lane.point_at(lane.length() - 2.0),
            yaw: lane.direction_at(lane.length() - 2.0).angle(),
        };
        let route = plan_route(&graph, &town, start, goal, 1.0).unwrap();
        let sim = Sim::new(&town);
        let config = RolloutConfig {
            route_id: "t".into(),
            seed: 3,
            max_ticks: 2000,
            conditions: Conditions::default(),
            ambient_vehicles: 0,
        };
        let rollout = run_rollout(&sim, &mut AlwaysBrake, &route, &[], &config).unwrap();
        assert_eq!(rollout.log.termination, Termination::Blocked);
        let final_s = rollout.log.records.last().unwrap().route_s;
        assert!(final_s < 1.0, "RC should be ~0, got s {final_s}");
    }

    #[test]
    fn rollouts_are_bitwise_deterministic() {
        let town = generate_town(2, TownSize::Small);
        let graph = build_lane_graph(&town).unwrap();
        let lane = &town.lanes[0];
        let start = Pose {
            position: lane.point_at(2.0),
            yaw: lane.direction_at(2.0).angle(),
        };
        let goal = Pose {
            position: lane.point_at(lane.length() - 2.0),
            yaw: lane.direction_at(lane.length() - 2.0).angle(),
        };
        let route = plan_route(&graph, &town, start, goal, 1.0).unwrap();
        let sim = Sim::new(&town);
        let config = RolloutConfig {
            route_id: "t".into(),
            seed: 9,
            max_ticks: 500,
            conditions: Conditions::default(),
            ambient_vehicles: 3,
        };
        let run = || {
            let r = run_rollout(&sim, &mut AlwaysBrake, &route, &[], &config).unwrap();
            serde_json::to_string(&r.log).unwrap()
        };
        assert_eq!(run(), run());
    }
}
