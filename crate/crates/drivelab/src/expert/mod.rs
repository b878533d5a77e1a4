//! The rule-based driving experts: a privileged baseline that plans on full
//! simulator state, and an aligned variant constrained to the state the
//! student's sensors can observe.

mod control;
mod forecast;
mod speed;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::sensing::{visible, visible_lights, SensorConfig};
use crate::sim::{
    ActorState, AgentTickSummary, Conditions, LightPhase, Pilot, PilotCtx, PilotDecision,
    PilotError, WorldState,
};
use crate::world::{DenseRoute, LaneId, MapSpec, Pose, Vec2};

pub use control::expert_control;
pub use forecast::{
    forecast_collision, inflate_tracks, tracks_constant_velocity, tracks_replay, ActorTracks,
    CollisionInfo,
};
pub use speed::{
    inflate_oncoming, junction_context, oncoming_ids, select_target_speed, JunctionCtx, SpeedDecision,
    SpeedReason,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExpertMode {
    Privileged,
    Aligned,
}

impl std::str::FromStr for ExpertMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "privileged" => Ok(ExpertMode::Privileged),
            "aligned" => Ok(ExpertMode::Aligned),
            other => Err(format!("unknown expert mode `{other}` (privileged|aligned)")),
        }
    }
}

/// Expert tuning. Every constant the speed and control rules use lives here
/// so ablations can sweep them.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExpertConfig {
    /// Forecast horizon, s.
    pub horizon_s: f64,
    /// Safety margin added to the forecast ego box, m (covers the tracking
    /// error between the route centerline and the controlled vehicle).
    pub forecast_ego_margin: f64,
    /// Target-speed proposal lattice, as fractions of the capped limit.
    pub proposal_fractions: Vec<f64>,
    /// Speed multiplier at night or in heavy rain (aligned mode).
    pub low_visibility_factor: f64,
    /// Oncoming-box inflation at unprotected turns (aligned mode).
    pub inflation_factor: f64,
    /// Hazard corridor: length = max(min_len, time_factor · v · t_react).
    pub corridor_min_len: f64,
    pub corridor_time_factor: f64,
    pub corridor_t_react: f64,
    /// Corridor width = lane width + this, m.
    pub corridor_extra_width: f64,
    /// Radius of the local traffic-flow speed estimate, m.
    pub flow_radius: f64,
    /// Same-direction cone for the flow estimate, degrees.
    pub flow_heading_max_deg: f64,
    /// Longitudinal proportional gain, 1/s.
    pub k_v: f64,
    /// Pure-pursuit lookahead = max(lookahead_min, lookahead_time · v).
    pub lookahead_min: f64,
    pub lookahead_time: f64,
    /// Extra margin added to the kinematic stop distance for regulatory stops, m.
    pub stop_margin: f64,
    /// Region around a junction center where oncoming inflation applies, m.
    pub junction_radius: f64,
    /// Lights get an occlusion test too when set (default: frustum-only).
    pub light_occlusion_check: bool,
}

impl Default for ExpertConfig {
    fn default() -> Self {
        ExpertConfig {
            horizon_s: 8.0,
            forecast_ego_margin: 0.35,
            proposal_fractions: vec![1.0, 2.0 / 3.0, 1.0 / 3.0, 0.0],
            low_visibility_factor: 0.7,
            inflation_factor: 1.5,
            corridor_min_len: 8.0,
            corridor_time_factor: 1.2,
            corridor_t_react: 1.0,
            corridor_extra_width: 1.0,
            flow_radius: 30.0,
            flow_heading_max_deg: 45.0,
            k_v: 1.5,
            lookahead_min: 3.0,
            lookahead_time: 1.0,
            stop_margin: 3.0,
            junction_radius: 40.0,
            light_occlusion_check: false,
        }
    }
}

/// A light the expert may reason about, with the stop-line point it hangs on.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ViewLight {
    pub id: u32,
    pub phase: LightPhase,
    pub ref_point: Vec2,
}

/// The state the expert plans on. In aligned mode every actor has passed the
/// student visibility predicate and lights are frustum-filtered; in
/// privileged mode the full world is present.
#[derive(Debug, Clone)]
pub struct ExpertView<'r> {
    pub mode: ExpertMode,
    pub actors: Vec<ActorState>,
    pub lights: Vec<ViewLight>,
    pub route: &'r DenseRoute,
    pub conditions: Conditions,
    pub posted_limit: f64,
}

/// Ego state the speed/control rules consume.
#[derive(Debug, Clone, Copy)]
pub struct EgoSnapshot {
    pub pose: Pose,
    pub speed: f64,
    pub route_s: f64,
}

/// Builds the expert's planning view for the current tick.
pub fn make_view<'r>(
    world: &WorldState,
    map: &MapSpec,
    route: &'r DenseRoute,
    ego_route_s: f64,
    mode: ExpertMode,
    sensor: &SensorConfig,
) -> ExpertView<'r> {
    let ego = world.ego();
    let actors: Vec<ActorState> = match mode {
        ExpertMode::Privileged => world
            .actors
            .iter()
            .filter(|a| a.id != world.ego_id)
            .cloned()
            .collect(),
        ExpertMode::Aligned => world
            .actors
            .iter()
            .filter(|a| a.id != world.ego_id && visible(ego.pose, a, world, map, sensor))
            .cloned()
            .collect(),
    };
    let lights: Vec<ViewLight> = match mode {
        ExpertMode::Privileged => {
            // All lights, each anchored at its nearest stop-line point.
            let mut out: Vec<ViewLight> = Vec::new();
            for sl in &map.stop_lines {
                let Some(light_id) = sl.light_id else { continue };
                let Some(light) = world.light(light_id) else {
                    continue;
                };
                let p = map.stop_line_position(sl);
                match out.iter_mut().find(|v| v.id == light_id) {
                    Some(existing) => {
                        if p.dist(ego.pose.position)
                            < existing.ref_point.dist(ego.pose.position)
                        {
                            existing.ref_point = p;
                        }
                    }
                    None => out.push(ViewLight {
                        id: light_id,
                        phase: light.phase,
                        ref_point: p,
                    }),
                }
            }
            out
        }
        ExpertMode::Aligned => visible_lights(ego.pose, world, map, sensor)
            .into_iter()
            .map(|l| ViewLight {
                id: l.id,
                phase: l.phase,
                ref_point: l.ref_point,
            })
            .collect(),
    };
    let posted_limit = map
        .lane(route.lane_at(ego_route_s))
        .map(|l| l.speed_limit)
        .unwrap_or(8.33);
    ExpertView {
        mode,
        actors,
        lights,
        route,
        conditions: world.conditions,
        posted_limit,
    }
}

/// Per-rollout scratch the expert carries between ticks: stop-sign lines the
/// ego has already stopped for. Keyed by (lane id, arc-position bits).
#[derive(Debug, Clone, Default)]
pub struct ExpertScratch {
    pub cleared_stops: BTreeSet<(LaneId, u64)>,
}

/// The expert as a rollout pilot.
pub struct ExpertPilot {
    pub mode: ExpertMode,
    pub config: ExpertConfig,
    pub sensor: SensorConfig,
    pub scratch: ExpertScratch,
}

impl ExpertPilot {
    pub fn new(mode: ExpertMode, sensor: SensorConfig) -> ExpertPilot {
        ExpertPilot {
            mode,
            config: ExpertConfig::default(),
            sensor,
            scratch: ExpertScratch::default(),
        }
    }

    /// One full decision against an arbitrary world (shared by `decide` and
    /// the visibility-invariance harness).
    pub fn control_for(
        &mut self,
        world: &WorldState,
        map: &MapSpec,
        route: &crate::world::PlannedRoute,
        ego_route_s: f64,
        sim: &crate::sim::Sim,
    ) -> (crate::sim::Control, SpeedDecision, Vec<u32>) {
        let ego_actor = world.ego();
        let ego = EgoSnapshot {
            pose: ego_actor.pose,
            speed: ego_actor.speed,
            route_s: ego_route_s,
        };
        let view = make_view(world, map, &route.dense, ego_route_s, self.mode, &self.sensor);
        let visible_ids: Vec<u32> = view.actors.iter().map(|a| a.id).collect();
        let jctx = junction_context(map, &route.dense, ego_route_s, &self.config);
        let decision = select_target_speed(
            &view,
            map,
            &ego,
            &mut self.scratch,
            &self.config,
            sim,
            world,
            jctx.as_ref(),
        );
        let control = expert_control(&view, &ego, &decision, &self.config, &sim.params);
        (control, decision, visible_ids)
    }
}

impl Pilot for ExpertPilot {
    fn decide(&mut self, world: &WorldState, ctx: &PilotCtx) -> Result<PilotDecision, PilotError> {
        let sim = crate::sim::Sim {
            map: ctx.map,
            params: ctx.params.clone(),
        };
        let (control, decision, visible_ids) =
            self.control_for(world, ctx.map, ctx.route, ctx.ego_route_s, &sim);
        Ok(PilotDecision {
            control,
            summary: AgentTickSummary {
                agent: match self.mode {
                    ExpertMode::Privileged => "expert:privileged".into(),
                    ExpertMode::Aligned => "expert:aligned".into(),
                },
                target_speed: Some(decision.target_speed),
                speed_reason: Some(format!("{:?}", decision.reason)),
                visible_actor_ids: Some(visible_ids),
                waypoints: None,
            },
        })
    }
}
