//! Target-speed selection: caps, regulatory stops, hazard braking, and the
//! collision-checked proposal lattice.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::sim::{ActorKind, LightPhase, Sim, WorldState};
use crate::world::{project_onto_route, wrap_angle, DenseRoute, LaneId, MapSpec};

use super::forecast::{
    forecast_collision, tracks_constant_velocity, tracks_replay,
};
use super::{EgoSnapshot, ExpertConfig, ExpertMode, ExpertScratch, ExpertView};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpeedReason {
    Free,
    Follow,
    HazardBrake,
    RedLight,
    LowVisibilityCap,
    FlowCap,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpeedDecision {
    pub target_speed: f64,
    pub reason: SpeedReason,
}

/// Unprotected-turn context: the route's next junction connector that must
/// yield, with the lanes carrying the conflicting oncoming traffic.
#[derive(Debug, Clone)]
pub struct JunctionCtx {
    pub junction_id: u32,
    pub center: crate::world::Vec2,
    pub oncoming_lanes: BTreeSet<LaneId>,
    /// Route arc position where the connector ends.
    pub exit_s: f64,
}

/// Scans the route ahead for a yielding connector within 40 m.
pub fn junction_context(
    map: &MapSpec,
    route: &DenseRoute,
    ego_s: f64,
    cfg: &ExpertConfig,
) -> Option<JunctionCtx> {
    let mut s = ego_s.max(0.0);
    let scan_to = (ego_s + cfg.junction_radius).min(route.total_length);
    while s <= scan_to {
        let lane_id = route.lane_at(s);
        if let Some(junction) = map.junction_of_lane(lane_id) {
            if let Some(prio) = junction.priorities.iter().find(|p| p.lane == lane_id) {
                // Walk forward to where the route leaves this connector.
                let mut exit_s = s;
                while exit_s < route.total_length && route.lane_at(exit_s) == lane_id {
                    exit_s += 1.0;
                }
                let mut oncoming: BTreeSet<LaneId> = prio.yields_to.iter().copied().collect();
                for conflict in &prio.yields_to {
                    if let Some(lane) = map.lane(*conflict) {
                        oncoming.extend(lane.predecessors.iter().copied());
                    }
                }
                return Some(JunctionCtx {
                    junction_id: junction.id,
                    center: junction.center,
                    oncoming_lanes: oncoming,
                    exit_s,
                });
            }
        }
        s += 2.0;
    }
    None
}

/// View with oncoming actors' boxes inflated for collision checks. Original
/// boxes stay untouched everywhere else. Aligned mode only; the privileged
/// expert never inflates.
pub fn inflate_oncoming<'r>(view: &ExpertView<'r>, ctx: &JunctionCtx, cfg: &ExpertConfig) -> ExpertView<'r> {
    if view.mode != ExpertMode::Aligned {
        return view.clone();
    }
    let mut out = view.clone();
    for actor in &mut out.actors {
        if is_oncoming(actor, ctx, view, cfg) {
            actor.half_extent = actor.half_extent * cfg.inflation_factor;
        }
    }
    out
}

fn is_oncoming(
    actor: &crate::sim::ActorState,
    ctx: &JunctionCtx,
    view: &ExpertView,
    cfg: &ExpertConfig,
) -> bool {
    if actor.kind != ActorKind::Vehicle {
        return false;
    }
    if let Some(lane) = actor.lane_id {
        if ctx.oncoming_lanes.contains(&lane) {
            return true;
        }
    }
    // Fallback: heading-opposed traffic near the junction.
    if actor.pose.position.dist(ctx.center) <= cfg.junction_radius {
        let route_dir = view.route.direction_at(ctx.exit_s.min(view.route.total_length));
        let diff = wrap_angle(actor.pose.yaw - route_dir.angle()).abs();
        if diff > std::f64::consts::FRAC_PI_2 {
            return true;
        }
    }
    false
}

/// Ids of view actors counted as oncoming under the context (for tests).
pub fn oncoming_ids(view: &ExpertView, ctx: &JunctionCtx, cfg: &ExpertConfig) -> Vec<u32> {
    view.actors
        .iter()
        .filter(|a| is_oncoming(a, ctx, view, cfg))
        .map(|a| a.id)
        .collect()
}

/// The expert's target speed for this tick.
///
/// The capped limit is evaluated through the proposal lattice
/// {1, 2/3, 1/3, 0}·v_cap, returning the largest proposal whose forecast is
/// collision-free. Caps, in order: local traffic flow (aligned), night/rain
/// slowdown (aligned), regulatory stop at red lights and uncleared stop
/// signs, and the near-field hazard corridor (aligned, bypasses the
/// forecast entirely).
#[allow(clippy::too_many_arguments)]
pub fn select_target_speed(
    view: &ExpertView,
    map: &MapSpec,
    ego: &EgoSnapshot,
    scratch: &mut ExpertScratch,
    cfg: &ExpertConfig,
    sim: &Sim,
    world: &WorldState,
    jctx: Option<&JunctionCtx>,
) -> SpeedDecision {
    let aligned = view.mode == ExpertMode::Aligned;
    let mut v_cap = view.posted_limit;
    let mut reason = SpeedReason::Free;

    // (a) Flow cap: mean speed of nearby same-direction vehicles.
    if aligned {
        if let Some(flow) = flow_speed(view, ego, cfg) {
            if flow < v_cap {
                v_cap = flow;
                reason = SpeedReason::FlowCap;
            }
        }
    }
    // (b) Low-visibility slowdown.
    if aligned
        && (view.conditions.time_of_day == crate::sim::TimeOfDay::Night
            || view.conditions.rain == crate::sim::Rain::Heavy)
    {
        v_cap *= cfg.low_visibility_factor;
        reason = SpeedReason::LowVisibilityCap;
    }
    // (c) Regulatory stop: red/yellow light or uncleared stop sign ahead.
    if regulatory_stop_required(view, map, ego, scratch, cfg) {
        v_cap = 0.0;
        reason = SpeedReason::RedLight;
    }
    // (d) Hazard corridor (aligned): stop for near pedestrians and
    // crossing-path vehicles regardless of the forecast.
    if aligned && v_cap > 0.0 && hazard_in_corridor(view, map, ego, cfg) {
        v_cap = 0.0;
        reason = SpeedReason::HazardBrake;
    }

    // Proposal lattice, largest collision-free wins.
    let forecast_view;
    let view_for_tracks = if aligned {
        if let Some(ctx) = jctx {
            forecast_view = inflate_oncoming(view, ctx, cfg);
            &forecast_view
        } else {
            view
        }
    } else {
        view
    };
    let tracks = match view.mode {
        ExpertMode::Aligned => {
            tracks_constant_velocity(view_for_tracks, sim.params.dt, cfg.horizon_s)
        }
        ExpertMode::Privileged => tracks_replay(sim, world, sim.params.dt, cfg.horizon_s),
    };

    let mut chosen = 0.0;
    for frac in &cfg.proposal_fractions {
        let candidate = frac * v_cap;
        let hit = forecast_collision(
            &tracks,
            view.route,
            ego,
            candidate,
            cfg,
            sim.params.vehicle_half,
            sim.params.brake_max,
            sim.params.accel_max,
        );
        if hit.is_none() {
            chosen = candidate;
            break;
        }
    }
    let reason = if chosen + 1e-9 < v_cap {
        SpeedReason::Follow
    } else {
        reason
    };
    SpeedDecision {
        target_speed: chosen,
        reason,
    }
}

/// Mean speed of visible same-direction vehicles within the flow radius.
fn flow_speed(view: &ExpertView, ego: &EgoSnapshot, cfg: &ExpertConfig) -> Option<f64> {
    let max_diff = cfg.flow_heading_max_deg.to_radians();
    let mut sum = 0.0;
    let mut n = 0usize;
    for a in &view.actors {
        if a.kind != ActorKind::Vehicle {
            continue;
        }
        if a.pose.position.dist(ego.pose.position) > cfg.flow_radius {
            continue;
        }
        if wrap_angle(a.pose.yaw - ego.pose.yaw).abs() > max_diff {
            continue;
        }
        sum += a.speed;
        n += 1;
    }
    if n == 0 {
        None
    } else {
        Some(sum / n as f64)
    }
}

/// Red/yellow light or uncleared stop sign on the route within braking
/// distance. Stop-sign lines clear once the ego has stopped at them.
fn regulatory_stop_required(
    view: &ExpertView,
    map: &MapSpec,
    ego: &EgoSnapshot,
    scratch: &mut ExpertScratch,
    cfg: &ExpertConfig,
) -> bool {
    let window = (ego.speed * ego.speed / (2.0 * 3.0) + cfg.stop_margin).max(8.0);
    let mut required = false;
    for sl in &map.stop_lines {
        let line_pos = map.stop_line_position(sl);
        let (s_line, lat) = project_onto_route(view.route, line_pos);
        if lat.abs() > 2.5 {
            continue;
        }
        let dist = s_line - ego.route_s;
        if dist < -1.0 {
            continue;
        }
        match sl.light_id {
            Some(light_id) => {
                // The light must be in the view (aligned: frustum-filtered).
                let Some(light) = view.lights.iter().find(|l| l.id == light_id) else {
                    continue;
                };
                if matches!(light.phase, LightPhase::Red | LightPhase::Yellow) && dist <= window {
                    required = true;
                }
            }
            None => {
                let key = (sl.lane_id, sl.s.to_bits());
                if scratch.cleared_stops.contains(&key) {
                    continue;
                }
                if ego.speed <= 0.1 && dist <= 4.5 {
                    scratch.cleared_stops.insert(key);
                    continue;
                }
                if dist <= window {
                    required = true;
                }
            }
        }
    }
    required
}

/// Any visible pedestrian, or crossing-path vehicle, inside the route-aligned
/// near-field corridor.
fn hazard_in_corridor(view: &ExpertView, map: &MapSpec, ego: &EgoSnapshot, cfg: &ExpertConfig) -> bool {
    let lane_width = map
        .lane(view.route.lane_at(ego.route_s))
        .map(|l| l.width)
        .unwrap_or(3.5);
    let len = (cfg.corridor_time_factor * ego.speed * cfg.corridor_t_react)
        .max(cfg.corridor_min_len);
    let half_width = (lane_width + cfg.corridor_extra_width) * 0.5;
    for a in &view.actors {
        let (s_a, lat_a) = project_onto_route(view.route, a.pose.position);
        let rel = s_a - ego.route_s;
        if rel <= 0.0 || rel > len || lat_a.abs() > half_width {
            continue;
        }
        match a.kind {
            ActorKind::Pedestrian => return true,
            ActorKind::Vehicle => {
                let route_dir = view.route.direction_at(s_a);
                let diff = wrap_angle(a.pose.yaw - route_dir.angle()).abs();
                let crossing = diff > std::f64::consts::FRAC_PI_6
                    && diff < std::f64::consts::PI - std::f64::consts::FRAC_PI_6;
                if crossing {
                    return true;
                }
            }
            ActorKind::Static => {}
        }
    }
    false
}
