//! Background actor behaviors: IDM lane following with light/stop/yield
//! handling, scripted vehicles, and scripted pedestrians.

use crate::rng::child_seed;
use crate::world::{LaneId, MapSpec, Vec2};

use super::{
    idm_accel, ActorState, Behavior, LaneFollowState, LeadBrakePhase, LeadBrakeState,
    LightPhase, PedestrianState, ScriptedVehicleState, Sim, Trigger, WorldState,
};

/// How far ahead a lane-follower looks for leaders and lines, m.
const SCAN_AHEAD: f64 = 60.0;
/// Lateral window around the chain centerline that counts as "in my path", m.
const PATH_HALF_WIDTH: f64 = 2.2;
/// Committed-yield check: conflicts matter until the vehicle enters the connector.
const YIELD_FEED_WINDOW: f64 = 25.0;

pub(super) struct VehicleUpdate {
    pub state: LaneFollowState,
    pub speed: f64,
    pub accel: f64,
}

/// Picks the next lane deterministically from the per-actor seed.
fn choose_next_lane(map: &MapSpec, state: &mut LaneFollowState) {
    if state.next_lane.is_some() {
        return;
    }
    let lane = match map.lane(state.lane_id) {
        Some(l) => l,
        None => return,
    };
    let mut succ = lane.successors.clone();
    succ.sort_unstable();
    if succ.is_empty() {
        return;
    }
    let pick = child_seed(state.rng_seed, &format!("turn{}", state.decisions)) as usize;
    state.next_lane = Some(succ[pick % succ.len()]);
    state.decisions += 1;
}

/// The lane chain ahead of a follower: (lane id, s window start, chain offset).
fn chain_ahead(map: &MapSpec, state: &LaneFollowState) -> Vec<(LaneId, f64, f64)> {
    let mut chain = Vec::new();
    let mut offset = 0.0;
    let mut lane_id = state.lane_id;
    let mut from_s = state.s;
    for step in 0..3 {
        let lane = match map.lane(lane_id) {
            Some(l) => l,
            None => break,
        };
        chain.push((lane_id, from_s, offset));
        offset += lane.length() - from_s;
        if offset >= SCAN_AHEAD {
            break;
        }
        let next = if step == 0 {
            state.next_lane
        } else {
            // Beyond the committed choice, peek the lowest-id successor just
            // for hazard scanning; the real choice happens on entry.
            let mut s = lane.successors.clone();
            s.sort_unstable();
            s.first().copied()
        };
        match next {
            Some(n) => {
                lane_id = n;
                from_s = 0.0;
            }
            None => break,
        }
    }
    chain
}

/// Distance along the chain to the nearest blocking actor, plus its speed
/// along the follower's direction of travel.
fn leader_gap(
    sim: &Sim,
    world: &WorldState,
    me: &ActorState,
    chain: &[(LaneId, f64, f64)],
) -> Option<(f64, f64)> {
    let mut best: Option<(f64, f64)> = None;
    for other in &world.actors {
        if other.id == me.id {
            continue;
        }
        for &(lane_id, from_s, offset) in chain {
            let lane = match sim.map.lane(lane_id) {
                Some(l) => l,
                None => continue,
            };
            let (s_p, d) = lane.project(other.pose.position);
            if d > PATH_HALF_WIDTH + other.half_extent.y.min(other.half_extent.x) {
                continue;
            }
            if s_p < from_s - 0.5 {
                continue;
            }
            let along = offset + (s_p - from_s);
            if along <= 0.0 || along > SCAN_AHEAD {
                continue;
            }
            let gap = along - me.half_extent.x - other.half_extent.x;
            let dir = lane.direction_at(s_p);
            let v_lead = (other.velocity().dot(dir)).max(0.0);
            if best.map_or(true, |(g, _)| gap < g) {
                best = Some((gap, v_lead));
            }
            break;
        }
    }
    best
}

/// Regulatory virtual leader: red/yellow lights always, stop signs until
/// this particular vehicle has stopped for them.
fn regulatory_stop(
    sim: &Sim,
    world: &WorldState,
    me: &ActorState,
    state: &LaneFollowState,
    chain: &[(LaneId, f64, f64)],
) -> (Option<f64>, Option<(u32, f64)>) {
    let mut nearest: Option<f64> = None;
    let mut cleared = state.cleared_stop;
    for sl in &sim.map.stop_lines {
        for &(lane_id, from_s, offset) in chain {
            if sl.lane_id != lane_id {
                continue;
            }
            let along = offset + (sl.s - from_s);
            if along < -1.0 || along > SCAN_AHEAD {
                continue;
            }
            let must_stop = match sl.light_id {
                Some(light) => matches!(
                    world.light(light).map(|l| l.phase),
                    Some(LightPhase::Red) | Some(LightPhase::Yellow)
                ),
                None => {
                    let this = (sl.lane_id, sl.s);
                    if cleared == Some(this) {
                        false
                    } else if me.speed <= 0.15 && along - me.half_extent.x <= 5.0 && along >= -0.5
                    {
                        cleared = Some(this);
                        false
                    } else {
                        true
                    }
                }
            };
            if must_stop && along > 0.0 {
                let gap = along - me.half_extent.x - 1.0;
                if nearest.map_or(true, |g| gap < g) {
                    nearest = Some(gap);
                }
            }
        }
    }
    (nearest, cleared)
}

/// Hold before a junction connector that must yield while conflicting
/// traffic is present.
fn yield_gap(
    sim: &Sim,
    world: &WorldState,
    me: &ActorState,
    state: &LaneFollowState,
) -> Option<f64> {
    let next = state.next_lane?;
    let junction = sim.map.junction_of_lane(next)?;
    let prio = junction.priorities.iter().find(|p| p.lane == next)?;
    let lane = sim.map.lane(state.lane_id)?;
    let dist_to_entry = lane.length() - state.s;
    if dist_to_entry > 30.0 {
        return None;
    }
    let mut conflict = false;
    for other in &world.actors {
        if other.id == me.id || other.speed <= 0.3 {
            continue;
        }
        if let Some(other_lane) = other.lane_id {
            if prio.yields_to.contains(&other_lane) {
                conflict = true;
                break;
            }
            // Vehicles about to enter a conflicting connector.
            if let Some(feed) = sim.map.lane(other_lane) {
                let near_end = feed.length() - feed.project(other.pose.position).0
                    <= YIELD_FEED_WINDOW;
                if near_end && feed.successors.iter().any(|s| prio.yields_to.contains(s)) {
                    conflict = true;
                    break;
                }
            }
        }
    }
    if conflict {
        Some(dist_to_entry - me.half_extent.x - 1.0)
    } else {
        None
    }
}

pub(super) fn step_lane_follow(
    sim: &Sim,
    world: &WorldState,
    me: &ActorState,
    mut state: LaneFollowState,
) -> VehicleUpdate {
    choose_next_lane(sim.map, &mut state);
    let chain = chain_ahead(sim.map, &state);
    let limit = sim
        .map
        .lane(state.lane_id)
        .map(|l| l.speed_limit)
        .unwrap_or(sim.params.idm.v0);
    let p = super::IdmParams {
        v0: limit,
        ..sim.params.idm
    };

    let mut accel = idm_accel(f64::INFINITY, me.speed, 0.0, &p);
    if let Some((gap, v_lead)) = leader_gap(sim, world, me, &chain) {
        accel = accel.min(idm_accel(gap.max(0.05), me.speed, v_lead, &p));
    }
    let (reg_gap, cleared) = regulatory_stop(sim, world, me, &state, &chain);
    state.cleared_stop = cleared;
    if let Some(gap) = reg_gap {
        accel = accel.min(idm_accel(gap.max(0.05), me.speed, 0.0, &p));
    }
    if let Some(gap) = yield_gap(sim, world, me, &state) {
        accel = accel.min(idm_accel(gap.max(0.05), me.speed, 0.0, &p));
    }

    let dt = sim.params.dt;
    let speed = (me.speed + accel * dt).max(0.0);
    state.s += me.speed * dt;
    // Cross into the next lane when past the end of this one.
    if let Some(lane) = sim.map.lane(state.lane_id) {
        let len = lane.length();
        if state.s >= len {
            if let Some(next) = state.next_lane.take() {
                state.s -= len;
                state.lane_id = next;
            } else {
                state.s = len;
            }
        }
    }
    VehicleUpdate {
        state,
        speed,
        accel,
    }
}

pub(super) fn apply_vehicle_update(map: &MapSpec, actor: &mut ActorState, upd: VehicleUpdate) {
    if let Some(lane) = map.lane(upd.state.lane_id) {
        actor.pose.position = lane.point_at(upd.state.s);
        actor.pose.yaw = lane.direction_at(upd.state.s).angle();
    }
    actor.lane_id = Some(upd.state.lane_id);
    actor.speed = upd.speed;
    actor.accel = upd.accel;
    actor.behavior = Behavior::LaneFollow(upd.state);
}

pub(super) struct LeadBrakeUpdate {
    pub state: LeadBrakeState,
    pub speed: f64,
    pub accel: f64,
}

pub(super) fn step_lead_brake(
    sim: &Sim,
    world: &WorldState,
    me: &ActorState,
    mut state: LeadBrakeState,
) -> LeadBrakeUpdate {
    let ego = world.ego();
    let dist_to_ego = ego.pose.position.dist(me.pose.position);
    state.phase = match state.phase {
        LeadBrakePhase::Cruise if dist_to_ego <= state.trigger_distance => LeadBrakePhase::Braking,
        LeadBrakePhase::Braking if me.speed <= 0.05 => LeadBrakePhase::Holding {
            until: world.time_s + state.hold_s,
        },
        LeadBrakePhase::Holding { until } if world.time_s >= until => LeadBrakePhase::Done,
        other => other,
    };
    match state.phase {
        LeadBrakePhase::Braking => {
            let dt = sim.params.dt;
            let accel = -sim.params.brake_max;
            let speed = (me.speed + accel * dt).max(0.0);
            let mut follow = state.follow.clone();
            follow.s += me.speed * dt;
            state.follow = follow;
            LeadBrakeUpdate {
                state,
                speed,
                accel,
            }
        }
        LeadBrakePhase::Holding { .. } => LeadBrakeUpdate {
            state,
            speed: 0.0,
            accel: 0.0,
        },
        // Cruise and Done follow the lane normally.
        _ => {
            let upd = step_lane_follow(sim, world, me, state.follow.clone());
            state.follow = upd.state;
            LeadBrakeUpdate {
                state,
                speed: upd.speed,
                accel: upd.accel,
            }
        }
    }
}

pub(super) fn apply_lead_brake_update(map: &MapSpec, actor: &mut ActorState, upd: LeadBrakeUpdate) {
    if let Some(lane) = map.lane(upd.state.follow.lane_id) {
        actor.pose.position = lane.point_at(upd.state.follow.s);
        actor.pose.yaw = lane.direction_at(upd.state.follow.s).angle();
    }
    actor.lane_id = Some(upd.state.follow.lane_id);
    actor.speed = upd.speed;
    actor.accel = upd.accel;
    actor.behavior = Behavior::LeadBrake(upd.state);
}

fn trigger_fired(trigger: &Trigger, world: &WorldState) -> bool {
    match trigger {
        Trigger::Immediate => true,
        Trigger::EgoWithin { point, distance } => {
            world.ego().pose.position.dist(*point) <= *distance
        }
        Trigger::AtTime(t) => world.time_s >= *t,
    }
}

pub(super) fn step_scripted_vehicle(
    sim: &Sim,
    world: &WorldState,
    actor: &mut ActorState,
    mut state: ScriptedVehicleState,
) {
    if !state.started && trigger_fired(&state.trigger, world) {
        state.started = true;
    }
    if state.started {
        state.s += state.speed * sim.params.dt;
        // Advance through the chain; stop at its end.
        loop {
            let Some(&lane_id) = state.chain.get(state.chain_idx) else {
                break;
            };
            let len = sim.map.lane(lane_id).map(|l| l.length()).unwrap_or(0.0);
            if state.s < len {
                break;
            }
            if state.chain_idx + 1 < state.chain.len() {
                state.s -= len;
                state.chain_idx += 1;
            } else {
                state.s = len;
                break;
            }
        }
    }
    let at_end = state.chain_idx + 1 >= state.chain.len()
        && state
            .chain
            .get(state.chain_idx)
            .and_then(|id| sim.map.lane(*id))
            .map(|l| state.s >= l.length())
            .unwrap_or(true);
    if let Some(lane) = state.chain.get(state.chain_idx).and_then(|id| sim.map.lane(*id)) {
        actor.pose.position = lane.point_at(state.s);
        actor.pose.yaw = lane.direction_at(state.s).angle();
        actor.lane_id = Some(lane.id);
    }
    actor.speed = if state.started && !at_end {
        state.speed
    } else {
        0.0
    };
    actor.accel = 0.0;
    actor.behavior = Behavior::ScriptedVehicle(state);
}

pub(super) fn step_pedestrian(
    sim: &Sim,
    world: &WorldState,
    actor: &mut ActorState,
    mut state: PedestrianState,
) {
    if !state.started && trigger_fired(&state.trigger, world) {
        state.started = true;
    }
    let total: f64 = state.path.windows(2).map(|w| w[0].dist(w[1])).sum();
    if state.started && state.progress < total {
        state.progress = (state.progress + state.walk_speed * sim.params.dt).min(total);
    }
    let moving = state.started && state.progress < total;
    // Locate the position along the path polyline.
    let mut remaining = state.progress;
    let mut pos = *state.path.first().unwrap_or(&actor.pose.position);
    let mut dir = Vec2::new(1.0, 0.0);
    for w in state.path.windows(2) {
        let seg = w[0].dist(w[1]);
        if remaining <= seg {
            let t = if seg > 0.0 { remaining / seg } else { 0.0 };
            pos = w[0].lerp(w[1], t);
            dir = (w[1] - w[0]).normalized();
            break;
        }
        remaining -= seg;
        pos = w[1];
        dir = (w[1] - w[0]).normalized();
    }
    actor.pose.position = pos;
    actor.pose.yaw = dir.angle();
    actor.speed = if moving { state.walk_speed } else { 0.0 };
    actor.accel = 0.0;
    actor.lane_id = None;
    actor.behavior = Behavior::Pedestrian(state);
}
