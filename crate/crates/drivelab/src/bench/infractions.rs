//! Infraction detection over finished rollouts, with contact debouncing.

use serde::{Deserialize, Serialize};

use crate::sim::{ActorKind, LightPhase, Rollout, SimParams, Termination};
use crate::world::{obb_overlap, project_onto_route, wrap_angle, DenseRoute, MapSpec, Vec2};

/// The infraction taxonomy the benchmark reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InfractionKind {
    CollisionPedestrian,
    CollisionVehicle,
    CollisionStatic,
    OutsideLane,
    RedLight,
    RouteDeviation,
    StopInfraction,
    Blocked,
}

impl InfractionKind {
    pub const ALL: [InfractionKind; 8] = [
        InfractionKind::CollisionPedestrian,
        InfractionKind::CollisionVehicle,
        InfractionKind::CollisionStatic,
        InfractionKind::OutsideLane,
        InfractionKind::RedLight,
        InfractionKind::RouteDeviation,
        InfractionKind::StopInfraction,
        InfractionKind::Blocked,
    ];

    /// Short label used in reports (mirrors the usual leaderboard naming).
    pub fn label(&self) -> &'static str {
        match self {
            InfractionKind::CollisionPedestrian => "Ped",
            InfractionKind::CollisionVehicle => "Veh",
            InfractionKind::CollisionStatic => "Stat",
            InfractionKind::OutsideLane => "OL",
            InfractionKind::RedLight => "Red",
            InfractionKind::RouteDeviation => "Dev",
            InfractionKind::StopInfraction => "SI",
            InfractionKind::Blocked => "Block",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InfractionEvent {
    pub kind: InfractionKind,
    pub tick: u64,
    pub position: Vec2,
}

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("rollout log is truncated or non-contiguous at tick {0}")]
    TruncatedLog(u64),
    #[error("rollout trace and log lengths differ ({trace} vs {log})")]
    TraceMismatch { trace: usize, log: usize },
}

/// Detects every infraction in a finished rollout.
///
/// Continuing contacts and violations debounce into one event until cleared
/// for at least one second.
pub fn detect_infractions(
    rollout: &Rollout,
    map: &MapSpec,
    route: &DenseRoute,
    params: &SimParams,
) -> Result<Vec<InfractionEvent>, EvalError> {
    let records = &rollout.log.records;
    if rollout.trace.len() != records.len() {
        return Err(EvalError::TraceMismatch {
            trace: rollout.trace.len(),
            log: records.len(),
        });
    }
    for (i, r) in records.iter().enumerate() {
        if r.tick != i as u64 {
            return Err(EvalError::TruncatedLog(r.tick));
        }
    }
    let debounce_ticks = (1.0 / params.dt).round() as u64;
    let mut events = Vec::new();

    // --- Collisions, debounced per counterpart. ---
    use std::collections::BTreeMap;
    let mut contact_clear_at: BTreeMap<(u8, u32), u64> = BTreeMap::new();
    for (idx, world) in rollout.trace.iter().enumerate() {
        let tick = idx as u64;
        let ego = world.ego();
        let ego_box = ego.footprint();
        for actor in &world.actors {
            if actor.id == world.ego_id {
                continue;
            }
            if ego_box.center.dist(actor.pose.position) > 12.0 {
                continue;
            }
            if obb_overlap(&ego_box, &actor.footprint()) {
                let key = (0u8, actor.id);
                let cleared_at = contact_clear_at.get(&key).copied().unwrap_or(0);
                if tick >= cleared_at {
                    events.push(InfractionEvent {
                        kind: match actor.kind {
                            ActorKind::Pedestrian => InfractionKind::CollisionPedestrian,
                            ActorKind::Vehicle => InfractionKind::CollisionVehicle,
                            ActorKind::Static => InfractionKind::CollisionStatic,
                        },
                        tick,
                        position: ego.pose.position,
                    });
                }
                contact_clear_at.insert(key, tick + debounce_ticks + 1);
            }
        }
        for (si, sbox) in map.static_obstacles.iter().enumerate() {
            if ego_box.center.dist(sbox.center) > 12.0 {
                continue;
            }
            if obb_overlap(&ego_box, sbox) {
                let key = (1u8, si as u32);
                let cleared_at = contact_clear_at.get(&key).copied().unwrap_or(0);
                if tick >= cleared_at {
                    events.push(InfractionEvent {
                        kind: InfractionKind::CollisionStatic,
                        tick,
                        position: ego.pose.position,
                    });
                }
                contact_clear_at.insert(key, tick + debounce_ticks + 1);
            }
        }
    }

    // --- Regulatory line crossings along the route. ---
    struct RouteLine {
        s: f64,
        light_id: Option<u32>,
        position: Vec2,
    }
    let mut lines: Vec<RouteLine> = Vec::new();
    for sl in &map.stop_lines {
        let pos = map.stop_line_position(sl);
        let (s, lat) = project_onto_route(route, pos);
        if lat.abs() <= 2.5 && s > 0.5 && s < route.total_length - 0.1 {
            lines.push(RouteLine {
                s,
                light_id: sl.light_id,
                position: pos,
            });
        }
    }
    for line in &lines {
        // Find the crossing tick, then judge it.
        let mut slow_seen = false;
        for w in 0..records.len().saturating_sub(1) {
            let (a, b) = (&records[w], &records[w + 1]);
            if a.route_s >= line.s - 5.0 && a.route_s <= line.s && a.ego_speed <= 0.1 {
                slow_seen = true;
            }
            if a.route_s < line.s && b.route_s >= line.s && a.lateral.abs() <= 3.0 {
                match line.light_id {
                    Some(light_id) => {
                        let phase = rollout.trace[w + 1]
                            .light(light_id)
                            .map(|l| l.phase)
                            .unwrap_or(LightPhase::Green);
                        if phase == LightPhase::Red {
                            events.push(InfractionEvent {
                                kind: InfractionKind::RedLight,
                                tick: b.tick,
                                position: line.position,
                            });
                        }
                    }
                    None => {
                        if !slow_seen && b.ego_speed > 0.1 {
                            events.push(InfractionEvent {
                                kind: InfractionKind::StopInfraction,
                                tick: b.tick,
                                position: line.position,
                            });
                        }
                    }
                }
                break;
            }
        }
    }

    // --- Off-lane driving: > 1 m traveled with the ego center off every
    // drivable lane, debounced until back on lane for >= 1 s. ---
    let mut off_dist = 0.0;
    let mut on_streak = 0u64;
    let mut off_active = false;
    for w in 1..records.len() {
        let pos = records[w].ego_pose.position;
        let step = records[w - 1].ego_pose.position.dist(pos);
        if map.on_any_lane(pos) {
            on_streak += 1;
            if on_streak >= debounce_ticks {
                off_active = false;
                off_dist = 0.0;
            }
        } else {
            on_streak = 0;
            off_dist += step;
            if off_dist > 1.0 && !off_active {
                events.push(InfractionEvent {
                    kind: InfractionKind::OutsideLane,
                    tick: records[w].tick,
                    position: pos,
                });
                off_active = true;
            }
        }
    }

    // --- Termination-derived events. ---
    if let Some(last) = records.last() {
        match rollout.log.termination {
            Termination::RouteDeviation => events.push(InfractionEvent {
                kind: InfractionKind::RouteDeviation,
                tick: last.tick,
                position: last.ego_pose.position,
            }),
            Termination::Blocked => events.push(InfractionEvent {
                kind: InfractionKind::Blocked,
                tick: last.tick,
                position: last.ego_pose.position,
            }),
            _ => {}
        }
    }

    events.sort_by_key(|e| e.tick);
    Ok(events)
}

/// Counts collisions that happen while the ego is actively closing its
/// heading error toward the current target point (the goal-fixation failure
/// signature). `use_one_tp` selects which TP tracking to measure against.
pub fn goal_fixation_failures(
    rollout: &Rollout,
    events: &[InfractionEvent],
    use_one_tp: bool,
) -> usize {
    let records = &rollout.log.records;
    let window = 10usize;
    let mut count = 0;
    for e in events {
        if !matches!(
            e.kind,
            InfractionKind::CollisionPedestrian
                | InfractionKind::CollisionVehicle
                | InfractionKind::CollisionStatic
        ) {
            continue;
        }
        let t = e.tick as usize;
        if t < window || t >= records.len() {
            continue;
        }
        let err_at = |idx: usize| -> f64 {
            let r = &records[idx];
            let tp = if use_one_tp {
                r.tps_one.current.position
            } else {
                r.tps.current.position
            };
            let bearing = (tp - r.ego_pose.position).angle();
            wrap_angle(bearing - r.ego_pose.yaw).abs()
        };
        let before = err_at(t - window);
        let at = err_at(t);
        if before - at > 0.02 {
            count += 1;
        }
    }
    count
}
