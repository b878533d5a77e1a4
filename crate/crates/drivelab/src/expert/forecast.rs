//! Collision forecasting: rolls the ego along the route at a candidate speed
//! and other actors forward in time, reporting the first footprint overlap.
//!
//! The two expert modes forecast other actors differently: the privileged
//! expert replays their true behavior models through the simulator, while
//! the aligned expert only extrapolates observed pose and speed at constant
//! velocity.

use serde::{Deserialize, Serialize};

use crate::sim::{Control, Sim, WorldState};
use crate::world::{obb_overlap, DenseRoute, OrientedBox};

use super::{EgoSnapshot, ExpertConfig, ExpertView};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CollisionInfo {
    pub time_s: f64,
    pub actor_id: u32,
}

/// Future footprints of every actor the expert may collide with, one box per
/// forecast step (step 0 = now).
pub struct ActorTracks {
    pub steps: usize,
    pub dt: f64,
    pub tracks: Vec<(u32, Vec<OrientedBox>)>,
}

/// Constant-velocity extrapolation of the view's actors (aligned mode).
pub fn tracks_constant_velocity(view: &ExpertView, dt: f64, horizon: f64) -> ActorTracks {
    let steps = (horizon / dt).round() as usize;
    let tracks = view
        .actors
        .iter()
        .map(|a| {
            let vel = a.velocity();
            let boxes = (0..=steps)
                .map(|k| {
                    let t = k as f64 * dt;
                    let mut b = a.footprint();
                    b.center = b.center + vel * t;
                    b
                })
                .collect();
            (a.id, boxes)
        })
        .collect();
    ActorTracks { steps, dt, tracks }
}

/// Ground-truth replay of actor behavior through the simulator (privileged
/// mode). The ego coasts straight at its current speed during the replay.
pub fn tracks_replay(sim: &Sim, world: &WorldState, dt: f64, horizon: f64) -> ActorTracks {
    let steps = (horizon / dt).round() as usize;
    let ids: Vec<u32> = world
        .actors
        .iter()
        .filter(|a| a.id != world.ego_id)
        .map(|a| a.id)
        .collect();
    let mut boxes: Vec<Vec<OrientedBox>> = vec![Vec::with_capacity(steps + 1); ids.len()];
    let mut w = world.clone();
    for (i, id) in ids.iter().enumerate() {
        if let Some(a) = w.actor(*id) {
            boxes[i].push(a.footprint());
        }
    }
    for _ in 0..steps {
        w = sim.step(&w, Control { steer: 0.0, accel: 0.0 });
        for (i, id) in ids.iter().enumerate() {
            if let Some(a) = w.actor(*id) {
                boxes[i].push(a.footprint());
            }
        }
    }
    ActorTracks {
        steps,
        dt,
        tracks: ids.into_iter().zip(boxes).collect(),
    }
}

/// Scales the boxes of `inflate_ids` actors in-place (unprotected-turn margin).
pub fn inflate_tracks(tracks: &mut ActorTracks, inflate_ids: &[u32], factor: f64) {
    for (id, boxes) in &mut tracks.tracks {
        if inflate_ids.contains(id) {
            for b in boxes.iter_mut() {
                *b = b.scaled(factor);
            }
        }
    }
}

/// First overlap between the ego driven at `v_candidate` and any track.
///
/// The ego follows the route geometry from `ego.route_s`, its speed tracking
/// `v_candidate` through the same proportional law the controller uses.
pub fn forecast_collision(
    tracks: &ActorTracks,
    route: &DenseRoute,
    ego: &EgoSnapshot,
    v_candidate: f64,
    cfg: &ExpertConfig,
    vehicle_half: crate::world::Vec2,
    brake_max: f64,
    accel_max: f64,
) -> Option<CollisionInfo> {
    let mut v = ego.speed;
    let mut s = ego.route_s;
    let half = crate::world::Vec2::new(
        vehicle_half.x + cfg.forecast_ego_margin,
        vehicle_half.y + cfg.forecast_ego_margin,
    );
    for k in 1..=tracks.steps {
        let a = (cfg.k_v * (v_candidate - v)).clamp(-brake_max, accel_max);
        s += v * tracks.dt;
        v = (v + a * tracks.dt).max(0.0);
        let pos = route.point_at(s);
        let dir = route.direction_at(s);
        let ego_box = OrientedBox {
            center: pos,
            yaw: dir.angle(),
            half_extent: half,
        };
        for (id, boxes) in &tracks.tracks {
            if let Some(b) = boxes.get(k) {
                if obb_overlap(&ego_box, b) {
                    return Some(CollisionInfo {
                        time_s: k as f64 * tracks.dt,
                        actor_id: *id,
                    });
                }
            }
        }
        if s >= route.total_length && v <= 0.01 {
            break;
        }
    }
    None
}
