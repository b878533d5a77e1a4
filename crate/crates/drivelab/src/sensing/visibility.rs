//! Camera-frustum and occlusion visibility.

use crate::sim::{ActorState, LightPhase, WorldState};
use crate::world::{segment_hits_box, wrap_angle, MapSpec, Pose, Vec2};

use super::SensorConfig;

/// True iff a sample point at `p` falls inside some camera wedge.
fn in_frustum(ego_pose: Pose, p: Vec2, cfg: &SensorConfig) -> bool {
    let bearing = (p - ego_pose.position).angle();
    let half_fov = cfg.fov_deg.to_radians() * 0.5;
    cfg.camera_yaws
        .iter()
        .any(|yaw| wrap_angle(bearing - (ego_pose.yaw + yaw)).abs() <= half_fov)
}

/// The student-observability predicate.
///
/// An actor is visible iff at least one of its five footprint sample points
/// (4 corners + centroid) is (a) inside some camera wedge, (b) within the
/// condition-adjusted range, and (c) reachable by an unobstructed segment
/// from the camera origin. Occluders are all other actors plus the map's
/// static obstacles; removing actors can only grow the visible set.
pub fn visible(
    ego_pose: Pose,
    actor: &ActorState,
    world: &WorldState,
    map: &MapSpec,
    cfg: &SensorConfig,
) -> bool {
    if actor.id == world.ego_id {
        return false;
    }
    let range = cfg.effective_range(world.conditions);
    let origin = ego_pose.position;
    for sample in super::sample_points(actor) {
        if origin.dist(sample) > range {
            continue;
        }
        if !in_frustum(ego_pose, sample, cfg) {
            continue;
        }
        let blocked = super::occluders(world, map, actor.id)
            .any(|b| segment_hits_box(origin, sample, &b));
        if !blocked {
            return true;
        }
    }
    false
}

/// A traffic light the cameras can currently see, with the stop-line point
/// that made it visible.
#[derive(Debug, Clone, Copy)]
pub struct VisibleLight {
    pub id: u32,
    pub phase: LightPhase,
    pub ref_point: Vec2,
}

/// Lights whose stop-line reference point is inside a wedge and within
/// range. Frustum-only: lights are never occlusion-tested.
pub fn visible_lights(
    ego_pose: Pose,
    world: &WorldState,
    map: &MapSpec,
    cfg: &SensorConfig,
) -> Vec<VisibleLight> {
    let range = cfg.effective_range(world.conditions);
    let mut out: Vec<VisibleLight> = Vec::new();
    for sl in &map.stop_lines {
        let Some(light_id) = sl.light_id else {
            continue;
        };
        let Some(light) = world.light(light_id) else {
            continue;
        };
        let p = map.stop_line_position(sl);
        if ego_pose.position.dist(p) > range || !in_frustum(ego_pose, p, cfg) {
            continue;
        }
        // One entry per light: keep the nearest reference point.
        match out.iter_mut().find(|v| v.id == light_id) {
            Some(existing) => {
                if p.dist(ego_pose.position) < existing.ref_point.dist(ego_pose.position) {
                    existing.ref_point = p;
                }
            }
            None => out.push(VisibleLight {
                id: light_id,
                phase: light.phase,
                ref_point: p,
            }),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{ActorKind, Behavior, Conditions, Rain, TimeOfDay};
    use crate::world::map::MAP_SCHEMA_VERSION;
    use crate::world::{OrientedBox, StopLineSpec};

    fn empty_map() -> MapSpec {
        MapSpec {
            schema_version: MAP_SCHEMA_VERSION,
            seed: 0,
            lanes: vec![],
            junctions: vec![],
            static_obstacles: vec![],
            stop_lines: vec![],
        }
    }

    fn world_with(actors: Vec<ActorState>) -> WorldState {
        let ego = ActorState {
            id: 0,
            kind: ActorKind::Vehicle,
            pose: Pose::new(0.0, 0.0, 0.0),
            speed: 0.0,
            accel: 0.0,
            half_extent: Vec2::new(2.4, 1.0),
            lane_id: None,
            behavior: Behavior::Ego,
        };
        let mut all = vec![ego];
        all.extend(actors);
        WorldState {
            tick: 0,
            time_s: 0.0,
            actors: all,
            lights: vec![],
            conditions: Conditions::default(),
            ego_id: 0,
            scripted: Vec::new(),
        }
    }

    fn actor_at(id: u32, x: f64, y: f64, kind: ActorKind) -> ActorState {
        let half = match kind {
            ActorKind::Pedestrian => Vec2::new(0.25, 0.25),
            _ => Vec2::new(2.4, 1.0),
        };
        ActorState {
            id,
            kind,
            pose: Pose::new(x, y, 0.0),
            speed: 0.0,
            accel: 0.0,
            half_extent: half,
            lane_id: None,
            behavior: Behavior::Static,
        }
    }

    #[test]
    fn actor_ahead_is_visible() {
        let map = empty_map();
        let cfg = SensorConfig::mono();
        let world = world_with(vec![actor_at(1, 10.0, 0.0, ActorKind::Vehicle)]);
        let ego_pose = world.ego().pose;
        assert!(visible(ego_pose, world.actor(1).unwrap(), &world, &map, &cfg));
    }

    #[test]
    fn actor_behind_is_invisible_with_forward_cameras() {
        let map = empty_map();
        let cfg = SensorConfig::mono();
        let world = world_with(vec![actor_at(1, -10.0, 0.0, ActorKind::Pedestrian)]);
        let ego_pose = world.ego().pose;
        assert!(!visible(ego_pose, world.actor(1).unwrap(), &world, &map, &cfg));
    }

    #[test]
    fn occluded_pedestrian_is_invisible_until_occluder_removed() {
        let mut map = empty_map();
        // Big box squarely between ego and pedestrian.
        map.static_obstacles
            .push(OrientedBox::new(Vec2::new(10.0, 0.0), 0.0, 3.5, 3.0));
        let cfg = SensorConfig::mono();
        let world = world_with(vec![actor_at(1, 15.0, 0.0, ActorKind::Pedestrian)]);
        let ego_pose = world.ego().pose;
        assert!(!visible(ego_pose, world.actor(1).unwrap(), &world, &map, &cfg));
        map.static_obstacles.clear();
        assert!(visible(ego_pose, world.actor(1).unwrap(), &world, &map, &cfg));
    }

    #[test]
    fn range_shrinks_at_night_and_in_rain() {
        let map = empty_map();
        let cfg = SensorConfig::mono();
        let mut world = world_with(vec![actor_at(1, 50.0, 0.0, ActorKind::Vehicle)]);
        let ego_pose = world.ego().pose;
        assert!(visible(ego_pose, world.actor(1).unwrap(), &world, &map, &cfg));
        world.conditions = Conditions {
            time_of_day: TimeOfDay::Night,
            rain: Rain::None,
        };
        // Night range 38.4; actor front corner at 47.6 m.
        assert!(!visible(ego_pose, world.actor(1).unwrap(), &world, &map, &cfg));
        world.conditions = Conditions {
            time_of_day: TimeOfDay::Day,
            rain: Rain::Heavy,
        };
        // Rain range 32.
        assert!(!visible(ego_pose, world.actor(1).unwrap(), &world, &map, &cfg));
    }

    #[test]
    fn lights_are_frustum_and_range_filtered() {
        let mut map = empty_map();
        map.lanes.push(crate::world::LaneSpec {
            id: 0,
            centerline: vec![Vec2::new(-90.0, 0.0), Vec2::new(90.0, 0.0)],
            width: 3.5,
            speed_limit: 8.33,
            successors: vec![],
            predecessors: vec![],
            left_neighbor: None,
            right_neighbor: None,
        });
        // Ahead at 30 m (s = 120 on a lane starting at -90).
        map.stop_lines.push(StopLineSpec {
            lane_id: 0,
            s: 120.0,
            light_id: Some(0),
        });
        // Behind the ego.
        map.stop_lines.push(StopLineSpec {
            lane_id: 0,
            s: 60.0,
            light_id: Some(2),
        });
        // Ahead at 80 m, beyond day range 64.
        map.stop_lines.push(StopLineSpec {
            lane_id: 0,
            s: 170.0,
            light_id: Some(4),
        });
        let cfg = SensorConfig::mono();
        let mut world = world_with(vec![]);
        world.lights = vec![
            crate::sim::LightState {
                id: 0,
                phase: LightPhase::Red,
                phase_time: 0.0,
            },
            crate::sim::LightState {
                id: 2,
                phase: LightPhase::Green,
                phase_time: 0.0,
            },
            crate::sim::LightState {
                id: 4,
                phase: LightPhase::Green,
                phase_time: 0.0,
            },
        ];
        let seen = visible_lights(world.ego().pose, &world, &map, &cfg);
        let ids: Vec<u32> = seen.iter().map(|l| l.id).collect();
        assert_eq!(ids, vec![0]);
        // At night the range drops to 38.4: a light at 40 m is out of reach.
        world.conditions = Conditions {
            time_of_day: TimeOfDay::Night,
            rain: Rain::None,
        };
        map.stop_lines[0].s = 130.0; // now 40 m ahead
        let seen = visible_lights(world.ego().pose, &world, &map, &cfg);
        assert!(seen.is_empty());
    }
}
