//! Deterministic fixed-step closed-loop world: ego dynamics, background
//! traffic, pedestrians, traffic lights, scenario scripting, and procedural
//! towns.

pub mod idm;
pub mod rollout;
pub mod scenario;
pub mod town;
mod traffic;

use serde::{Deserialize, Serialize};

use crate::world::{MapSpec, OrientedBox, Pose, Vec2};
pub use idm::{idm_accel, IdmParams};
pub use rollout::{
    run_rollout, AgentTickSummary, Pilot, PilotCtx, PilotDecision, PilotError, Rollout,
    RolloutConfig, RolloutLog, Termination, TickRecord,
};
pub use scenario::{spawn_scenario, ScenarioError, ScenarioKind, ScenarioRuntime, ScenarioSpec};
pub use town::{generate_town, TownSize};

/// Fixed simulation parameters. `Default` carries the values every test and
/// benchmark in this crate is pinned to.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimParams {
    /// Fixed step, s (20 Hz).
    pub dt: f64,
    /// Bicycle-model wheelbase, m.
    pub wheelbase: f64,
    /// Front-wheel angle clamp, rad.
    pub delta_max: f64,
    /// Forward acceleration clamp, m/s².
    pub accel_max: f64,
    /// Braking clamp, m/s² (positive).
    pub brake_max: f64,
    /// Speed below which the ego counts as standing, m/s.
    pub blocked_speed: f64,
    /// Standing this long terminates the rollout, s.
    pub blocked_duration: f64,
    /// Lateral route offset that terminates the rollout, m.
    pub deviation_threshold: f64,
    pub idm: IdmParams,
    pub lights: LightSchedule,
    /// Vehicle footprint half extents (length, width), m.
    pub vehicle_half: Vec2,
    /// Pedestrian footprint half extents, m.
    pub pedestrian_half: Vec2,
}

impl Default for SimParams {
    fn default() -> Self {
        SimParams {
            dt: 0.05,
            wheelbase: 2.9,
            delta_max: 0.6,
            accel_max: 2.0,
            brake_max: 6.0,
            blocked_speed: 0.1,
            blocked_duration: 30.0,
            deviation_threshold: 30.0,
            idm: IdmParams::default(),
            lights: LightSchedule::default(),
            vehicle_half: Vec2::new(2.4, 1.0),
            pedestrian_half: Vec2::new(0.25, 0.25),
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LightSchedule {
    pub green: f64,
    pub yellow: f64,
    pub red: f64,
}

impl Default for LightSchedule {
    fn default() -> Self {
        LightSchedule {
            green: 10.0,
            yellow: 2.0,
            red: 12.0,
        }
    }
}

impl LightSchedule {
    pub fn cycle(&self) -> f64 {
        self.green + self.yellow + self.red
    }

    fn duration(&self, phase: LightPhase) -> f64 {
        match phase {
            LightPhase::Green => self.green,
            LightPhase::Yellow => self.yellow,
            LightPhase::Red => self.red,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LightPhase {
    Green,
    Yellow,
    Red,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LightState {
    pub id: u32,
    pub phase: LightPhase,
    pub phase_time: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TimeOfDay {
    Day,
    Night,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Rain {
    None,
    Heavy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conditions {
    pub time_of_day: TimeOfDay,
    pub rain: Rain,
}

impl Default for Conditions {
    fn default() -> Self {
        Conditions {
            time_of_day: TimeOfDay::Day,
            rain: Rain::None,
        }
    }
}

/// Ego command: front-wheel angle and longitudinal acceleration, both
/// clamped at construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Control {
    pub steer: f64,
    pub accel: f64,
}

impl Control {
    pub fn clamped(steer: f64, accel: f64, p: &SimParams) -> Control {
        Control {
            steer: steer.clamp(-p.delta_max, p.delta_max),
            accel: accel.clamp(-p.brake_max, p.accel_max),
        }
    }

    pub fn brake(p: &SimParams) -> Control {
        Control {
            steer: 0.0,
            accel: -p.brake_max,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ActorKind {
    Vehicle,
    Pedestrian,
    Static,
}

/// Motion-trigger for scripted actors.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum Trigger {
    Immediate,
    /// Starts when the ego is within `distance` of `point`.
    EgoWithin { point: Vec2, distance: f64 },
    AtTime(f64),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LaneFollowState {
    pub lane_id: u32,
    pub s: f64,
    /// Next lane at the end of this one; chosen lazily and persisted.
    pub next_lane: Option<u32>,
    pub rng_seed: u64,
    pub decisions: u64,
    /// Stop-sign line this vehicle already stopped for.
    pub cleared_stop: Option<(u32, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum LeadBrakePhase {
    Cruise,
    Braking,
    Holding { until: f64 },
    Done,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LeadBrakeState {
    pub follow: LaneFollowState,
    /// Ego proximity (m) that fires the scripted brake.
    pub trigger_distance: f64,
    pub hold_s: f64,
    pub phase: LeadBrakePhase,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScriptedVehicleState {
    pub chain: Vec<u32>,
    pub chain_idx: usize,
    pub s: f64,
    pub speed: f64,
    pub trigger: Trigger,
    pub started: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PedestrianState {
    pub path: Vec<Vec2>,
    pub progress: f64,
    pub walk_speed: f64,
    pub trigger: Trigger,
    pub started: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum Behavior {
    Ego,
    Static,
    LaneFollow(LaneFollowState),
    LeadBrake(LeadBrakeState),
    ScriptedVehicle(ScriptedVehicleState),
    Pedestrian(PedestrianState),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ActorState {
    pub id: u32,
    pub kind: ActorKind,
    pub pose: Pose,
    pub speed: f64,
    pub accel: f64,
    pub half_extent: Vec2,
    pub lane_id: Option<u32>,
    pub behavior: Behavior,
}

impl ActorState {
    /// Footprint box; its center equals the pose position by construction.
    pub fn footprint(&self) -> OrientedBox {
        OrientedBox {
            center: self.pose.position,
            yaw: self.pose.yaw,
            half_extent: self.half_extent,
        }
    }

    pub fn velocity(&self) -> Vec2 {
        self.pose.heading() * self.speed
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WorldState {
    pub tick: u64,
    pub time_s: f64,
    pub actors: Vec<ActorState>,
    pub lights: Vec<LightState>,
    pub conditions: Conditions,
    pub ego_id: u32,
    /// Live scenario scripting state (light holds etc.).
    pub scripted: Vec<ScenarioRuntime>,
}

impl WorldState {
    pub fn ego(&self) -> &ActorState {
        self.actors
            .iter()
            .find(|a| a.id == self.ego_id)
            .expect("world has an ego actor")
    }

    pub fn actor(&self, id: u32) -> Option<&ActorState> {
        self.actors.iter().find(|a| a.id == id)
    }

    pub fn light(&self, id: u32) -> Option<&LightState> {
        self.lights.iter().find(|l| l.id == id)
    }

    pub fn next_actor_id(&self) -> u32 {
        self.actors.iter().map(|a| a.id).max().map_or(0, |m| m + 1)
    }
}

/// The stepping engine: owns the map and parameters, stateless otherwise.
pub struct Sim<'m> {
    pub map: &'m MapSpec,
    pub params: SimParams,
}

impl<'m> Sim<'m> {
    pub fn new(map: &'m MapSpec) -> Sim<'m> {
        Sim {
            map,
            params: SimParams::default(),
        }
    }

    /// Builds the initial world: lights from the map, the ego at `ego_pose`,
    /// no other actors.
    pub fn initial_world(&self, ego_pose: Pose, conditions: Conditions) -> WorldState {
        let lights = self
            .map
            .light_ids()
            .into_iter()
            .map(|id| LightState {
                id,
                // Even light groups start green, odd ones red, so opposing
                // approaches at a junction alternate.
                phase: if id % 2 == 0 {
                    LightPhase::Green
                } else {
                    LightPhase::Red
                },
                phase_time: 0.0,
            })
            .collect();
        let ego = ActorState {
            id: 0,
            kind: ActorKind::Vehicle,
            pose: ego_pose,
            speed: 0.0,
            accel: 0.0,
            half_extent: self.params.vehicle_half,
            lane_id: self.map.nearest_lane(ego_pose.position).map(|(id, _, _)| id),
            behavior: Behavior::Ego,
        };
        WorldState {
            tick: 0,
            time_s: 0.0,
            actors: vec![ego],
            lights,
            conditions,
            ego_id: 0,
            scripted: Vec::new(),
        }
    }

    /// Advances the world by one fixed step. Pure: the result depends only on
    /// `(world, ego_ctrl)`.
    ///
    /// Update order is fixed: scenario scripting, lights, ego (kinematic
    /// bicycle), background vehicles (IDM decisions against the pre-step
    /// snapshot), pedestrians.
    pub fn step(&self, world: &WorldState, ego_ctrl: Control) -> WorldState {
        let dt = self.params.dt;
        let mut next = world.clone();
        next.tick = world.tick + 1;
        next.time_s = next.tick as f64 * dt;

        self.step_lights(world, &mut next);
        scenario::step_runtimes(self, world, &mut next);

        // Ego: kinematic bicycle, Euler, pre-update speed for kinematics.
        let ego_idx = next
            .actors
            .iter()
            .position(|a| a.id == world.ego_id)
            .expect("ego present");
        {
            let ego = &mut next.actors[ego_idx];
            let ctrl = Control::clamped(ego_ctrl.steer, ego_ctrl.accel, &self.params);
            let v = ego.speed;
            let (sin_yaw, cos_yaw) = ego.pose.yaw.sin_cos();
            ego.pose.position.x += v * cos_yaw * dt;
            ego.pose.position.y += v * sin_yaw * dt;
            ego.pose.yaw = crate::world::wrap_angle(
                ego.pose.yaw + v / self.params.wheelbase * ctrl.steer.tan() * dt,
            );
            ego.speed = (v + ctrl.accel * dt).max(0.0);
            ego.accel = ctrl.accel;
            ego.lane_id = self
                .map
                .nearest_lane(ego.pose.position)
                .filter(|(_, _, d)| *d <= 6.0)
                .map(|(id, _, _)| id);
        }

        // Background actors decide against the pre-step snapshot.
        for idx in 0..next.actors.len() {
            if next.actors[idx].id == world.ego_id {
                continue;
            }
            let behavior = next.actors[idx].behavior.clone();
            match behavior {
                Behavior::Ego | Behavior::Static => {}
                Behavior::LaneFollow(state) => {
                    let updated = traffic::step_lane_follow(self, world, &next.actors[idx], state);
                    traffic::apply_vehicle_update(self.map, &mut next.actors[idx], updated);
                }
                Behavior::LeadBrake(state) => {
                    let updated = traffic::step_lead_brake(self, world, &next.actors[idx], state);
                    traffic::apply_lead_brake_update(self.map, &mut next.actors[idx], updated);
                }
                Behavior::ScriptedVehicle(state) => {
                    traffic::step_scripted_vehicle(self, world, &mut next.actors[idx], state);
                }
                Behavior::Pedestrian(state) => {
                    traffic::step_pedestrian(self, world, &mut next.actors[idx], state);
                }
            }
        }
        next
    }

    fn step_lights(&self, world: &WorldState, next: &mut WorldState) {
        let dt = self.params.dt;
        let schedule = self.params.lights;
        for light in &mut next.lights {
            let mut phase = light.phase;
            let mut t = light.phase_time + dt;
            while t >= schedule.duration(phase) - 1e-12 {
                t -= schedule.duration(phase);
                phase = match phase {
                    LightPhase::Green => LightPhase::Yellow,
                    LightPhase::Yellow => LightPhase::Red,
                    LightPhase::Red => LightPhase::Green,
                };
            }
            light.phase = phase;
            light.phase_time = t;
        }
        // Scenario holds override the schedule.
        for rt in &world.scripted {
            let ScenarioRuntime::RedLightHold {
                light_id, released, ..
            } = rt;
            if !released {
                if let Some(l) = next.lights.iter_mut().find(|l| l.id == *light_id) {
                    l.phase = LightPhase::Red;
                    l.phase_time = 0.0;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::map::{LaneSpec, MAP_SCHEMA_VERSION};

    fn straight_map() -> MapSpec {
        MapSpec {
            schema_version: MAP_SCHEMA_VERSION,
            seed: 0,
            lanes: vec![LaneSpec {
                id: 0,
                centerline: vec![Vec2::ZERO, Vec2::new(500.0, 0.0)],
                width: 3.5,
                speed_limit: 8.33,
                successors: vec![],
                predecessors: vec![],
                left_neighbor: None,
                right_neighbor: None,
            }],
            junctions: vec![],
            static_obstacles: vec![],
            stop_lines: vec![],
        }
    }

    #[test]
    fn stationary_ego_stays_put() {
        let map = straight_map();
        let sim = Sim::new(&map);
        let w0 = sim.initial_world(Pose::new(0.0, 0.0, 0.0), Conditions::default());
        let w1 = sim.step(&w0, Control { steer: 0.0, accel: 0.0 });
        assert_eq!(w1.ego().pose.position, w0.ego().pose.position);
        assert_eq!(w1.ego().speed, 0.0);
        assert!((w1.time_s - 0.05).abs() < 1e-12);
    }

    #[test]
    fn straight_motion_advances_along_heading() {
        let map = straight_map();
        let sim = Sim::new(&map);
        let mut w = sim.initial_world(Pose::new(0.0, 0.0, 0.0), Conditions::default());
        w.actors[0].speed = 10.0;
        let w1 = sim.step(&w, Control { steer: 0.0, accel: 0.0 });
        assert!((w1.ego().pose.position.x - 0.5).abs() < 1e-12);
        assert!(w1.ego().pose.position.y.abs() < 1e-12);
    }

    #[test]
    fn repeated_stepping_is_deterministic() {
        let map = straight_map();
        let sim = Sim::new(&map);
        let run = || {
            let mut w = sim.initial_world(Pose::new(0.0, 0.0, 0.0), Conditions::default());
            let mut states = Vec::new();
            for i in 0..1000u32 {
                let ctrl = Control::clamped(0.01 * ((i % 7) as f64 - 3.0), 0.5, &sim.params);
                w = sim.step(&w, ctrl);
                states.push(crate::io::json_hash(&w));
            }
            states
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn speed_never_negative_and_heading_rate_bounded() {
        let map = straight_map();
        let sim = Sim::new(&map);
        let mut w = sim.initial_world(Pose::new(0.0, 0.0, 0.0), Conditions::default());
        w.actors[0].speed = 3.0;
        for _ in 0..400 {
            let v = w.ego().speed;
            let prev_yaw = w.ego().pose.yaw;
            let w1 = sim.step(&w, Control::clamped(1.0, -6.0, &sim.params));
            let dyaw = crate::world::wrap_angle(w1.ego().pose.yaw - prev_yaw).abs();
            let bound =
                v / sim.params.wheelbase * sim.params.delta_max.tan() * sim.params.dt + 1e-9;
            assert!(dyaw <= bound, "dyaw {dyaw} > bound {bound}");
            assert!(w1.ego().speed >= 0.0);
            w = w1;
        }
        assert_eq!(w.ego().speed, 0.0);
    }

    #[test]
    fn light_cycle_conserved() {
        let schedule = LightSchedule::default();
        let map = {
            let mut m = straight_map();
            m.stop_lines.push(crate::world::StopLineSpec {
                lane_id: 0,
                s: 100.0,
                light_id: Some(0),
            });
            m
        };
        let sim = Sim::new(&map);
        let mut w = sim.initial_world(Pose::new(0.0, 0.0, 0.0), Conditions::default());
        assert_eq!(w.lights.len(), 1);
        let mut phase_seq = vec![w.lights[0].phase];
        let ticks = (schedule.cycle() / sim.params.dt).round() as u32;
        for _ in 0..2 * ticks {
            w = sim.step(&w, Control { steer: 0.0, accel: 0.0 });
            if *phase_seq.last().unwrap() != w.lights[0].phase {
                phase_seq.push(w.lights[0].phase);
            }
        }
        // green -> yellow -> red -> green -> ... over exactly two cycles.
        assert_eq!(
            phase_seq,
            vec![
                LightPhase::Green,
                LightPhase::Yellow,
                LightPhase::Red,
                LightPhase::Green,
                LightPhase::Yellow,
                LightPhase::Red,
                LightPhase::Green,
            ]
        );
    }
}
