//! The imitation student: observation encoding, the two intent-conditioning
//! policy designs, training, checkpoints, and the waypoint controller.

pub mod checkpoint;
pub mod net;
pub mod train;

use serde::{Deserialize, Serialize};

use crate::sensing::{
    normalize_tp, BevGrid, LightObs, Observation, SensorConfig, TpMode, TpStats, BEV_CELLS,
};
use crate::sim::{
    AgentTickSummary, Control, Pilot, PilotCtx, PilotDecision, PilotError, SimParams, WorldState,
};
use crate::world::Vec2;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointError, CHECKPOINT_SCHEMA_VERSION};
pub use net::{Conditioning, Grads, NetError, PolicyNet};
pub use train::{
    demonstrations_from_rollout, train, Dataset, DatasetManifest, Demonstration, EpochStat,
    TrainConfig, TrainError,
};

/// Speed input scaling: m/s divided by this before entering the trunk.
pub const SPEED_SCALE: f64 = 10.0;
/// Scene input width: flattened BEV + scaled speed + light one-hot.
pub const SCENE_DIM: usize = BEV_CELLS + 1 + 3;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PolicyConfig {
    pub conditioning: Conditioning,
    pub tp_mode: TpMode,
    /// Hidden widths of the shared trunk.
    pub trunk_widths: Vec<usize>,
    /// Recurrent width under late conditioning.
    pub bottleneck_width: usize,
    pub n_waypoints: usize,
    /// Seconds between predicted waypoints.
    pub waypoint_dt: f64,
    pub seed: u64,
}

impl PolicyConfig {
    pub fn new(conditioning: Conditioning, tp_mode: TpMode, seed: u64) -> PolicyConfig {
        PolicyConfig {
            conditioning,
            tp_mode,
            trunk_widths: vec![128, 128],
            bottleneck_width: 16,
            n_waypoints: 4,
            waypoint_dt: 0.5,
            seed,
        }
    }
}

/// Planner output: ego-frame waypoints (+x right, +y forward) at
/// `waypoint_dt` spacing, plus a non-negative target speed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanOutput {
    pub waypoints: Vec<Vec2>,
    pub target_speed: f64,
}

#[derive(Debug, thiserror::Error)]
pub enum PolicyError {
    #[error("normalization stats missing from the policy")]
    MissingStats,
    #[error("observation tp mode {obs:?} does not match policy tp mode {policy:?}")]
    TpModeMismatch { policy: TpMode, obs: TpMode },
    #[error(transparent)]
    Net(#[from] NetError),
}

/// A trained (or initialized) policy: config, network, and the TP
/// normalization stats it was trained with.
#[derive(Debug, Clone)]
pub struct Policy {
    pub config: PolicyConfig,
    pub net: PolicyNet,
    pub stats: Option<TpStats>,
}

impl Policy {
    /// Fresh policy with seeded initialization and no stats yet.
    pub fn init(config: PolicyConfig) -> Policy {
        let net = PolicyNet::new(
            config.conditioning,
            SCENE_DIM,
            config.tp_mode.scalars(),
            &config.trunk_widths,
            config.bottleneck_width,
            config.n_waypoints,
            config.seed,
        );
        Policy {
            config,
            net,
            stats: None,
        }
    }

    /// Scene portion of the trunk input (everything except the TPs).
    pub fn scene_input(bev: &BevGrid, ego_speed: f64, light: LightObs) -> Vec<f64> {
        let mut v = bev.to_f64();
        v.push(ego_speed / SPEED_SCALE);
        let one_hot = match light {
            LightObs::None => [1.0, 0.0, 0.0],
            LightObs::Red => [0.0, 1.0, 0.0],
            LightObs::Green => [0.0, 0.0, 1.0],
        };
        v.extend_from_slice(&one_hot);
        v
    }

    /// Normalized TP scalars from raw ego-frame coordinates.
    pub fn tp_input(&self, tps_raw: &[Vec2]) -> Result<Vec<f64>, PolicyError> {
        let stats = self.stats.as_ref().ok_or(PolicyError::MissingStats)?;
        Ok(tps_raw
            .iter()
            .flat_map(|p| {
                let (x, y) = normalize_tp(*p, stats);
                [x, y]
            })
            .collect())
    }

    /// Runs the policy on an observation.
    pub fn forward(&self, obs: &Observation) -> Result<PlanOutput, PolicyError> {
        if obs.tp_mode != self.config.tp_mode {
            return Err(PolicyError::TpModeMismatch {
                policy: self.config.tp_mode,
                obs: obs.tp_mode,
            });
        }
        let scene = Policy::scene_input(&obs.bev, obs.ego_speed, obs.light_state);
        let tp = self.tp_input(&obs.tps_raw)?;
        let cache = self.net.forward(&scene, &tp)?;
        Ok(PlanOutput {
            waypoints: cache.waypoints,
            target_speed: cache.target_speed,
        })
    }
}

/// Turns a predicted plan into a control: pure pursuit on the waypoints
/// (lookahead = the second waypoint) and proportional speed tracking with
/// the same gain the expert controller uses.
pub fn waypoints_to_control(plan: &PlanOutput, ego_speed: f64, params: &SimParams) -> Control {
    const K_V: f64 = 1.5;
    let target = plan
        .waypoints
        .get(1)
        .copied()
        .or_else(|| plan.waypoints.last().copied())
        .unwrap_or(Vec2::ZERO);
    let dist = target.norm();
    let steer = if dist < 0.5 {
        0.0
    } else {
        let alpha = (-target.x).atan2(target.y);
        (2.0 * params.wheelbase * alpha.sin() / dist).atan()
    };
    let accel = K_V * (plan.target_speed - ego_speed);
    Control::clamped(steer, accel, params)
}

/// The student as a rollout pilot.
pub struct StudentPilot {
    pub policy: Policy,
    pub sensor: SensorConfig,
}

impl Pilot for StudentPilot {
    fn decide(&mut self, world: &WorldState, ctx: &PilotCtx) -> Result<PilotDecision, PilotError> {
        let tp_active = match self.policy.config.tp_mode {
            TpMode::One => ctx.tp_one,
            TpMode::Three => ctx.tp_three,
        };
        let obs = crate::sensing::observe(
            world,
            ctx.map,
            &ctx.route.dense,
            tp_active,
            &self.sensor,
            self.policy.config.tp_mode,
            self.policy.stats.as_ref(),
        );
        let plan = self
            .policy
            .forward(&obs)
            .map_err(|e| PilotError(e.to_string()))?;
        let control = waypoints_to_control(&plan, world.ego().speed, ctx.params);
        Ok(PilotDecision {
            control,
            summary: AgentTickSummary {
                agent: "student".into(),
                target_speed: Some(plan.target_speed),
                speed_reason: None,
                visible_actor_ids: None,
                waypoints: Some(plan.waypoints.iter().map(|w| [w.x, w.y]).collect()),
            },
        })
    }
}
