//! Demonstrations, datasets, and seed-deterministic training.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::rng::stream;
use crate::sensing::{BevGrid, LightObs, TpMode, TpStats};
use crate::world::Vec2;

use super::net::{backward_sample, Grads};
use super::{Policy, PolicyConfig};

/// One expert-labeled frame. Both TP trackings are recorded so a single
/// collection run can train any policy variant.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Demonstration {
    pub bev: BevGrid,
    pub ego_speed: f64,
    pub light_state: LightObs,
    /// Ego-frame raw TP under one-TP switching: [current].
    pub tp_one: Vec<Vec2>,
    /// Ego-frame raw TPs under three-TP switching: [previous, current, future].
    pub tp_three: Vec<Vec2>,
    /// Executed ego positions at the waypoint horizon, ego frame.
    pub label_waypoints: Vec<Vec2>,
    /// The expert's target speed at this tick.
    pub label_speed: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub schema_version: u32,
    pub expert_mode: String,
    pub suite: String,
    pub suite_hash: String,
    pub routes: Vec<String>,
    pub demo_count: usize,
    pub tp_stats: TpStats,
}

/// An in-memory dataset.
#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub demos: Vec<Demonstration>,
}

impl Dataset {
    /// Per-axis TP stats over both tracked TP sets of every demonstration.
    pub fn tp_stats(&self) -> Option<TpStats> {
        TpStats::from_points(
            self.demos
                .iter()
                .flat_map(|d| d.tp_one.iter().chain(d.tp_three.iter())),
        )
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl TrainConfig {
    pub fn new(epochs: usize, seed: u64) -> TrainConfig {
        TrainConfig {
            lr: 1e-3,
            momentum: 0.9,
            batch_size: 64,
            epochs,
            seed,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EpochStat {
    pub epoch: usize,
    pub mean_loss: f64,
    pub lr: f64,
}

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("training diverged (non-finite loss) at epoch {0}")]
    Diverged(usize),
    #[error(transparent)]
    Net(#[from] super::NetError),
}

/// Mini-batch momentum SGD on the L1 imitation loss with cosine learning-rate
/// decay. Deterministic given the seed: shuffling, batch chunking, and
/// gradient reductions all run in a fixed order.
pub fn train(
    dataset: &Dataset,
    policy_cfg: &PolicyConfig,
    cfg: &TrainConfig,
) -> Result<(Policy, Vec<EpochStat>), TrainError> {
    if dataset.demos.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let mut policy = Policy::init(policy_cfg.clone());
    let stats = dataset.tp_stats().expect("non-empty dataset has stats");
    policy.stats = Some(stats);

    // Materialize inputs once.
    let scenes: Vec<Vec<f64>> = dataset
        .demos
        .iter()
        .map(|d| Policy::scene_input(&d.bev, d.ego_speed, d.light_state))
        .collect();
    let tps: Vec<Vec<f64>> = dataset
        .demos
        .iter()
        .map(|d| {
            let raw = match policy_cfg.tp_mode {
                TpMode::One => &d.tp_one,
                TpMode::Three => &d.tp_three,
            };
            policy.tp_input(raw).expect("stats set above")
        })
        .collect();
    let labels: Vec<(&[Vec2], f64)> = dataset
        .demos
        .iter()
        .map(|d| (d.label_waypoints.as_slice(), d.label_speed))
        .collect();

    let n = dataset.demos.len();
    let mut velocity: Vec<Vec<f64>> = policy
        .net
        .tensors()
        .iter()
        .map(|t| vec![0.0; t.len()])
        .collect();
    let mut curve = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        // Cosine decay to zero over the run.
        let lr = if cfg.epochs <= 1 {
            cfg.lr
        } else {
            cfg.lr * 0.5 * (1.0 + (std::f64::consts::PI * epoch as f64 / cfg.epochs as f64).cos())
        };
        let mut order: Vec<usize> = (0..n).collect();
        shuffle(&mut order, cfg.seed, epoch);

        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size.max(1)) {
            let scale = 1.0 / batch.len() as f64;
            // Fixed sub-chunks keep the reduction order deterministic under
            // parallel execution.
            let parts: Vec<(Grads, f64, bool)> = batch
                .par_chunks(16)
                .map(|chunk| {
                    let mut grads = Grads::zeros_like(&policy.net);
                    let mut loss = 0.0;
                    let mut ok = true;
                    for &i in chunk {
                        match policy.net.forward(&scenes[i], &tps[i]) {
                            Ok(cache) => {
                                loss += backward_sample(
                                    &policy.net,
                                    &cache,
                                    labels[i].0,
                                    labels[i].1,
                                    scale,
                                    &mut grads,
                                );
                            }
                            Err(_) => ok = false,
                        }
                    }
                    (grads, loss, ok)
                })
                .collect();
            let mut grads = Grads::zeros_like(&policy.net);
            let mut batch_loss = 0.0;
            for (g, l, ok) in parts {
                if !ok {
                    return Err(TrainError::Diverged(epoch));
                }
                grads.add(&g);
                batch_loss += l;
            }
            batch_loss /= batch.len() as f64;
            if !batch_loss.is_finite() {
                return Err(TrainError::Diverged(epoch));
            }
            epoch_loss += batch_loss * batch.len() as f64;

            for ((tensor, vel), grad) in policy
                .net
                .tensors_mut()
                .into_iter()
                .zip(velocity.iter_mut())
                .zip(grads.tensors.iter())
            {
                for ((w, v), g) in tensor.iter_mut().zip(vel.iter_mut()).zip(grad) {
                    *v = cfg.momentum * *v + g;
                    *w -= lr * *v;
                }
            }
        }
        curve.push(EpochStat {
            epoch,
            mean_loss: epoch_loss / n as f64,
            lr,
        });
    }
    Ok((policy, curve))
}

/// Extracts expert-labeled demonstrations from a finished rollout.
///
/// Frames are subsampled every `subsample` ticks; a frame is kept only when
/// the full waypoint horizon lies inside the log and the expert reported a
/// target speed. Waypoint labels are the executed ego positions at the
/// horizon offsets, expressed in the frame of the labeling tick.
pub fn demonstrations_from_rollout(
    rollout: &crate::sim::Rollout,
    map: &crate::world::MapSpec,
    route: &crate::world::DenseRoute,
    sensor: &crate::sensing::SensorConfig,
    subsample: usize,
    policy_cfg_horizon: (usize, f64),
    params: &crate::sim::SimParams,
) -> Vec<Demonstration> {
    let (n_waypoints, waypoint_dt) = policy_cfg_horizon;
    let ticks_per_wp = (waypoint_dt / params.dt).round() as usize;
    let horizon_ticks = n_waypoints * ticks_per_wp;
    let records = &rollout.log.records;
    let mut demos = Vec::new();
    let mut t = 0usize;
    while t + horizon_ticks < records.len() {
        let record = &records[t];
        let Some(label_speed) = record.summary.target_speed else {
            t += subsample.max(1);
            continue;
        };
        let world = &rollout.trace[t];
        let obs_one = crate::sensing::observe(
            world,
            map,
            route,
            record.tps_one,
            sensor,
            TpMode::One,
            None,
        );
        let obs_three = crate::sensing::observe(
            world,
            map,
            route,
            record.tps,
            sensor,
            TpMode::Three,
            None,
        );
        let pose = record.ego_pose;
        let label_waypoints: Vec<Vec2> = (1..=n_waypoints)
            .map(|k| pose.to_local(records[t + k * ticks_per_wp].ego_pose.position))
            .collect();
        let finite = label_waypoints
            .iter()
            .all(|w| w.x.is_finite() && w.y.is_finite())
            && label_speed.is_finite();
        if finite {
            demos.push(Demonstration {
                bev: obs_three.bev,
                ego_speed: record.ego_speed,
                light_state: obs_three.light_state,
                tp_one: obs_one.tps_raw,
                tp_three: obs_three.tps_raw,
                label_waypoints,
                label_speed,
            });
        }
        t += subsample.max(1);
    }
    demos
}

/// Fisher-Yates with a per-epoch seeded stream.
fn shuffle(order: &mut [usize], seed: u64, epoch: usize) {
    use rand::Rng;
    let mut rng = stream(seed, &format!("shuffle-epoch-{epoch}"));
    for i in (1..order.len()).rev() {
        let j = rng.gen_range(0..=i);
        order.swap(i, j);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::student::net::Conditioning;

    fn synthetic_demo(seed: u64) -> Demonstration {
        use rand::Rng;
        let mut rng = stream(seed, "demo");
        let mut bev = BevGrid::new();
        for _ in 0..40 {
            bev.set(
                rng.gen_range(0..3),
                rng.gen_range(0..32),
                rng.gen_range(0..32),
            );
        }
        let tp = Vec2::new(rng.gen::<f64>() * 20.0 - 10.0, rng.gen::<f64>() * 40.0);
        Demonstration {
            bev,
            ego_speed: rng.gen::<f64>() * 8.0,
            light_state: LightObs::None,
            tp_one: vec![tp],
            tp_three: vec![Vec2::new(0.0, -10.0), tp, Vec2::new(5.0, 45.0)],
            label_waypoints: (1..=4)
                .map(|k| Vec2::new(tp.x * 0.05 * k as f64, k as f64 * 2.0))
                .collect(),
            label_speed: rng.gen::<f64>() * 6.0 + 1.0,
        }
    }

    fn tiny_policy_cfg(conditioning: Conditioning, seed: u64) -> PolicyConfig {
        PolicyConfig {
            conditioning,
            tp_mode: TpMode::One,
            trunk_widths: vec![24],
            bottleneck_width: 8,
            n_waypoints: 4,
            waypoint_dt: 0.5,
            seed,
        }
    }

    #[test]
    fn overfits_ten_samples() {
        let dataset = Dataset {
            demos: (0..10).map(synthetic_demo).collect(),
        };
        let (policy, curve) = train(
            &dataset,
            &tiny_policy_cfg(Conditioning::EarlyDense, 0),
            &TrainConfig::new(2000, 0),
        )
        .unwrap();
        let final_loss = curve.last().unwrap().mean_loss;
        assert!(final_loss < 0.05, "final loss {final_loss}");
        assert!(policy.stats.is_some());
        // Loss decreased from the first epoch to the best epoch.
        let best = curve
            .iter()
            .map(|s| s.mean_loss)
            .fold(f64::MAX, f64::min);
        assert!(best < curve[0].mean_loss);
    }

    #[test]
    fn training_is_bitwise_deterministic() {
        let dataset = Dataset {
            demos: (0..24).map(synthetic_demo).collect(),
        };
        let run = || {
            let (policy, _) = train(
                &dataset,
                &tiny_policy_cfg(Conditioning::LateBottleneck, 5),
                &TrainConfig::new(8, 7),
            )
            .unwrap();
            policy
                .net
                .tensors()
                .iter()
                .flat_map(|t| t.iter().map(|v| v.to_bits()))
                .collect::<Vec<u64>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn empty_dataset_is_an_error() {
        let err = train(
            &Dataset::default(),
            &tiny_policy_cfg(Conditioning::EarlyDense, 0),
            &TrainConfig::new(1, 0),
        )
        .unwrap_err();
        assert!(matches!(err, TrainError::EmptyDataset));
    }
}
