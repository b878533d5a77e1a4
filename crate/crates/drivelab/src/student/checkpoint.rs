//! Versioned policy checkpoints: config, normalization stats, and flat
//! parameter arrays in the documented tensor order.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::io::{read_json, write_json, IoError};
use crate::sensing::TpStats;

use super::{Policy, PolicyConfig};

pub const CHECKPOINT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub schema_version: u32,
    pub config: PolicyConfig,
    pub tp_stats: TpStats,
    /// Tensor order: trunk.{i}.{w,b} pairs, then the conditioning head pairs
    /// (early: wp_head; late: tp_embed, rnn_xh, rnn_hh, wp_out), then
    /// speed_head.{w,b}.
    pub tensors: Vec<NamedTensor>,
}

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error(transparent)]
    Io(#[from] IoError),
    #[error("unsupported checkpoint schema version {0} (expected {CHECKPOINT_SCHEMA_VERSION})")]
    SchemaVersion(u32),
    #[error("checkpoint tensor {name} has length {got}, expected {want}")]
    TensorShape {
        name: String,
        got: usize,
        want: usize,
    },
    #[error("checkpoint tensors do not match config: expected {want:?}, got {got:?}")]
    TensorNames { want: Vec<String>, got: Vec<String> },
    #[error("checkpoint has no normalization stats")]
    MissingStats,
}

pub fn save_checkpoint(policy: &Policy, path: &Path) -> Result<(), CheckpointError> {
    let stats = policy.stats.ok_or(CheckpointError::MissingStats)?;
    let names = policy.net.tensor_names();
    let tensors = names
        .into_iter()
        .zip(policy.net.tensors())
        .map(|(name, data)| NamedTensor {
            name,
            data: data.to_vec(),
        })
        .collect();
    let ckpt = Checkpoint {
        schema_version: CHECKPOINT_SCHEMA_VERSION,
        config: policy.config.clone(),
        tp_stats: stats,
        tensors,
    };
    write_json(path, &ckpt)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Policy, CheckpointError> {
    let ckpt: Checkpoint = read_json(path)?;
    if ckpt.schema_version != CHECKPOINT_SCHEMA_VERSION {
        return Err(CheckpointError::SchemaVersion(ckpt.schema_version));
    }
    let mut policy = Policy::init(ckpt.config.clone());
    policy.stats = Some(ckpt.tp_stats);
    let want = policy.net.tensor_names();
    let got: Vec<String> = ckpt.tensors.iter().map(|t| t.name.clone()).collect();
    if want != got {
        return Err(CheckpointError::TensorNames { want, got });
    }
    for (slot, tensor) in policy.net.tensors_mut().into_iter().zip(&ckpt.tensors) {
        if slot.len() != tensor.data.len() {
            return Err(CheckpointError::TensorShape {
                name: tensor.name.clone(),
                got: tensor.data.len(),
                want: slot.len(),
            });
        }
        slot.copy_from_slice(&tensor.data);
    }
    Ok(policy)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sensing::{BevGrid, LightObs, Observation, TpMode};
    use crate::student::net::Conditioning;
    use crate::world::Vec2;
    use rand::Rng;

    fn policy_with_stats() -> Policy {
        let mut p = Policy::init(PolicyConfig {
            conditioning: Conditioning::LateBottleneck,
            tp_mode: TpMode::Three,
            trunk_widths: vec![16],
            bottleneck_width: 6,
            n_waypoints: 4,
            waypoint_dt: 0.5,
            seed: 11,
        });
        p.stats = Some(TpStats {
            x_min: -20.0,
            x_max: 20.0,
            y_min: -10.0,
            y_max: 60.0,
        });
        p
    }

    #[test]
    fn roundtrip_is_bitwise_identical_on_random_observations() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.json");
        let policy = policy_with_stats();
        save_checkpoint(&policy, &path).unwrap();
        let loaded = load_checkpoint(&path).unwrap();
        let mut rng = crate::rng::stream(3, "ckpt-test");
        for _ in 0..100 {
            let mut bev = BevGrid::new();
            for _ in 0..30 {
                bev.set(
                    rng.gen_range(0..3),
                    rng.gen_range(0..32),
                    rng.gen_range(0..32),
                );
            }
            let obs = Observation {
                bev,
                ego_speed: rng.gen::<f64>() * 9.0,
                light_state: LightObs::Red,
                tp_mode: TpMode::Three,
                tps_raw: (0..3)
                    .map(|_| Vec2::new(rng.gen::<f64>() * 30.0 - 15.0, rng.gen::<f64>() * 50.0))
                    .collect(),
                tps_norm: None,
            };
            let a = policy.forward(&obs).unwrap();
            let b = loaded.forward(&obs).unwrap();
            assert_eq!(a.target_speed.to_bits(), b.target_speed.to_bits());
            for (x, y) in a.waypoints.iter().zip(&b.waypoints) {
                assert_eq!(x.x.to_bits(), y.x.to_bits());
                assert_eq!(x.y.to_bits(), y.y.to_bits());
            }
        }
    }

    #[test]
    fn wrong_schema_version_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.json");
        let policy = policy_with_stats();
        save_checkpoint(&policy, &path).unwrap();
        let mut ckpt: Checkpoint = crate::io::read_json(&path).unwrap();
        ckpt.schema_version = 99;
        crate::io::write_json(&path, &ckpt).unwrap();
        assert!(matches!(
            load_checkpoint(&path),
            Err(CheckpointError::SchemaVersion(99))
        ));
    }
}
