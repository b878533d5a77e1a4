use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::Args;

use drivelab::io::{read_jsonl, write_atomic};
use drivelab::sensing::TpMode;
use drivelab::student::{
    save_checkpoint, train, Conditioning, Dataset, DatasetManifest, PolicyConfig, TrainConfig,
};

#[derive(Args)]
pub struct TrainArgs {
    /// Dataset directory produced by `collect`.
    #[arg(long)]
    pub dataset: PathBuf,
    /// Intent-conditioning design.
    #[arg(long, default_value = "early_dense")]
    pub conditioning: String,
    /// Target-point mode.
    #[arg(long, default_value = "three")]
    pub tp_mode: String,
    #[arg(long, default_value_t = 40)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Checkpoint output path.
    #[arg(long)]
    pub out: PathBuf,
    /// Training-curve CSV path (defaults next to the checkpoint).
    #[arg(long)]
    pub curve: Option<PathBuf>,
}

pub fn run(args: TrainArgs) -> Result<()> {
    let conditioning: Conditioning = args
        .conditioning
        .parse()
        .map_err(|e: String| anyhow::anyhow!(e))?;
    let tp_mode: TpMode = args.tp_mode.parse().map_err(|e: String| anyhow::anyhow!(e))?;

    let manifest_path = args.dataset.join("manifest.json");
    let manifest: DatasetManifest = drivelab::io::read_json(&manifest_path)
        .with_context(|| format!("reading {}", manifest_path.display()))?;
    if manifest.schema_version != 1 {
        bail!(
            "dataset schema version {} unsupported (expected 1)",
            manifest.schema_version
        );
    }
    let mut dataset = Dataset::default();
    let mut shard_names = manifest.routes.clone();
    shard_names.sort();
    for shard in &shard_names {
        let path = args.dataset.join("shards").join(format!("{shard}.jsonl"));
        let demos = read_jsonl(&path).with_context(|| format!("reading {}", path.display()))?;
        dataset.demos.extend(demos);
    }
    if dataset.demos.is_empty() {
        bail!("dataset at {} is empty", args.dataset.display());
    }

    let policy_cfg = PolicyConfig::new(conditioning, tp_mode, args.seed);
    let train_cfg = TrainConfig::new(args.epochs, args.seed);
    let (policy, curve) = train(&dataset, &policy_cfg, &train_cfg)?;
    save_checkpoint(&policy, &args.out)?;

    let curve_path = args
        .curve
        .unwrap_or_else(|| args.out.with_extension("curve.csv"));
    let mut csv = String::from("epoch,mean_loss,lr\n");
    for s in &curve {
        csv.push_str(&format!("{},{:.8},{:.8}\n", s.epoch, s.mean_loss, s.lr));
    }
    write_atomic(&curve_path, csv.as_bytes())?;
    println!(
        "trained {} epochs on {} demos; final loss {:.4}; checkpoint {}",
        curve.len(),
        dataset.demos.len(),
        curve.last().map(|s| s.mean_loss).unwrap_or(f64::NAN),
        args.out.display()
    );
    Ok(())
}
