use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;

use drivelab::bench::build_benchmarks;
use drivelab::io::write_json;
use drivelab::sim::{generate_town, TownSize};

#[derive(Args)]
pub struct GenArgs {
    /// Town seeds available for training data, comma-separated.
    #[arg(long, default_value = "21")]
    pub train_seeds: String,
    /// Held-out town seeds (never used for training data).
    #[arg(long, default_value = "121")]
    pub heldout_seeds: String,
    /// Suite-construction seed.
    #[arg(long, default_value_t = 9)]
    pub seed: u64,
    /// Size of the emitted standalone town files.
    #[arg(long, default_value = "large")]
    pub size: TownSizeArg,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy)]
pub struct TownSizeArg(pub TownSize);

impl std::str::FromStr for TownSizeArg {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.parse::<TownSize>().map(TownSizeArg)
    }
}

pub fn run(args: GenArgs) -> Result<()> {
    let train_seeds = super::parse_seeds(&args.train_seeds)?;
    let heldout_seeds = super::parse_seeds(&args.heldout_seeds)?;
    let set = build_benchmarks(&train_seeds, &heldout_seeds, args.seed)
        .context("building benchmark suites")?;

    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    for seed in train_seeds.iter().chain(heldout_seeds.iter()) {
        let town = generate_town(*seed, args.size.0);
        write_json(&args.out.join(format!("town_{seed}.json")), &town)?;
    }
    write_json(&args.out.join("suite_train.json"), &set.train)?;
    write_json(&args.out.join("suite_short.json"), &set.short)?;
    write_json(&args.out.join("suite_long.json"), &set.long)?;
    write_json(&args.out.join("suite_lane_change.json"), &set.lane_change)?;
    write_json(&args.out.join("suite_held_out.json"), &set.held_out)?;
    write_json(
        &args.out.join("gen_manifest.json"),
        &serde_json::json!({
            "schema_version": 1,
            "train_seeds": train_seeds,
            "heldout_seeds": heldout_seeds,
            "construction_seed": args.seed,
            "disjoint": true,
            "suites": ["train", "short", "long", "lane_change", "held_out"],
        }),
    )?;
    println!(
        "wrote {} towns and 5 suites to {}",
        train_seeds.len() + heldout_seeds.len(),
        args.out.display()
    );
    Ok(())
}
