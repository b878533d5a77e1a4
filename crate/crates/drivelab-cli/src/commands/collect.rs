use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::Args;

use drivelab::expert::{ExpertMode, ExpertPilot};
use drivelab::io::{write_json, write_jsonl};
use drivelab::sensing::SensorConfig;
use drivelab::sim::{run_rollout, RolloutConfig, Sim};
use drivelab::student::{demonstrations_from_rollout, Dataset, DatasetManifest};
use drivelab::world::{build_lane_graph, plan_route, ROUTE_SPACING};

#[derive(Args)]
pub struct CollectArgs {
    /// Suite file the demonstrations are collected on.
    #[arg(long)]
    pub suite: PathBuf,
    /// Expert mode supervising the dataset.
    #[arg(long)]
    pub expert: String,
    /// Rollout seeds, comma-separated.
    #[arg(long, default_value = "1")]
    pub seeds: String,
    /// Keep every Nth tick as a demonstration frame.
    #[arg(long, default_value_t = 5)]
    pub subsample: usize,
    /// Output dataset directory.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(args: CollectArgs) -> Result<()> {
    let mode: ExpertMode = args
        .expert
        .parse()
        .map_err(|e: String| anyhow::anyhow!(e))?;
    let (suite, town) = super::load_suite(&args.suite)?;
    if suite.routes.is_empty() {
        bail!("suite `{}` has no routes", suite.name);
    }
    let seeds = super::parse_seeds(&args.seeds)?;
    let sensor = SensorConfig::preset(&suite.sensor_preset)
        .with_context(|| format!("unknown sensor preset `{}`", suite.sensor_preset))?;
    let graph = build_lane_graph(&town)?;
    let sim = Sim::new(&town);

    let shard_dir = args.out.join("shards");
    std::fs::create_dir_all(&shard_dir)?;
    let mut dataset = Dataset::default();
    let mut routes = Vec::new();
    let mut failures = Vec::new();
    for sr in &suite.routes {
        for seed in &seeds {
            let route = match plan_route(&graph, &town, sr.start, sr.goal, ROUTE_SPACING) {
                Ok(r) => r,
                Err(e) => {
                    failures.push(format!("{} (seed {seed}): {e}", sr.id));
                    continue;
                }
            };
            let mut pilot = ExpertPilot::new(mode, sensor.clone());
            let config = RolloutConfig {
                route_id: sr.id.clone(),
                seed: *seed,
                max_ticks: sr.max_ticks,
                conditions: sr.conditions,
                ambient_vehicles: sr.ambient_vehicles,
            };
            let rollout = match run_rollout(&sim, &mut pilot, &route, &sr.scenarios, &config) {
                Ok(r) => r,
                Err(e) => {
                    failures.push(format!("{} (seed {seed}): {e}", sr.id));
                    continue;
                }
            };
            let demos = demonstrations_from_rollout(
                &rollout,
                &town,
                &route.dense,
                &sensor,
                args.subsample,
                (4, 0.5),
                &sim.params,
            );
            write_jsonl(&shard_dir.join(format!("{}_s{seed}.jsonl", sr.id)), &demos)?;
            routes.push(format!("{}_s{seed}", sr.id));
            dataset.demos.extend(demos);
        }
    }
    if dataset.demos.is_empty() {
        bail!("no demonstrations collected; failures: {failures:?}");
    }
    let manifest = DatasetManifest {
        schema_version: 1,
        expert_mode: format!("{mode:?}").to_lowercase(),
        suite: suite.name.clone(),
        suite_hash: suite.hash(),
        routes,
        demo_count: dataset.demos.len(),
        tp_stats: dataset.tp_stats().expect("non-empty dataset"),
    };
    write_json(&args.out.join("manifest.json"), &manifest)?;
    if !failures.is_empty() {
        write_json(&args.out.join("failures.json"), &failures)?;
    }
    println!(
        "collected {} demonstrations into {}",
        manifest.demo_count,
        args.out.display()
    );
    Ok(())
}
