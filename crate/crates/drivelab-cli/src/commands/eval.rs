use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::Args;

use drivelab::bench::run_benchmark;
use drivelab::expert::{ExpertMode, ExpertPilot};
use drivelab::io::{write_atomic, write_json};
use drivelab::sensing::SensorConfig;
use drivelab::sim::Pilot;
use drivelab::student::{load_checkpoint, StudentPilot};

#[derive(Args)]
pub struct EvalArgs {
    /// Agent spec: `expert:privileged`, `expert:aligned`, or `policy:<path>`.
    #[arg(long)]
    pub agent: String,
    #[arg(long)]
    pub suite: PathBuf,
    /// Evaluation seeds, comma-separated (defaults to the suite's list).
    #[arg(long)]
    pub seeds: Option<String>,
    #[arg(long, default_value_t = 2)]
    pub jobs: usize,
    /// Output directory for report.json and report.csv.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(args: EvalArgs) -> Result<()> {
    let (suite, town) = super::load_suite(&args.suite)?;
    let seeds = match &args.seeds {
        Some(s) => super::parse_seeds(s)?,
        None => suite.eval_seeds.clone(),
    };
    if seeds.is_empty() {
        bail!("no evaluation seeds given");
    }
    let sensor = SensorConfig::preset(&suite.sensor_preset)
        .with_context(|| format!("unknown sensor preset `{}`", suite.sensor_preset))?;

    let report = if let Some(mode_text) = args.agent.strip_prefix("expert:") {
        let mode: ExpertMode = mode_text.parse().map_err(|e: String| anyhow::anyhow!(e))?;
        let sensor = sensor.clone();
        let factory = move || -> Box<dyn Pilot> { Box::new(ExpertPilot::new(mode, sensor.clone())) };
        run_benchmark(&factory, &args.agent, &suite, &town, &seeds, args.jobs)
    } else if let Some(path) = args.agent.strip_prefix("policy:") {
        let policy = load_checkpoint(&PathBuf::from(path))
            .with_context(|| format!("loading checkpoint {path}"))?;
        if let Some(required) = suite.student_tp_mode {
            if required != policy.config.tp_mode {
                bail!(
                    "suite `{}` requires tp mode {:?} but checkpoint {} was trained with {:?}",
                    suite.name,
                    required,
                    path,
                    policy.config.tp_mode
                );
            }
        }
        let sensor = sensor.clone();
        let factory = move || -> Box<dyn Pilot> {
            Box::new(StudentPilot {
                policy: policy.clone(),
                sensor: sensor.clone(),
            })
        };
        run_benchmark(&factory, &args.agent, &suite, &town, &seeds, args.jobs)
    } else {
        bail!(
            "unknown agent `{}` (expected expert:privileged, expert:aligned, or policy:<path>)",
            args.agent
        );
    };

    std::fs::create_dir_all(&args.out)?;
    write_json(&args.out.join("report.json"), &report)?;
    write_atomic(&args.out.join("report.csv"), report.to_csv().as_bytes())?;
    println!(
        "{} on {}: DS {:.2} ± {:.2}, SR {:.2}, NDS {:.2} over {} rows",
        report.agent,
        report.suite_name,
        report.aggregate.ds.mean,
        report.aggregate.ds.std,
        report.aggregate.sr.mean,
        report.aggregate.nds.mean,
        report.rows.len()
    );
    Ok(())
}
