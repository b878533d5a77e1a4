use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;

use drivelab::bench::{compare_reports, render_comparison, Report};
use drivelab::io::{read_json, write_atomic, write_json};

#[derive(Args)]
pub struct ReportArgs {
    /// Two or more report.json files from the same suite.
    #[arg(required = true, num_args = 2..)]
    pub reports: Vec<PathBuf>,
    /// Output directory for comparison.csv and comparison.json.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(args: ReportArgs) -> Result<()> {
    let loaded: Vec<Report> = args
        .reports
        .iter()
        .map(|p| read_json(p).with_context(|| format!("reading {}", p.display())))
        .collect::<Result<_>>()?;
    let refs: Vec<&Report> = loaded.iter().collect();
    let cmp = compare_reports(&refs)?;
    let (csv, text) = render_comparison(&cmp);
    print!("{text}");
    if let Some(out) = args.out {
        std::fs::create_dir_all(&out)?;
        write_json(&out.join("comparison.json"), &cmp)?;
        write_atomic(&out.join("comparison.csv"), csv.as_bytes())?;
    }
    Ok(())
}
