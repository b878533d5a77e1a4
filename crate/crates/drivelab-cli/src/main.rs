//! `drivelab` — one reproducible pipeline binary: generate towns and suites,
//! collect expert demonstrations, train student policies, evaluate agents,
//! and compare reports.

mod commands;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "drivelab", version, about)]
struct Cli {
    /// Emit machine-readable error JSON on stderr.
    #[arg(long, global = true)]
    json_errors: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate towns and benchmark suites.
    Gen(commands::gen::GenArgs),
    /// Collect expert demonstrations over a suite.
    Collect(commands::collect::CollectArgs),
    /// Train a student policy on a collected dataset.
    Train(commands::train::TrainArgs),
    /// Evaluate an agent on a suite and write a report.
    Eval(commands::eval::EvalArgs),
    /// Compare two or more reports from the same suite.
    Report(commands::report::ReportArgs),
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gen(args) => commands::gen::run(args),
        Command::Collect(args) => commands::collect::run(args),
        Command::Train(args) => commands::train::run(args),
        Command::Eval(args) => commands::eval::run(args),
        Command::Report(args) => commands::report::run(args),
    };
    if let Err(err) = result {
        if cli.json_errors {
            eprintln!(
                "{}",
                serde_json::json!({ "error": format!("{err:#}") })
            );
        } else {
            eprintln!("error: {err:#}");
        }
        std::process::exit(1);
    }
}
