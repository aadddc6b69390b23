use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use cede::cli::{self, Mode, RunConfig};

/// Optimal reinsurance under distortion risk measures: solve, constrained
/// solve, verification against a brute-force oracle, and parameter sweeps.
#[derive(Parser, Debug)]
#[command(name = "cede", version, about)]
struct Args {
    /// What to run.
    #[arg(value_enum)]
    mode: Mode,

    /// Path to the JSON run configuration.
    #[arg(long)]
    config: PathBuf,

    /// Where to write the JSON report (stdout when omitted).
    #[arg(long)]
    out_json: Option<PathBuf>,

    /// Where to write the CSV artifact (skipped when omitted).
    #[arg(long)]
    out_csv: Option<PathBuf>,

    /// Seed for sampling-based components.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn main() -> ExitCode {
    let args = Args::parse();

    let text = match fs::read_to_string(&args.config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", args.config.display());
            return ExitCode::from(2);
        }
    };
    let config = match RunConfig::from_json(&text) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };

    match cli::run(
        args.mode,
        &config,
        args.seed,
        args.out_json.as_deref(),
        args.out_csv.as_deref(),
    ) {
        Ok(artifacts) => {
            if args.out_json.is_none() {
                print!("{}", artifacts.json);
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(cli::exit_code(&e) as u8)
        }
    }
}
