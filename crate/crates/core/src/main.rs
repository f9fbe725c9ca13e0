use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use serde_json::json;

use spinbath::harness::{run, ExperimentConfig, Overrides};
use spinbath::Error;

/// Run a spinbath experiment and write CSV data plus summary.json.
#[derive(Debug, Parser)]
#[command(name = "spinbath", version)]
struct Cli {
    /// simulate, haar-test, relaxation, spectrum, gap-study, fpt, avg-compare or brackets
    experiment: String,
    /// JSON config file
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    kappa: Option<f64>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory
    #[arg(long)]
    out: Option<PathBuf>,
}

fn fail(code: u8, kind: &str, err: &Error) -> ExitCode {
    let line = json!({ "error": kind, "module": err.module(), "message": err.to_string() });
    eprintln!("{line}");
    ExitCode::from(code)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion) => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("invalid arguments");
            return fail(2, "usage", &Error::Config(first.trim_start_matches("error: ").to_string()));
        }
    };

    if let Some(n) = std::env::var("SPINBATH_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        // only fails if a pool already exists, which cannot happen here
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }

    let text = match cli.config.as_ref().map(std::fs::read_to_string).transpose() {
        Ok(t) => t,
        Err(e) => return fail(2, "config", &Error::Config(format!("cannot read config: {e}"))),
    };
    let overrides = Overrides { gamma: cli.gamma, kappa: cli.kappa, sigma: cli.sigma, seed: cli.seed, out: cli.out };
    let config = match ExperimentConfig::resolve(&cli.experiment, text.as_deref(), &overrides) {
        Ok(c) => c,
        Err(e) => return fail(2, "config", &e),
    };
    match run(&config) {
        Ok(summary) => {
            let passed = summary.checks.iter().filter(|c| c.passed).count();
            println!(
                "{} done: {passed}/{} checks passed, output in {}",
                cli.experiment,
                summary.checks.len(),
                config.out.display()
            );
            ExitCode::SUCCESS
        }
        Err(e @ (Error::Io(_) | Error::Json(_))) => fail(1, "io", &e),
        Err(e) => fail(1, "numerical", &e),
    }
}
