use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::Parser;
use weakkam::config::RunConfig;
use weakkam::pipeline::{run, Command, Status};

/// Weak KAM solutions, barrier functions and homoclinic orbits on the torus.
#[derive(Debug, Parser)]
#[command(name = "weakkam", version)]
struct Cli {
    /// One of: alpha, solve, aubry, barrier, regularize, critical, orbit, pipeline, validate.
    command: String,
    /// JSON run configuration; defaults apply when omitted.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set solver.tol=1e-8` (repeatable).
    #[arg(short = 's', long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Worker threads (same as `--set workers=N`).
    #[arg(short, long)]
    workers: Option<usize>,
    /// Output directory (same as `--set output_dir=DIR`).
    #[arg(short, long)]
    out: Option<PathBuf>,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<weakkam::Error>() {
        Some(weakkam::Error::NonConvergence { .. } | weakkam::Error::Divergence { .. }) => 3,
        _ => 1,
    }
}

fn execute(cli: Cli) -> anyhow::Result<Status> {
    let command: Command = cli.command.parse()?;
    let text = match &cli.config {
        Some(p) => Some(fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?),
        None => None,
    };
    let mut overrides = cli.overrides.clone();
    if let Some(w) = cli.workers {
        overrides.push(format!("workers={w}"));
    }
    if let Some(o) = &cli.out {
        overrides.push(format!("output_dir={}", serde_json::to_string(&o.display().to_string())?));
    }
    let cfg = RunConfig::from_json(text.as_deref(), &overrides)?;
    let outcome = run(command, &cfg)?;
    println!("{}", serde_json::to_string_pretty(&outcome.summary)?);
    for a in &outcome.artifacts {
        eprintln!("wrote {}", a.display());
    }
    Ok(outcome.status)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli) {
        Ok(Status::Success) => ExitCode::SUCCESS,
        Ok(Status::ValidationFailed) => {
            eprintln!("validation failed");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
