use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use nskq_core::harness::{self, RunConfig, RunMode, VerifyCheck};

#[derive(Parser)]
#[command(name = "nskq", version, about = "Spectral experiments for compressible Navier-Stokes-Korteweg flows")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// JSON run configuration; defaults apply to missing fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Directory for run.json, norms.csv, radius.csv and snapshots/.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Picard solve of the configured data.
    Simulate,
    /// Solve and measure the analyticity radius at the sample times.
    Radius,
    /// Bootstrap hypothesis and radius ratio near t = 0.
    Bootstrap,
    /// Run a single check.
    Verify {
        #[arg(value_parser = parse_check)]
        check: VerifyCheck,
    },
}

fn parse_check(s: &str) -> std::result::Result<VerifyCheck, String> {
    s.parse().map_err(|_| {
        let names: Vec<String> = VerifyCheck::ALL.iter().map(|c| c.name()).collect();
        format!("unknown check `{s}`; expected one of {}", names.join(", "))
    })
}

fn load(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            RunConfig::from_json(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        None => RunConfig::default(),
    };
    match cli.command {
        Command::Simulate => cfg.mode = RunMode::Simulate,
        Command::Radius => cfg.mode = RunMode::Radius,
        Command::Bootstrap => cfg.mode = RunMode::Bootstrap,
        Command::Verify { check } => {
            cfg.mode = RunMode::Verify;
            cfg.check = Some(check);
        }
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.output = Some(out.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = load(&cli).and_then(|cfg| harness::execute(&cfg).context("run failed"));
    match result {
        Ok(report) => {
            // A closed pipe on stdout must not turn a finished run into a panic.
            let mut out = std::io::stdout().lock();
            for c in &report.checks {
                let _ = writeln!(out, "{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            if let Some(dir) = &report.config.output {
                let _ = writeln!(out, "artifacts in {}", dir.display());
            }
            if report.passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
