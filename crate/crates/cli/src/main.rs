#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod config;
mod pipeline;

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use collision_index::Error as CoreError;

use config::{ConfigError, RawConfig, RunConfig};
use pipeline::{Outcome, Output};

/// Morse and Maslov indices of collision and parabolic motions.
#[derive(Parser)]
#[command(name = "collision-index", version)]
struct Cli {
    /// Configuration file (`key = value` lines with dotted keys).
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,

    /// Override a configuration key, e.g. `--set system.alpha=0.5`.
    #[arg(short = 's', long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Solve for the central configuration.
    Cc,
    /// Check the [BS] condition.
    Bs,
    /// Limit spectra, eigenvalues of H* and BND at the limit.
    Limit,
    /// Emit the trajectory as CSV.
    Trajectory,
    /// Full index report.
    Index,
    /// Parameter scan as CSV.
    Scan,
    /// Check the chain of index equalities with full diagnostics.
    Verify,
}

fn load(cli: &Cli) -> Result<RunConfig> {
    let mut raw = match &cli.config {
        Some(p) => {
            let text = fs::read_to_string(p)
                .map_err(|e| ConfigError(format!("cannot read {}: {e}", p.display())))?;
            RawConfig::parse(&text)?
        }
        None => RawConfig::default(),
    };
    for kv in &cli.overrides {
        raw.apply_override(kv)?;
    }
    Ok(RunConfig::from_raw(&raw)?)
}

fn run(cli: &Cli) -> Result<u8> {
    let cfg = load(cli)?;
    let Outcome { output, exit } = match cli.command {
        Command::Cc => pipeline::cmd_cc(&cfg)?,
        Command::Bs => pipeline::cmd_bs(&cfg)?,
        Command::Limit => pipeline::cmd_limit(&cfg)?,
        Command::Trajectory => pipeline::cmd_trajectory(&cfg)?,
        Command::Index => pipeline::cmd_index(&cfg)?,
        Command::Scan => pipeline::cmd_scan(&cfg)?,
        Command::Verify => pipeline::cmd_verify(&cfg)?,
    };
    let text = match output {
        Output::Json(v) => serde_json::to_string_pretty(&v)? + "\n",
        Output::Text(t) => t,
    };
    let to_file = !matches!(cli.command, Command::Trajectory);
    match (&cfg.report, to_file) {
        (Some(path), true) => {
            fs::write(path, &text).with_context(|| format!("writing {}", path.display()))?
        }
        _ => print!("{text}"),
    }
    Ok(exit)
}

/// 2 configuration, 3 hypothesis violation, 4 numerical failure, 1 other.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.downcast_ref::<ConfigError>().is_some() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<CoreError>() {
            return match e {
                CoreError::InvalidInput(_) | CoreError::Parse { .. } | CoreError::Collision { .. } => 2,
                CoreError::Hypothesis(_) => 3,
                CoreError::NonConvergence(_) => 4,
                _ => 1,
            };
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
