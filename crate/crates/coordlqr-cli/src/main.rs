//! `coordlqr`: synthesis and verification front end for coordinated LQR
//! with diagonal-plus-rank-one feedback.

use clap::{Parser, Subcommand, ValueEnum};
use coordlqr::freqcoord::WeightFamily;
use coordlqr::Tolerances;
use coordlqr_cli::commands::{self, CliError};
use coordlqr_cli::config::ScenarioConfig;
use coordlqr_cli::scenarios;
use serde_json::json;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "coordlqr",
    about = "Coordinated LQR synthesis, trade-off sweeps, simulation and oracle verification",
    version
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Synthesize gains and cost decomposition for the configured mode.
    Synth {
        #[command(flatten)]
        common: Common,
    },
    /// Per-agent coordination cost as the ensemble grows (hard mode,
    /// disturbance-impulse initial states).
    #[command(name = "cost-vs-nu")]
    CostVsNu {
        #[command(flatten)]
        common: Common,
        /// Ensemble size range `lo:hi` (inclusive).
        #[arg(long, default_value = "2:128")]
        nu_range: String,
    },
    /// Trade-off table over a lambda grid for one weight family.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Grid `start:end:count` with lambda in [0, 1).
        #[arg(long, default_value = "0:0.95:20")]
        lambda_grid: String,
        #[arg(long, value_enum, default_value_t = FamilyArg::Static)]
        weight_family: FamilyArg,
    },
    /// Emit a closed-loop trajectory CSV.
    Simulate {
        #[command(flatten)]
        common: Common,
    },
    /// Check the closed-form cost against the brute-force aggregate oracle.
    Oracle {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(clap::Args)]
struct Common {
    /// Scenario file, or one of builtin:wind-farm, builtin:wind-farm-stabilized,
    /// builtin:tadpole.
    #[arg(long)]
    config: String,
    /// Output path (JSON or CSV depending on the command).
    #[arg(long)]
    out: PathBuf,
    /// Override the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum FamilyArg {
    Static,
    Integrator,
}

impl From<FamilyArg> for WeightFamily {
    fn from(f: FamilyArg) -> Self {
        match f {
            FamilyArg::Static => WeightFamily::Static,
            FamilyArg::Integrator => WeightFamily::Integrator,
        }
    }
}

fn load_config(spec: &str) -> Result<ScenarioConfig, CliError> {
    if let Some(name) = spec.strip_prefix("builtin:") {
        return scenarios::builtin(name).ok_or_else(|| {
            CliError::validation(
                "InvalidConfig",
                format!("unknown builtin scenario {name:?}"),
            )
        });
    }
    let text = std::fs::read_to_string(spec)
        .map_err(|e| CliError::validation("InvalidConfig", format!("read {spec}: {e}")))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::validation("InvalidConfig", format!("parse {spec}: {e}")))
}

fn parse_range(s: &str) -> Result<(usize, usize), CliError> {
    let bad = || {
        CliError::validation(
            "InvalidConfig",
            format!("bad --nu-range {s:?} (want lo:hi)"),
        )
    };
    let (lo, hi) = s.split_once(':').ok_or_else(bad)?;
    Ok((
        lo.parse().map_err(|_| bad())?,
        hi.parse().map_err(|_| bad())?,
    ))
}

fn parse_grid(s: &str) -> Result<Vec<f64>, CliError> {
    let bad = || {
        CliError::validation(
            "InvalidConfig",
            format!("bad --lambda-grid {s:?} (want start:end:count)"),
        )
    };
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != 3 {
        return Err(bad());
    }
    let start: f64 = parts[0].parse().map_err(|_| bad())?;
    let end: f64 = parts[1].parse().map_err(|_| bad())?;
    let count: usize = parts[2].parse().map_err(|_| bad())?;
    if count == 0 || !(0.0..1.0).contains(&start) || !(0.0..1.0).contains(&end) || end < start {
        return Err(bad());
    }
    if count == 1 {
        return Ok(vec![start]);
    }
    let step = (end - start) / (count - 1) as f64;
    Ok((0..count).map(|k| start + step * k as f64).collect())
}

fn run() -> Result<(), CliError> {
    let cli = Cli::parse();
    let tol = Tolerances::default();
    match &cli.cmd {
        Cmd::Synth { common } => {
            let problem = load_config(&common.config)?.resolve(common.seed, &tol)?;
            commands::cmd_synth(&problem, &common.out, &tol)
        }
        Cmd::CostVsNu { common, nu_range } => {
            let range = parse_range(nu_range)?;
            let problem = load_config(&common.config)?.resolve(common.seed, &tol)?;
            commands::cmd_cost_vs_nu(&problem, range, &common.out, &tol)
        }
        Cmd::Sweep {
            common,
            lambda_grid,
            weight_family,
        } => {
            let grid = parse_grid(lambda_grid)?;
            let problem = load_config(&common.config)?.resolve(common.seed, &tol)?;
            commands::cmd_sweep(&problem, &grid, (*weight_family).into(), &common.out, &tol)
        }
        Cmd::Simulate { common } => {
            let problem = load_config(&common.config)?.resolve(common.seed, &tol)?;
            commands::cmd_simulate(&problem, &common.out, &tol)
        }
        Cmd::Oracle { common } => {
            let problem = load_config(&common.config)?.resolve(common.seed, &tol)?;
            commands::cmd_oracle(&problem, &common.out, &tol)
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", json!({"error": e.kind, "detail": e.detail}));
            ExitCode::from(e.code as u8)
        }
    }
}
