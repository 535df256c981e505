//! `ppsde`: simulation and convergence studies for the generalized
//! Aït-Sahalia model.
//!
//! Exit codes: 0 success, 1 runtime failure (including a failed check),
//! 2 invalid configuration.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ppsde_core::GridSpec;

use crate::commands::{CheckArgs, ConvergenceArgs, MlmcArgs, MomentArgs, SimulateArgs};
use crate::config::{resolve, CommonFlags};
use crate::error::CliError;

#[derive(Parser)]
#[command(
    name = "ppsde",
    version,
    about = "Positivity-preserving schemes for the generalized Ait-Sahalia model"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Built-in parameter set: eg1, eg2 or eg3 (default eg1).
    #[arg(long)]
    preset: Option<String>,
    /// TOML file with [model] and [run] sections.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Taming exponent, at least 1/2.
    #[arg(long)]
    alpha: Option<f64>,
    /// Time horizon T.
    #[arg(long)]
    horizon: Option<f64>,
    /// Worker threads; 0 uses every available core.
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn flags(&self) -> CommonFlags<'_> {
        CommonFlags {
            preset: self.preset.as_deref(),
            config: self.config.as_deref(),
            seed: self.seed,
            alpha: self.alpha,
            horizon: self.horizon,
            workers: self.workers,
            out: self.out.as_deref(),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Write sample paths to paths.csv.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// TEM, BEM or EM.
        #[arg(long)]
        scheme: Option<String>,
        /// Number of paths K (default 50).
        #[arg(long)]
        paths: Option<usize>,
        /// Step size T 2^-level.
        #[arg(long, default_value_t = 8)]
        level: u32,
    },
    /// Strong-error study against a fine reference; writes convergence.csv.
    Convergence {
        #[command(flatten)]
        common: Common,
        /// Schemes to test, comma separated (default BEM,TEM).
        #[arg(long, value_delimiter = ',')]
        scheme: Vec<String>,
        /// Scheme used for the reference solution.
        #[arg(long, default_value = "BEM")]
        reference: String,
        /// Monte Carlo paths M.
        #[arg(long)]
        paths: Option<usize>,
        /// Test levels, e.g. 4..9 or 4,6,8.
        #[arg(long)]
        levels: Option<String>,
        #[arg(long)]
        ref_level: Option<u32>,
        /// Scaled-down protocol: M = 1000, reference 2^-12, levels 4..8.
        #[arg(long)]
        desk: bool,
    },
    /// Sample the coefficient assumptions on a grid; writes assumptions.csv.
    CheckAssumptions {
        #[command(flatten)]
        common: Common,
        /// Step levels to check (default 4..9).
        #[arg(long)]
        levels: Option<String>,
        /// Coupling constant (default: c2/c3^2 in the critical case, else the required value).
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long, default_value_t = GridSpec::default().x_min)]
        x_min: f64,
        #[arg(long, default_value_t = GridSpec::default().x_max)]
        x_max: f64,
        #[arg(long, default_value_t = GridSpec::default().points)]
        grid_points: usize,
    },
    /// Empirical sup-moments across step sizes; writes moments.csv.
    Moments {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        scheme: Option<String>,
        /// Moment orders, comma separated (default 2).
        #[arg(long, value_delimiter = ',')]
        p: Vec<f64>,
        /// Step levels (default 4,6,8).
        #[arg(long)]
        levels: Option<String>,
        #[arg(long)]
        paths: Option<usize>,
        /// Track inverse moments E|Y|^-p.
        #[arg(long)]
        inverse: bool,
    },
    /// Multilevel Monte Carlo estimate of E[P(X_T)]; writes mlmc_levels.csv and mlmc_summary.csv.
    Mlmc {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        scheme: Option<String>,
        /// identity, call:K or digital:K.
        #[arg(long, default_value = "identity")]
        payoff: String,
        #[arg(long, default_value_t = 0.01)]
        target_rmse: f64,
        #[arg(long, default_value_t = 16)]
        max_level: u32,
    },
}

fn run(cli: Cli) -> Result<bool, CliError> {
    match cli.command {
        Command::Simulate {
            common,
            scheme,
            paths,
            level,
        } => {
            let (cfg, run) = resolve(&common.flags())?;
            let args = SimulateArgs {
                scheme: scheme.as_deref(),
                paths,
                level,
            };
            commands::simulate(&cfg, &run, &args).map(|_| true)
        }
        Command::Convergence {
            common,
            scheme,
            reference,
            paths,
            levels,
            ref_level,
            desk,
        } => {
            let (cfg, run) = resolve(&common.flags())?;
            let args = ConvergenceArgs {
                schemes: &scheme,
                reference: &reference,
                paths,
                levels: levels.as_deref(),
                ref_level,
                desk,
            };
            commands::convergence(&cfg, &run, &args).map(|_| true)
        }
        Command::CheckAssumptions {
            common,
            levels,
            gamma,
            x_min,
            x_max,
            grid_points,
        } => {
            let (cfg, run) = resolve(&common.flags())?;
            let args = CheckArgs {
                levels: levels.as_deref(),
                gamma,
                grid: GridSpec {
                    x_min,
                    x_max,
                    points: grid_points,
                },
            };
            commands::check(&cfg, &run, &args)
        }
        Command::Moments {
            common,
            scheme,
            p,
            levels,
            paths,
            inverse,
        } => {
            let (cfg, run) = resolve(&common.flags())?;
            let args = MomentArgs {
                scheme: scheme.as_deref(),
                p: &p,
                levels: levels.as_deref(),
                paths,
                inverse,
            };
            commands::moments(&cfg, &run, &args)
        }
        Command::Mlmc {
            common,
            scheme,
            payoff,
            target_rmse,
            max_level,
        } => {
            let (cfg, run) = resolve(&common.flags())?;
            let args = MlmcArgs {
                scheme: scheme.as_deref(),
                payoff: &payoff,
                target_rmse,
                max_level,
            };
            commands::mlmc(&cfg, &run, &args).map(|_| true)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
