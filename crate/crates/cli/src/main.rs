//! `modl`: generate synthetic data, fit dictionaries, complete rating
//! matrices and post-process trajectories.
//!
//! Settings come from a flat `key = value` file (`--config`), then the
//! `MODL_SEED` environment variable, then `--set key=value` flags. The
//! resolved settings are written to `config.cfg` in the run directory.
//!
//! Exit statuses: 0 success, 2 configuration error, 3 data error,
//! 4 numeric failure, 1 anything else.

mod commands;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use modl_core::{ErrorKind, ModlError};

use commands::RunOptions;
use settings::{NumericError, UsageError};

#[derive(Parser)]
#[command(name = "modl", version, about = "Masked online dictionary learning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic dataset with its true factors (`kind = sparse-dict | low-rank-ratings`).
    Generate(Common),
    /// Learn a dictionary from `train`, writing a trajectory, checkpoint and dictionary.
    Fit {
        #[command(flatten)]
        common: Common,
        /// Reduction factors to sweep, one run each (sets `sweep_r`).
        #[arg(long, value_name = "LIST", num_args = 0..=1, default_missing_value = "1,4,8,12")]
        sweep_r: Option<String>,
        /// Weight exponents to sweep (sets `sweep_beta`).
        #[arg(long, value_name = "LIST", num_args = 0..=1, default_missing_value = "0.8,0.85,0.9,0.95,1")]
        sweep_beta: Option<String>,
        /// Continue from a checkpoint (sets `resume`).
        #[arg(long, value_name = "FILE")]
        resume: Option<PathBuf>,
    },
    /// Debias and factorize the ratings in `ratings`, reporting test RMSE.
    Complete {
        #[command(flatten)]
        common: Common,
        /// Weight exponents to sweep (sets `sweep_beta`).
        #[arg(long, value_name = "LIST", num_args = 0..=1, default_missing_value = "0.8,0.85,0.9,0.95,1")]
        sweep_beta: Option<String>,
        /// Choose `lambda` by cross-validation (sets `cv = true`).
        #[arg(long)]
        cv: bool,
    },
    /// Report the final score and convergence time of trajectory files.
    EvalTrajectory {
        #[arg(required = true)]
        files: Vec<PathBuf>,
        /// rmse, test_objective or surrogate; defaults to the first available.
        #[arg(long)]
        score: Option<String>,
        /// Relative half-width of the band around the final score.
        #[arg(long, default_value_t = 1e-3)]
        tolerance: f64,
    },
}

#[derive(Args)]
struct Common {
    /// Flat `key = value` settings file.
    #[arg(short, long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Setting override, applied after the file and `MODL_SEED`.
    #[arg(short, long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Parent of the run directory (sets `out_dir`).
    #[arg(short, long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Replace an existing run directory.
    #[arg(long)]
    overwrite: bool,
    /// Sweep runs executed concurrently.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

impl Common {
    fn overrides(&self, extra: &[(&str, Option<String>)]) -> Vec<String> {
        let mut out = self.set.clone();
        if let Some(dir) = &self.out {
            out.push(format!("out_dir={}", dir.display()));
        }
        for (k, v) in extra {
            if let Some(v) = v {
                out.push(format!("{k}={v}"));
            }
        }
        out
    }

    fn options(&self) -> RunOptions {
        RunOptions {
            overwrite: self.overwrite,
            jobs: self.jobs.max(1),
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Generate(common) => {
            let cfg = settings::load(common.config.as_deref(), &common.overrides(&[]))?;
            commands::generate(cfg, &common.options())
        }
        Command::Fit {
            common,
            sweep_r,
            sweep_beta,
            resume,
        } => {
            let extra = [
                ("sweep_r", sweep_r),
                ("sweep_beta", sweep_beta),
                ("resume", resume.map(|p| p.display().to_string())),
            ];
            let cfg = settings::load(common.config.as_deref(), &common.overrides(&extra))?;
            commands::fit(cfg, &common.options())
        }
        Command::Complete { common, sweep_beta, cv } => {
            let extra = [("sweep_beta", sweep_beta), ("cv", cv.then(|| "true".to_string()))];
            let cfg = settings::load(common.config.as_deref(), &common.overrides(&extra))?;
            commands::complete_cmd(cfg, &common.options())
        }
        Command::EvalTrajectory {
            files,
            score,
            tolerance,
        } => commands::eval_trajectory(&files, score.as_deref(), tolerance),
    }
}

fn exit_status(e: &anyhow::Error) -> u8 {
    if e.downcast_ref::<UsageError>().is_some() {
        return 2;
    }
    if e.downcast_ref::<NumericError>().is_some() {
        return 4;
    }
    if let Some(m) = e.downcast_ref::<ModlError>() {
        return match m.kind() {
            ErrorKind::Config => 2,
            ErrorKind::Data => 3,
            ErrorKind::Numeric => 4,
        };
    }
    if e.downcast_ref::<std::io::Error>().is_some() {
        return 3;
    }
    1
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_status(&e))
        }
    }
}
