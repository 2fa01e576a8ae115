//! The `saavi` command line: configuration, run orchestration and output files.
//!
//! Exit codes: 0 success, 1 runtime failure (or a failed diagnostic), 2
//! configuration or usage error. `SAAVI_WORKERS` sets the worker count.

mod commands;
mod config;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use commands::{
    check_gradients_with, cmd_adam, cmd_check_gradients, cmd_compare, cmd_diagnose_unbounded, cmd_run,
    comparison_markdown, diagnose_unbounded, write_gradient_report, GradientFn, GradientReport, TimingRecord,
    TraceRecord, UnboundedReport,
};
pub use config::{
    parse_config, DatasetFormat, DatasetSpec, ExperimentConfig, Method, Overrides, UnboundedSpec,
};

use crate::error::{Error, Result};

pub const WORKERS_ENV: &str = "SAAVI_WORKERS";

#[derive(Debug, Parser)]
#[command(name = "saavi", version, about = "Variational inference by sample average approximation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// JSON experiment config.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory (default `saavi-out`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// `diagonal` or `dense`.
    #[arg(long, global = true)]
    pub family: Option<String>,
    /// Built-in model name, e.g. `gaussian-2d`, `funnel-5d`, `logistic-synthetic`.
    #[arg(long, global = true)]
    pub model: Option<String>,
    #[arg(long, global = true)]
    pub repetitions: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the SAA driver.
    Run,
    /// Run the Adam baseline.
    Adam,
    /// Compare Adam over a step-size grid against SAA.
    Compare,
    /// Show the objective growing like c + ln(lambda) when n < d.
    DiagnoseUnbounded {
        #[arg(long)]
        dim: Option<usize>,
        #[arg(long)]
        n: Option<usize>,
    },
    /// Check objective gradients against finite differences.
    CheckGradients {
        #[arg(long)]
        points: Option<usize>,
    },
}

impl Command {
    fn method(&self) -> Method {
        match self {
            Command::Run => Method::Saa,
            Command::Adam => Method::Adam,
            Command::Compare => Method::Compare,
            Command::DiagnoseUnbounded { .. } => Method::DiagnoseUnbounded,
            Command::CheckGradients { .. } => Method::CheckGradients,
        }
    }
}

/// 2 for configuration problems, 1 for everything else.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Json(_) => 2,
        _ => 1,
    }
}

fn worker_count() -> Result<Option<usize>> {
    match std::env::var(WORKERS_ENV) {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(Some(n)),
            _ => Err(Error::Config(format!("{WORKERS_ENV} must be a positive integer, got {v:?}"))),
        },
    }
}

fn dispatch(cli: Cli, stdout: &mut (dyn Write + Send), stderr: &mut (dyn Write + Send)) -> Result<i32> {
    let overrides = Overrides {
        seed: cli.seed,
        out: cli.out,
        family: cli.family,
        model: cli.model,
        repetitions: cli.repetitions,
        method: Some(cli.command.method()),
    };
    let mut cfg = parse_config(cli.config.as_deref(), &overrides)?;
    match cli.command {
        Command::Run => cmd_run(&cfg, stdout),
        Command::Adam => cmd_adam(&cfg, stdout),
        Command::Compare => cmd_compare(&cfg, stdout),
        Command::DiagnoseUnbounded { dim, n } => {
            let d = dim.unwrap_or(cfg.unbounded.dim);
            let n = n.unwrap_or(cfg.unbounded.n);
            cmd_diagnose_unbounded(d, n, cfg.seed, stdout, stderr)
        }
        Command::CheckGradients { points } => {
            if let Some(p) = points {
                cfg.gradient_points = p;
                cfg = cfg.resolve()?;
            }
            cmd_check_gradients(&cfg, stdout)
        }
    }
}

/// Parses `args` (including the program name) and runs the command,
/// returning the process exit code.
pub fn run_cli<I, T>(args: I, stdout: &mut (dyn Write + Send), stderr: &mut (dyn Write + Send)) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                let _ = stderr.write_all(text.as_bytes());
                2
            } else {
                let _ = stdout.write_all(text.as_bytes());
                0
            };
        }
    };
    let outcome = worker_count().and_then(|w| match w {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(format!("cannot start {n} workers: {e}")))?
            .install(|| dispatch(cli, stdout, stderr)),
        None => dispatch(cli, stdout, stderr),
    });
    match outcome {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            exit_code(&e)
        }
    }
}
