use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::{info, warn};

use fasisac_core::ao::{Termination, DEFAULT_MAX_OUTER};
use fasisac_core::harness::{
    self, default_port_grid, ExperimentSpec, PointStatus, Sweep, SweepRow, DEFAULT_POWER_GRID,
};
use fasisac_core::metrics::check_feasibility;
use fasisac_core::{Error, SystemConfig};

/// Joint covariance and port-selection optimizer for a fluid-antenna ISAC
/// transmitter.
#[derive(Parser, Debug)]
#[command(name = "fasisac", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the alternating optimization once and write its trace CSV.
    Solve(Common),
    /// Sweep P_max (dBm) against the fixed-port baseline.
    SweepPower {
        #[command(flatten)]
        common: Common,
        /// Comma-separated P_max values in dBm.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        values: Option<Vec<f64>>,
    },
    /// Sweep the number of active ports against the fixed-port baseline.
    SweepPorts {
        #[command(flatten)]
        common: Common,
        /// Comma-separated m0 values.
        #[arg(long, value_delimiter = ',')]
        values: Option<Vec<usize>>,
    },
}

#[derive(Args, Debug)]
struct Common {
    /// Configuration file (`key = value`); defaults are used when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Sweep points evaluated concurrently.
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Debug logging to stderr.
    #[arg(long, short)]
    verbose: bool,
    /// Alternating-cycle cap.
    #[arg(long, default_value_t = DEFAULT_MAX_OUTER)]
    max_outer: usize,
    /// Add a wall-clock column to the trace CSV.
    #[arg(long)]
    timings: bool,
}

const EXIT_INFEASIBLE: u8 = 2;
const EXIT_IO: u8 = 3;
const EXIT_NONCONVERGENCE: u8 = 4;

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Infeasible(_) | Error::Config(_) | Error::Domain(_) => EXIT_INFEASIBLE,
        Error::Io(_) => EXIT_IO,
        Error::NonConvergence { .. } => EXIT_NONCONVERGENCE,
        _ => 1,
    }
}

fn load(path: Option<&Path>) -> Result<SystemConfig, Error> {
    match path {
        Some(p) => harness::load_config(p),
        None => Ok(SystemConfig::default()),
    }
}

fn spec_for(common: &Common, sweep: Sweep) -> Result<ExperimentSpec, Error> {
    let base = load(common.config.as_deref())?;
    let mut spec = ExperimentSpec::new(base, sweep, common.out.clone());
    spec.seed = common.seed;
    spec.workers = common.workers;
    spec.max_outer = common.max_outer;
    spec.timings = common.timings;
    Ok(spec)
}

fn report_rows(rows: &[SweepRow]) -> ExitCode {
    for r in rows {
        match r.status {
            PointStatus::Infeasible => warn!("point {}: infeasible", r.value),
            PointStatus::NotConverged => warn!("point {}: did not converge", r.value),
            PointStatus::Ok => {}
        }
    }
    let ok = rows.iter().filter(|r| r.status == PointStatus::Ok).count();
    println!(
        "{} points, {} solved, output rows in sweep order",
        rows.len(),
        ok
    );
    if rows.iter().any(|r| r.status == PointStatus::NotConverged) {
        ExitCode::from(EXIT_NONCONVERGENCE)
    } else {
        ExitCode::SUCCESS
    }
}

fn run(cli: Cli) -> Result<ExitCode, Error> {
    match cli.command {
        Command::Solve(common) => {
            let spec = spec_for(&common, Sweep::None)?;
            let feasibility = check_feasibility(&spec.base);
            if !feasibility.is_feasible() {
                return Err(Error::Infeasible(feasibility));
            }
            let run = harness::run_single(&spec)?;
            println!("{}", run.summary);
            info!("trace written to {}", spec.output.display());
            Ok(match run.outcome.termination {
                Termination::Converged => ExitCode::SUCCESS,
                _ => ExitCode::from(EXIT_NONCONVERGENCE),
            })
        }
        Command::SweepPower { common, values } => {
            let values = values.unwrap_or_else(|| DEFAULT_POWER_GRID.to_vec());
            let spec = spec_for(&common, Sweep::PMaxDbm(values))?;
            let rows = harness::run_power_sweep(&spec)?;
            Ok(report_rows(&rows))
        }
        Command::SweepPorts { common, values } => {
            let base = load(common.config.as_deref())?;
            let values = values.unwrap_or_else(|| default_port_grid(base.total_ports));
            let spec = spec_for(&common, Sweep::ActivePorts(values))?;
            let rows = harness::run_port_sweep(&spec)?;
            Ok(report_rows(&rows))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let verbose = match &cli.command {
        Command::Solve(c) => c.verbose,
        Command::SweepPower { common, .. } | Command::SweepPorts { common, .. } => common.verbose,
    };
    env_logger::Builder::new()
        .filter_level(if verbose {
            log::LevelFilter::Debug
        } else {
            log::LevelFilter::Warn
        })
        .init();

    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
