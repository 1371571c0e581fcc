//! Experiment harness: configuration files, single runs, parameter sweeps
//! against the fixed-port baseline, and CSV output.
//!
//! Configuration files are flat `key = value` text; `#` starts a comment.
//! Recognized keys are `M`, `m0`, `N`, `P_max_dBm`, `P_U_dBm`, `Gamma_dBm`,
//! `theta_rad`, `lambda_m`, `d_U_m`, `d_C_m`, `H_m`, `L_C_m`, `sigma2_dBm`
//! and `epsilon`. Missing keys keep their defaults; unknown or repeated keys
//! are rejected.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::ao::{ao_optimize, fixed_port_baseline, AoOutcome, Termination, DEFAULT_MAX_OUTER};
use crate::covariance::{SolverOptions, SolverStatus};
use crate::geometry::SystemConfig;
use crate::metrics::check_feasibility;
use crate::{Error, Result};

/// Default power grid, in dBm.
pub const DEFAULT_POWER_GRID: [f64; 5] = [8.0, 9.0, 10.0, 11.0, 12.0];

/// Default active-port grid; values above `M` are dropped and `M` itself is
/// always appended.
pub const DEFAULT_PORT_GRID: [usize; 5] = [2, 4, 6, 8, 10];

/// Parses configuration text on top of [`SystemConfig::default`].
pub fn parse_config(text: &str) -> Result<SystemConfig> {
    let mut cfg = SystemConfig::default();
    let mut seen = HashSet::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", lineno + 1)))?;
        let key = key.trim();
        let value = value.trim();
        if !seen.insert(key.to_string()) {
            return Err(Error::Config(format!(
                "line {}: duplicate key `{key}`",
                lineno + 1
            )));
        }
        let bad =
            |e: &dyn std::fmt::Display| Error::Config(format!("line {}: `{key}`: {e}", lineno + 1));
        let float = || value.parse::<f64>().map_err(|e| bad(&e));
        let count = || value.parse::<usize>().map_err(|e| bad(&e));
        match key {
            "M" => cfg.total_ports = count()?,
            "m0" => cfg.active_ports = count()?,
            "N" => cfg.rx_antennas = count()?,
            "P_max_dBm" => cfg.p_max_dbm = float()?,
            "P_U_dBm" => cfg.p_hover_dbm = float()?,
            "Gamma_dBm" => cfg.gamma_dbm = float()?,
            "theta_rad" => cfg.theta_rad = float()?,
            "lambda_m" => cfg.wavelength_m = float()?,
            "d_U_m" => cfg.port_spacing_m = float()?,
            "d_C_m" => cfg.rx_spacing_m = float()?,
            "H_m" => cfg.height_m = float()?,
            "L_C_m" => cfg.horizontal_distance_m = float()?,
            "sigma2_dBm" => cfg.sigma2_dbm = float()?,
            "epsilon" => cfg.epsilon = float()?,
            other => {
                return Err(Error::Config(format!(
                    "line {}: unknown key `{other}`",
                    lineno + 1
                )));
            }
        }
    }
    cfg.validate().map_err(|e| Error::Config(e.to_string()))?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<SystemConfig> {
    parse_config(&fs::read_to_string(path)?)
}

/// Renders `cfg` in the configuration file format.
pub fn render_config(cfg: &SystemConfig) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "M = {}", cfg.total_ports);
    let _ = writeln!(out, "m0 = {}", cfg.active_ports);
    let _ = writeln!(out, "N = {}", cfg.rx_antennas);
    let _ = writeln!(out, "P_max_dBm = {}", cfg.p_max_dbm);
    let _ = writeln!(out, "P_U_dBm = {}", cfg.p_hover_dbm);
    let _ = writeln!(out, "Gamma_dBm = {}", cfg.gamma_dbm);
    let _ = writeln!(out, "theta_rad = {}", cfg.theta_rad);
    let _ = writeln!(out, "lambda_m = {}", cfg.wavelength_m);
    let _ = writeln!(out, "d_U_m = {}", cfg.port_spacing_m);
    let _ = writeln!(out, "d_C_m = {}", cfg.rx_spacing_m);
    let _ = writeln!(out, "H_m = {}", cfg.height_m);
    let _ = writeln!(out, "L_C_m = {}", cfg.horizontal_distance_m);
    let _ = writeln!(out, "sigma2_dBm = {}", cfg.sigma2_dbm);
    let _ = writeln!(out, "epsilon = {}", cfg.epsilon);
    out
}

#[derive(Debug, Clone, PartialEq)]
pub enum Sweep {
    None,
    PMaxDbm(Vec<f64>),
    ActivePorts(Vec<usize>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Baseline {
    None,
    FixedPorts,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub base: SystemConfig,
    pub sweep: Sweep,
    pub baseline: Baseline,
    pub output: PathBuf,
    /// Carried into the summary; no harness path draws random numbers.
    pub seed: u64,
    /// Sweep points evaluated concurrently.
    pub workers: usize,
    pub solver: SolverOptions,
    pub max_outer: usize,
    /// Adds a wall-clock `millis` column to trace CSVs (breaks byte-for-byte
    /// reproducibility).
    pub timings: bool,
}

impl ExperimentSpec {
    pub fn new(base: SystemConfig, sweep: Sweep, output: impl Into<PathBuf>) -> Self {
        Self {
            base,
            sweep,
            baseline: Baseline::FixedPorts,
            output: output.into(),
            seed: 0,
            workers: 1,
            solver: SolverOptions::default(),
            max_outer: DEFAULT_MAX_OUTER,
            timings: false,
        }
    }

    fn validate(&self) -> Result<()> {
        self.base.validate()?;
        self.solver.validate()?;
        if self.workers == 0 {
            return Err(Error::domain("workers must be at least 1"));
        }
        match &self.sweep {
            Sweep::None => {}
            Sweep::PMaxDbm(values) => {
                if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
                    return Err(Error::domain("power sweep needs finite values"));
                }
            }
            Sweep::ActivePorts(values) => {
                if values.is_empty() {
                    return Err(Error::domain("port sweep needs at least one value"));
                }
                if let Some(bad) = values
                    .iter()
                    .find(|&&m0| m0 == 0 || m0 > self.base.total_ports)
                {
                    return Err(Error::domain(format!(
                        "m0 = {bad} outside 1..={}",
                        self.base.total_ports
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Result of [`run_single`].
#[derive(Debug, Clone, PartialEq)]
pub struct SingleRun {
    pub outcome: AoOutcome,
    pub summary: String,
}

/// Runs the alternating optimization once, writes its trace CSV to
/// `spec.output` and returns a one-line summary.
pub fn run_single(spec: &ExperimentSpec) -> Result<SingleRun> {
    spec.validate()?;
    let outcome = ao_optimize(&spec.base, &spec.solver, spec.max_outer)?;
    let mut file = io::BufWriter::new(fs::File::create(&spec.output)?);
    write_trace_csv(&outcome, &mut file, spec.timings)?;
    file.flush()?;
    let last = outcome.trace.records.last().expect("non-empty trace");
    let summary = format!(
        "rate={} bit/use P_S={} mW tr(W)={} mW selection={} cycles={} termination={} seed={}",
        last.rate,
        last.beampattern_gain_mw,
        last.tx_power_mw,
        outcome.selection,
        outcome.trace.len(),
        termination_label(outcome.termination),
        spec.seed
    );
    Ok(SingleRun { outcome, summary })
}

pub fn termination_label(t: Termination) -> &'static str {
    match t {
        Termination::Converged => "CONVERGED",
        Termination::MaxOuter => "MAX_OUTER",
        Termination::SolverStalled => "SOLVER_STALLED",
    }
}

/// One row per alternating cycle:
/// `i,rate_bits,beampattern_gain_mW,tx_power_mW,selection,status[,millis]`.
pub fn write_trace_csv<W: Write>(
    outcome: &AoOutcome,
    out: &mut W,
    timings: bool,
) -> io::Result<()> {
    write!(
        out,
        "i,rate_bits,beampattern_gain_mW,tx_power_mW,selection,status"
    )?;
    if timings {
        write!(out, ",millis")?;
    }
    writeln!(out)?;
    for r in &outcome.trace.records {
        write!(
            out,
            "{},{},{},{},{},{}",
            r.index, r.rate, r.beampattern_gain_mw, r.tx_power_mw, r.selection, r.solver_status
        )?;
        if timings {
            write!(out, ",{}", r.elapsed.as_millis())?;
        }
        writeln!(out)?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PointStatus {
    Ok,
    Infeasible,
    /// The alternating loop stopped without meeting `ε` or the covariance
    /// solver hit its cap.
    NotConverged,
}

impl PointStatus {
    pub fn label(self) -> &'static str {
        match self {
            PointStatus::Ok => "OK",
            PointStatus::Infeasible => "INFEASIBLE",
            PointStatus::NotConverged => "NOT_CONVERGED",
        }
    }
}

/// One sweep point.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    /// Swept value (`P_max` in dBm or `m0`).
    pub value: f64,
    pub status: PointStatus,
    pub rate_optimized: Option<f64>,
    pub rate_baseline: Option<f64>,
    pub cycles: usize,
    pub selection: Option<String>,
}

impl SweepRow {
    /// Optimized minus baseline rate, when both exist.
    pub fn gap(&self) -> Option<f64> {
        Some(self.rate_optimized? - self.rate_baseline?)
    }
}

fn evaluate_point(value: f64, cfg: &SystemConfig, spec: &ExperimentSpec) -> Result<SweepRow> {
    let infeasible = SweepRow {
        value,
        status: PointStatus::Infeasible,
        rate_optimized: None,
        rate_baseline: None,
        cycles: 0,
        selection: None,
    };
    if !check_feasibility(cfg).is_feasible() {
        return Ok(infeasible);
    }
    let outcome = match ao_optimize(cfg, &spec.solver, spec.max_outer) {
        Ok(o) => o,
        Err(Error::Infeasible(_)) => return Ok(infeasible),
        Err(e) => return Err(e),
    };
    let mut status = match outcome.termination {
        Termination::Converged => PointStatus::Ok,
        _ => PointStatus::NotConverged,
    };
    let rate_baseline = match spec.baseline {
        Baseline::None => None,
        Baseline::FixedPorts => {
            let (_, res) = fixed_port_baseline(cfg, &spec.solver)?;
            if res.status != SolverStatus::Optimal {
                status = PointStatus::NotConverged;
            }
            Some(res.objective)
        }
    };
    Ok(SweepRow {
        value,
        status,
        rate_optimized: Some(outcome.rate()),
        rate_baseline,
        cycles: outcome.trace.len(),
        selection: Some(outcome.selection.to_string()),
    })
}

fn run_points(spec: &ExperimentSpec, points: Vec<(f64, SystemConfig)>) -> Result<Vec<SweepRow>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(spec.workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    // Collecting an indexed parallel iterator keeps sweep order.
    pool.install(|| {
        points
            .par_iter()
            .map(|(value, cfg)| evaluate_point(*value, cfg, spec))
            .collect()
    })
}

/// Sweeps `P_max` (dBm); infeasible points become `INFEASIBLE` rows.
pub fn run_power_sweep(spec: &ExperimentSpec) -> Result<Vec<SweepRow>> {
    spec.validate()?;
    let Sweep::PMaxDbm(values) = &spec.sweep else {
        return Err(Error::domain("power sweep requires a P_max sweep"));
    };
    let points = values
        .iter()
        .map(|&p| {
            (
                p,
                SystemConfig {
                    p_max_dbm: p,
                    ..spec.base.clone()
                },
            )
        })
        .collect();
    let rows = run_points(spec, points)?;
    write_sweep_file(&spec.output, "P_max_dBm", &spec.base, &rows)?;
    Ok(rows)
}

/// Sweeps the number of active ports `m0`.
pub fn run_port_sweep(spec: &ExperimentSpec) -> Result<Vec<SweepRow>> {
    spec.validate()?;
    let Sweep::ActivePorts(values) = &spec.sweep else {
        return Err(Error::domain("port sweep requires an m0 sweep"));
    };
    let points = values
        .iter()
        .map(|&m0| {
            (
                m0 as f64,
                SystemConfig {
                    active_ports: m0,
                    ..spec.base.clone()
                },
            )
        })
        .collect();
    let rows = run_points(spec, points)?;
    write_sweep_file(&spec.output, "m0", &spec.base, &rows)?;
    Ok(rows)
}

/// Default port grid for a configuration with `total_ports` ports.
pub fn default_port_grid(total_ports: usize) -> Vec<usize> {
    let mut grid: Vec<usize> = DEFAULT_PORT_GRID
        .iter()
        .copied()
        .filter(|&m| m < total_ports)
        .collect();
    grid.push(total_ports);
    grid
}

fn write_sweep_file(
    path: &Path,
    column: &str,
    base: &SystemConfig,
    rows: &[SweepRow],
) -> Result<()> {
    let mut file = io::BufWriter::new(fs::File::create(path)?);
    write_sweep_csv(column, base, rows, &mut file)?;
    file.flush()?;
    Ok(())
}

/// `<column>,sigma2_dBm,status,rate_optimized,rate_fixed_baseline,cycles,selection_optimized`;
/// missing values are left empty.
pub fn write_sweep_csv<W: Write>(
    column: &str,
    base: &SystemConfig,
    rows: &[SweepRow],
    out: &mut W,
) -> io::Result<()> {
    writeln!(
        out,
        "{column},sigma2_dBm,status,rate_optimized,rate_fixed_baseline,cycles,selection_optimized"
    )?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.value,
            base.sigma2_dbm,
            r.status.label(),
            opt(r.rate_optimized),
            opt(r.rate_baseline),
            r.cycles,
            r.selection.as_deref().unwrap_or("")
        )?;
    }
    Ok(())
}
