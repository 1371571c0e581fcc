//! Alternating optimization of the covariance and the port selection.
//!
//! Each cycle solves the covariance subproblem for the current selection and
//! then runs one coordinate sweep with that covariance fixed. The rate is
//! recorded at the end of the cycle; the loop stops once two consecutive
//! cycle rates differ by at most `ε`.

use std::f64::consts::LN_2;
use std::time::{Duration, Instant};

use log::debug;
use nalgebra::DMatrix;

use crate::covariance::{solve_covariance, SolverOptions, SolverResult, SolverStatus};
use crate::geometry::{response_matrix, sensing_steering, PortSelection, SystemConfig};
use crate::metrics::{
    achievable_rate, beampattern_gain, check_feasibility, log_det_hpd, CovarianceMatrix,
};
use crate::port_search::coordinate_sweep;
use crate::{Error, Result};

pub const DEFAULT_MAX_OUTER: usize = 50;

/// One alternating cycle.
#[derive(Debug, Clone, PartialEq)]
pub struct CycleRecord {
    /// 0-based cycle index.
    pub index: usize,
    /// Rate at the end of the cycle (after the port sweep).
    pub rate: f64,
    /// Rate right after the covariance step, before ports moved.
    pub rate_after_covariance: f64,
    pub beampattern_gain_mw: f64,
    pub tx_power_mw: f64,
    pub selection: PortSelection,
    pub solver_status: SolverStatus,
    pub moves_accepted: usize,
    pub elapsed: Duration,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    /// Two consecutive cycle rates within `ε`.
    Converged,
    MaxOuter,
    /// The covariance solver hit its iteration cap; the loop stopped there.
    SolverStalled,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SolveTrace {
    pub records: Vec<CycleRecord>,
}

impl SolveTrace {
    pub fn rates(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.rate).collect()
    }

    pub fn final_rate(&self) -> Option<f64> {
        self.records.last().map(|r| r.rate)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AoOutcome {
    pub covariance: CovarianceMatrix,
    pub selection: PortSelection,
    pub trace: SolveTrace,
    pub termination: Termination,
}

impl AoOutcome {
    pub fn rate(&self) -> f64 {
        self.trace.final_rate().unwrap_or(0.0)
    }
}

/// Solves the covariance subproblem for a fixed selection.
pub fn solve_for_selection(
    sel: &PortSelection,
    cfg: &SystemConfig,
    opts: &SolverOptions,
) -> Result<SolverResult> {
    let g = response_matrix(sel, cfg)?;
    let a = sensing_steering(sel, cfg)?;
    solve_covariance(
        &g,
        &a,
        cfg.comm_power_mw(),
        cfg.gamma_mw(),
        cfg.sigma2_mw(),
        opts,
    )
}

/// Runs the alternating loop from the evenly spaced selection.
pub fn ao_optimize(
    cfg: &SystemConfig,
    opts: &SolverOptions,
    max_outer: usize,
) -> Result<AoOutcome> {
    let start = PortSelection::evenly_spaced(cfg.total_ports, cfg.active_ports)?;
    ao_optimize_from(cfg, start, opts, max_outer)
}

/// Runs the alternating loop from `start`.
///
/// Both steps are made non-decreasing: a covariance solve that comes back
/// below the incumbent's rate (solver tolerance) is discarded, and the sweep
/// only accepts strict improvements.
pub fn ao_optimize_from(
    cfg: &SystemConfig,
    start: PortSelection,
    opts: &SolverOptions,
    max_outer: usize,
) -> Result<AoOutcome> {
    cfg.validate()?;
    start.check_against(cfg)?;
    if max_outer == 0 {
        return Err(Error::domain("max_outer must be at least 1"));
    }
    let feasibility = check_feasibility(cfg);
    if !feasibility.is_feasible() {
        return Err(Error::Infeasible(feasibility));
    }

    let sigma2 = cfg.sigma2_mw();
    let mut selection = start;
    let mut incumbent: Option<CovarianceMatrix> = None;
    let mut trace = SolveTrace::default();
    let mut termination = Termination::MaxOuter;

    for index in 0..max_outer {
        let started = Instant::now();
        let g = response_matrix(&selection, cfg)?;
        let a = sensing_steering(&selection, cfg)?;
        let solved = solve_covariance(&g, &a, cfg.comm_power_mw(), cfg.gamma_mw(), sigma2, opts)?;
        match solved.status {
            SolverStatus::Optimal | SolverStatus::MaxIters => {}
            SolverStatus::Infeasible => {
                // The feasibility bound does not depend on the selection.
                return Err(Error::Infeasible(feasibility));
            }
        }

        let mut covariance = solved.covariance;
        let mut rate_after_covariance = solved.objective;
        if let Some(previous) = incumbent.take() {
            let previous_rate = achievable_rate(&previous, &g, sigma2)?;
            if previous_rate > rate_after_covariance {
                covariance = previous;
                rate_after_covariance = previous_rate;
            }
        }

        let sweep = coordinate_sweep(&selection, &covariance, cfg)?;
        selection = sweep.selection.clone();
        let record = CycleRecord {
            index,
            rate: sweep.rate,
            rate_after_covariance,
            beampattern_gain_mw: sweep.beampattern_gain_mw,
            tx_power_mw: covariance.trace(),
            selection: selection.clone(),
            solver_status: solved.status,
            moves_accepted: sweep.moves_accepted,
            elapsed: started.elapsed(),
        };
        debug!(
            "cycle {index}: rate {:.9} (after W-step {:.9}), {} moves, selection {selection}",
            record.rate, record.rate_after_covariance, record.moves_accepted
        );
        let previous_rate = trace.final_rate();
        trace.records.push(record);
        incumbent = Some(covariance);

        if solved.status == SolverStatus::MaxIters {
            termination = Termination::SolverStalled;
            break;
        }
        if previous_rate.is_some_and(|prev| (sweep.rate - prev).abs() <= cfg.epsilon) {
            termination = Termination::Converged;
            break;
        }
    }

    let covariance = incumbent.expect("at least one cycle ran");
    Ok(AoOutcome {
        covariance,
        selection,
        trace,
        termination,
    })
}

/// Rate of the fixed-port baseline: the evenly spaced selection with a single
/// covariance solve and no port moves.
pub fn fixed_port_baseline(
    cfg: &SystemConfig,
    opts: &SolverOptions,
) -> Result<(PortSelection, SolverResult)> {
    cfg.validate()?;
    let feasibility = check_feasibility(cfg);
    if !feasibility.is_feasible() {
        return Err(Error::Infeasible(feasibility));
    }
    let sel = PortSelection::evenly_spaced(cfg.total_ports, cfg.active_ports)?;
    let result = solve_for_selection(&sel, cfg, opts)?;
    Ok((sel, result))
}

/// `log2 det(I + (P_C/σ²) G_all^H G_all)` over all `M` ports.
///
/// Any selection and any `W` with `tr(W) <= P_C` satisfy
/// `G^H W G ⪯ P_C G^H G ⪯ P_C G_all^H G_all`, so no rate exceeds this.
pub fn rate_upper_bound(cfg: &SystemConfig) -> Result<f64> {
    let all = PortSelection::new((1..=cfg.total_ports).collect(), cfg.total_ports)?;
    let full_cfg = SystemConfig {
        active_ports: cfg.total_ports,
        ..cfg.clone()
    };
    let g = response_matrix(&all, &full_cfg)?;
    let gm = g.matrix();
    let n = gm.ncols();
    let snr = cfg.comm_power_mw().max(0.0) / cfg.sigma2_mw();
    let m = DMatrix::identity(n, n) + (gm.adjoint() * gm).scale(snr);
    Ok(log_det_hpd(crate::metrics::hermitian_part(&m))? / LN_2)
}

/// Sensing gain of `w` for `sel`, convenience for reporting.
pub fn selection_gain(
    sel: &PortSelection,
    w: &CovarianceMatrix,
    cfg: &SystemConfig,
) -> Result<f64> {
    beampattern_gain(w, &sensing_steering(sel, cfg)?)
}
