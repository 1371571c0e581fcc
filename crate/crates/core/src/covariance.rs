//! Covariance subproblem for a fixed port selection:
//!
//! ```text
//! maximize   log2 det(I + G^H W G / σ²)
//! subject to tr(W) <= P_C,  a^H W a >= Γ,  W ⪰ 0
//! ```
//!
//! Both the objective and the constraints only see `W` through `G^H W G`,
//! `a^H W a` and `tr(W)`. Compressing `W` onto the column space `S` of
//! `[G a]` leaves the first two unchanged and cannot raise the trace, so the
//! optimum lives in `S` and the solver works with a `k x k` Hermitian
//! variable, `k = rank [G a] <= N + 1`, whatever `m0` is.
//!
//! The reduced problem is solved with a primal log-barrier method on
//! `-log det Y`, `-log(1 - tr Y)` and `-log(b^H Y b - γ)` after normalizing
//! powers by `P_C`. Newton steps are taken in an orthonormal real basis of
//! the Hermitian matrices. The objective is increasing in `W`, so the trace
//! constraint is active at the optimum; the final iterate is rescaled onto
//! it.

use std::f64::consts::{FRAC_1_SQRT_2, LN_2};
use std::fmt;

use log::debug;
use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};

use crate::geometry::{ResponseMatrix, SteeringVector};
use crate::metrics::{
    achievable_rate, aligned_witness, beampattern_gain, log_det_hpd, CovarianceMatrix,
};
use crate::{Error, Result, C64};

/// Relative window inside which `Γ = m0 P_C` counts as the marginal case.
const MARGINAL_TOL: f64 = 1e-12;
/// Singular values of `[G a]` below this fraction of the largest are dropped.
const RANK_TOL: f64 = 1e-12;
/// Newton decrement `λ²/2` at which centering stops.
const CENTERING_TOL: f64 = 1e-10;
/// Relative slack under which a constraint is reported active.
const ACTIVE_TOL: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Target for the normalized duality-gap bound of the barrier path.
    pub kkt_tol: f64,
    /// Cap on the total number of Newton steps.
    pub max_iters: usize,
    /// Factor applied to the barrier weight `1/t` after each centering.
    pub barrier_decrease: f64,
    /// Backtracking stops below this step length.
    pub min_step: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            kkt_tol: 1e-7,
            max_iters: 500,
            barrier_decrease: 0.2,
            min_step: 1e-12,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.kkt_tol > 0.0 && self.min_step > 0.0 && self.max_iters > 0) {
            return Err(Error::domain(
                "solver tolerances and iteration cap must be positive",
            ));
        }
        if !(self.barrier_decrease > 0.0 && self.barrier_decrease < 1.0) {
            return Err(Error::domain("barrier_decrease must lie in (0, 1)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverStatus {
    Optimal,
    Infeasible,
    MaxIters,
}

impl fmt::Display for SolverStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SolverStatus::Optimal => "OPTIMAL",
            SolverStatus::Infeasible => "INFEASIBLE",
            SolverStatus::MaxIters => "MAX_ITERS",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ActiveConstraints {
    pub trace: bool,
    pub beampattern: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverResult {
    /// Zero matrix when the status is `Infeasible`.
    pub covariance: CovarianceMatrix,
    /// Rate in bits per channel use.
    pub objective: f64,
    pub status: SolverStatus,
    /// Duality-gap bound of the last centered point, relative to the objective.
    pub kkt_residual: f64,
    pub active: ActiveConstraints,
    /// Newton steps taken.
    pub iterations: usize,
}

/// Solves the covariance subproblem for response `g` and steering vector `a`.
///
/// Powers are linear milliwatts. Infeasible instances (`P_C <= 0` or
/// `Γ > m0 P_C`) come back with status [`SolverStatus::Infeasible`]; only
/// malformed inputs are errors.
pub fn solve_covariance(
    g: &ResponseMatrix,
    a: &SteeringVector,
    comm_power_mw: f64,
    gamma_mw: f64,
    sigma2_mw: f64,
    opts: &SolverOptions,
) -> Result<SolverResult> {
    opts.validate()?;
    let m0 = g.ports();
    if a.len() != m0 {
        return Err(Error::dimension(format!(
            "steering vector has length {} but response matrix has {m0} rows",
            a.len()
        )));
    }
    if !(sigma2_mw.is_finite() && sigma2_mw > 0.0) {
        return Err(Error::domain(format!(
            "noise power must be positive, got {sigma2_mw}"
        )));
    }
    if !comm_power_mw.is_finite() || gamma_mw.is_nan() {
        return Err(Error::domain("powers must be finite"));
    }

    let gamma_mw = gamma_mw.max(0.0);
    let max_gain = m0 as f64 * comm_power_mw;
    if comm_power_mw <= 0.0 || gamma_mw > max_gain * (1.0 + MARGINAL_TOL) {
        return Ok(SolverResult {
            covariance: CovarianceMatrix::zeros(m0),
            objective: 0.0,
            status: SolverStatus::Infeasible,
            kkt_residual: f64::INFINITY,
            active: ActiveConstraints::default(),
            iterations: 0,
        });
    }
    if gamma_mw >= max_gain * (1.0 - MARGINAL_TOL) {
        // Only the aligned rank-one matrix reaches m0 * P_C.
        let w = aligned_witness(a, comm_power_mw);
        let objective = achievable_rate(&w, g, sigma2_mw)?;
        return Ok(SolverResult {
            covariance: w,
            objective,
            status: SolverStatus::Optimal,
            kkt_residual: 0.0,
            active: ActiveConstraints {
                trace: true,
                beampattern: true,
            },
            iterations: 0,
        });
    }

    let problem = Reduced::new(g, a, comm_power_mw / sigma2_mw, gamma_mw / comm_power_mw);
    let outcome = problem.solve(opts)?;

    let mut y = outcome.y;
    // Objective is increasing in Y: push the trace onto its bound.
    let tr = y.trace().re;
    if tr > 0.0 {
        y.unscale_mut(tr);
    }
    let w = CovarianceMatrix::from_hermitian_unchecked(problem.lift(&y).scale(comm_power_mw));
    let objective = achievable_rate(&w, g, sigma2_mw)?;
    let gain = beampattern_gain(&w, a)?;
    let active = ActiveConstraints {
        trace: w.trace() >= comm_power_mw * (1.0 - ACTIVE_TOL),
        beampattern: gamma_mw > 0.0 && gain - gamma_mw <= ACTIVE_TOL * max_gain,
    };
    debug!(
        "covariance solve: status {:?}, rate {objective:.9} bit, gain {gain:.6e} mW, {} Newton steps",
        outcome.status, outcome.iterations
    );
    Ok(SolverResult {
        covariance: w,
        objective,
        status: outcome.status,
        kkt_residual: outcome.gap,
        active,
        iterations: outcome.iterations,
    })
}

/// Coordinate of the orthonormal real basis of `k x k` Hermitian matrices.
#[derive(Debug, Clone, Copy)]
enum Coord {
    Diag(usize),
    /// `(e_p e_q^T + e_q e_p^T) / √2`, `p < q`
    Re(usize, usize),
    /// `i (e_p e_q^T - e_q e_p^T) / √2`, `p < q`
    Im(usize, usize),
}

fn hermitian_basis(k: usize) -> Vec<Coord> {
    let mut basis: Vec<Coord> = (0..k).map(Coord::Diag).collect();
    for p in 0..k {
        for q in p + 1..k {
            basis.push(Coord::Re(p, q));
            basis.push(Coord::Im(p, q));
        }
    }
    basis
}

fn to_coords(basis: &[Coord], z: &DMatrix<C64>) -> DVector<f64> {
    let s = std::f64::consts::SQRT_2;
    DVector::from_iterator(
        basis.len(),
        basis.iter().map(|c| match *c {
            Coord::Diag(p) => z[(p, p)].re,
            Coord::Re(p, q) => s * 0.5 * (z[(p, q)].re + z[(q, p)].re),
            Coord::Im(p, q) => s * 0.5 * (z[(p, q)].im - z[(q, p)].im),
        }),
    )
}

fn from_coords(basis: &[Coord], k: usize, y: &DVector<f64>) -> DMatrix<C64> {
    let mut z = DMatrix::<C64>::zeros(k, k);
    for (c, &v) in basis.iter().zip(y.iter()) {
        match *c {
            Coord::Diag(p) => z[(p, p)].re += v,
            Coord::Re(p, q) => {
                z[(p, q)].re += v * FRAC_1_SQRT_2;
                z[(q, p)].re += v * FRAC_1_SQRT_2;
            }
            Coord::Im(p, q) => {
                z[(p, q)].im += v * FRAC_1_SQRT_2;
                z[(q, p)].im -= v * FRAC_1_SQRT_2;
            }
        }
    }
    z
}

/// Matrix of the quadratic form `dY -> Re tr(A dY A dY)` in `basis`.
fn congruence_hessian(basis: &[Coord], a: &DMatrix<C64>) -> DMatrix<f64> {
    let n = basis.len();
    let mut h = DMatrix::zeros(n, n);
    let outer = |p: usize, q: usize| a.column(p) * a.row(q);
    for (j, c) in basis.iter().enumerate() {
        let pj = match *c {
            Coord::Diag(p) => outer(p, p),
            Coord::Re(p, q) => (outer(p, q) + outer(q, p)).scale(FRAC_1_SQRT_2),
            Coord::Im(p, q) => (outer(p, q) - outer(q, p)) * C64::new(0.0, FRAC_1_SQRT_2),
        };
        h.set_column(j, &to_coords(basis, &pj));
    }
    // Exact symmetry for the Cholesky solve.
    (&h + h.transpose()).scale(0.5)
}

/// The problem in the `k`-dimensional range of `[G a]`, powers normalized by `P_C`.
struct Reduced {
    /// Orthonormal basis of the range; `None` when it is all of `C^m0`.
    range: Option<DMatrix<C64>>,
    /// `B^H G`, `k x N`.
    c: DMatrix<C64>,
    /// `B^H a`.
    b: DVector<C64>,
    /// `b b^H`.
    bb: DMatrix<C64>,
    snr: f64,
    /// `Γ / P_C`; the sensing barrier is dropped when zero.
    gamma: f64,
    k: usize,
    basis: Vec<Coord>,
}

struct Outcome {
    y: DMatrix<C64>,
    status: SolverStatus,
    gap: f64,
    iterations: usize,
}

impl Reduced {
    fn new(g: &ResponseMatrix, a: &SteeringVector, snr: f64, gamma: f64) -> Self {
        let gm = g.matrix();
        let m0 = gm.nrows();
        let mut stacked = DMatrix::zeros(m0, gm.ncols() + 1);
        stacked.view_mut((0, 0), (m0, gm.ncols())).copy_from(gm);
        stacked.set_column(gm.ncols(), a.vector());

        let svd = stacked.svd(true, false);
        let smax = svd.singular_values.max();
        let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
        order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
        let kept: Vec<usize> = order
            .into_iter()
            .filter(|&i| svd.singular_values[i] > RANK_TOL * smax)
            .collect();

        let (range, c, b) = if kept.len() == m0 {
            (None, gm.clone(), a.vector().clone())
        } else {
            let u = svd.u.expect("left singular vectors requested");
            let basis =
                DMatrix::from_columns(&kept.iter().map(|&i| u.column(i)).collect::<Vec<_>>());
            let c = basis.adjoint() * gm;
            let b = basis.adjoint() * a.vector();
            (Some(basis), c, b)
        };
        let k = c.nrows();
        let bb = &b * b.adjoint();
        Self {
            range,
            c,
            b,
            bb,
            snr,
            gamma,
            k,
            basis: hermitian_basis(k),
        }
    }

    fn lift(&self, y: &DMatrix<C64>) -> DMatrix<C64> {
        match &self.range {
            None => y.clone(),
            Some(basis) => basis * y * basis.adjoint(),
        }
    }

    fn barrier_terms(&self) -> usize {
        self.k + 1 + usize::from(self.gamma > 0.0)
    }

    /// Strictly feasible start mixing the aligned direction with the identity.
    fn initial_point(&self) -> DMatrix<C64> {
        let m0 = self.b.norm_squared();
        let slack = 1.0 - (self.gamma / m0).clamp(0.0, 1.0);
        let rho = 1.0 - slack / 4.0;
        let eta = (slack / 4.0).min(0.5);
        let id = DMatrix::<C64>::identity(self.k, self.k);
        (self.bb.scale((1.0 - eta) / m0) + id.scale(eta / self.k as f64)).scale(rho)
    }

    fn trace_slack(&self, y: &DMatrix<C64>) -> f64 {
        1.0 - y.trace().re
    }

    fn gain_slack(&self, y: &DMatrix<C64>) -> f64 {
        (self.b.adjoint() * y * &self.b)[(0, 0)].re - self.gamma
    }

    /// `ln det(I + snr C^H Y C)` in nats, or `None` outside the PSD cone.
    fn objective(&self, y: &DMatrix<C64>) -> Option<f64> {
        let n = self.c.ncols();
        let m = DMatrix::identity(n, n) + (self.c.adjoint() * y * &self.c).scale(self.snr);
        log_det_hpd(crate::metrics::hermitian_part(&m)).ok()
    }

    /// Barrier function `-t f - ln det Y - ln s_tr - ln s_gain`, `None` if
    /// `y` is not strictly feasible.
    fn barrier_value(&self, y: &DMatrix<C64>, t: f64) -> Option<f64> {
        let s_tr = self.trace_slack(y);
        if s_tr <= 0.0 {
            return None;
        }
        let mut value = -s_tr.ln();
        if self.gamma > 0.0 {
            let s_gain = self.gain_slack(y);
            if s_gain <= 0.0 {
                return None;
            }
            value -= s_gain.ln();
        }
        let logdet_y = log_det_hpd(y.clone()).ok()?;
        let f = self.objective(y)?;
        Some(value - logdet_y - t * f)
    }

    /// Gradient and Hessian of the barrier function at a strictly feasible `y`.
    fn newton_system(&self, y: &DMatrix<C64>, t: f64) -> Option<(DVector<f64>, DMatrix<f64>)> {
        let n = self.c.ncols();
        let k = self.k;
        let m = DMatrix::identity(n, n) + (self.c.adjoint() * y * &self.c).scale(self.snr);
        let m_inv = Cholesky::new(crate::metrics::hermitian_part(&m))?.inverse();
        let grad_f =
            crate::metrics::hermitian_part(&(&self.c * m_inv * self.c.adjoint()).scale(self.snr));
        let y_inv = crate::metrics::hermitian_part(&Cholesky::new(y.clone())?.inverse());
        let s_tr = self.trace_slack(y);

        let id = DMatrix::<C64>::identity(k, k);
        let mut grad = -grad_f.scale(t) - &y_inv + id.unscale(s_tr);
        let mut hess = congruence_hessian(&self.basis, &grad_f).scale(t)
            + congruence_hessian(&self.basis, &y_inv);
        let u = to_coords(&self.basis, &id);
        hess += (&u * u.transpose()).unscale(s_tr * s_tr);
        if self.gamma > 0.0 {
            let s_gain = self.gain_slack(y);
            grad -= self.bb.unscale(s_gain);
            let v = to_coords(&self.basis, &self.bb);
            hess += (&v * v.transpose()).unscale(s_gain * s_gain);
        }
        Some((to_coords(&self.basis, &grad), hess))
    }

    fn solve(&self, opts: &SolverOptions) -> Result<Outcome> {
        let nu = self.barrier_terms() as f64;
        let mut y = self.initial_point();
        if self.barrier_value(&y, 1.0).is_none() {
            return Err(Error::numeric("initial point is not strictly feasible"));
        }
        let mut t = 1.0;
        let mut iterations = 0;
        loop {
            iterations += self.center(&mut y, t, opts, opts.max_iters - iterations);
            let f = self.objective(&y).unwrap_or(0.0);
            let gap = nu / (t * f.max(1.0));
            debug!("central path: t = {t:.3e}, f = {f:.12} nats, gap bound {gap:.3e}, steps {iterations}");
            if gap <= opts.kkt_tol {
                return Ok(Outcome {
                    y,
                    status: SolverStatus::Optimal,
                    gap,
                    iterations,
                });
            }
            if iterations >= opts.max_iters {
                return Ok(Outcome {
                    y,
                    status: SolverStatus::MaxIters,
                    gap,
                    iterations,
                });
            }
            t /= opts.barrier_decrease;
        }
    }

    /// Damped Newton centering at weight `t`; returns the number of steps.
    ///
    /// Every barrier term is self-concordant, so the damped step
    /// `1 / (1 + λ)` decreases the barrier and stays inside the domain
    /// without comparing barrier values, which at large `t` are only known to
    /// a few digits. Below `λ = 1/4` the full step is taken.
    fn center(&self, y: &mut DMatrix<C64>, t: f64, opts: &SolverOptions, budget: usize) -> usize {
        let mut steps = 0;
        let mut previous = f64::INFINITY;
        while steps < budget {
            let Some((grad, hess)) = self.newton_system(y, t) else {
                break;
            };
            let Some(direction) = solve_spd(hess, &grad) else {
                break;
            };
            let decrement = -grad.dot(&direction);
            if !decrement.is_finite() || decrement / 2.0 <= CENTERING_TOL {
                break;
            }
            let lambda = decrement.sqrt();
            if lambda < 0.25 && decrement > 0.5 * previous {
                // Quadratic convergence has stalled on round-off.
                break;
            }
            let step = from_coords(&self.basis, self.k, &direction);
            let mut alpha = if lambda < 0.25 {
                1.0
            } else {
                1.0 / (1.0 + lambda)
            };
            let mut accepted = false;
            while alpha >= opts.min_step {
                let candidate = crate::metrics::hermitian_part(&(&*y + step.scale(alpha)));
                if self.is_interior(&candidate) {
                    *y = candidate;
                    accepted = true;
                    break;
                }
                alpha *= 0.5;
            }
            steps += 1;
            log::trace!("newton: t = {t:.3e}, decrement {decrement:.3e}, step {alpha:.3e}");
            if !accepted {
                break;
            }
            previous = decrement;
        }
        steps
    }

    fn is_interior(&self, y: &DMatrix<C64>) -> bool {
        self.trace_slack(y) > 0.0
            && (self.gamma <= 0.0 || self.gain_slack(y) > 0.0)
            && Cholesky::new(y.clone()).is_some()
    }
}

/// Solves `H d = -g` for symmetric positive-definite `H`, with a small
/// diagonal shift if the factorization breaks down.
fn solve_spd(hess: DMatrix<f64>, grad: &DVector<f64>) -> Option<DVector<f64>> {
    let scale = hess
        .diagonal()
        .iter()
        .fold(0.0f64, |acc, &d| acc.max(d.abs()));
    let mut shift = 0.0;
    for _ in 0..8 {
        let mut h = hess.clone();
        for i in 0..h.nrows() {
            h[(i, i)] += shift;
        }
        if let Some(chol) = Cholesky::new(h) {
            return Some(-chol.solve(grad));
        }
        shift = if shift == 0.0 {
            1e-14 * scale
        } else {
            shift * 100.0
        };
    }
    None
}

/// Water-filling allocation over the eigenmodes of `G G^H`.
#[derive(Debug, Clone, PartialEq)]
pub struct WaterFilling {
    pub covariance: CovarianceMatrix,
    /// Rate in bits per channel use.
    pub rate: f64,
    /// Water level `μ` in mW.
    pub water_level: f64,
    /// Set when `G G^H` has no usable eigenmode; the covariance is zero.
    pub zero_channel: bool,
}

/// Capacity-achieving covariance without the sensing constraint:
/// `p_i = max(0, μ - σ²/λ_i)` with `Σ p_i = P_C`, `μ` found by bisection.
pub fn waterfilling_oracle(
    g: &DMatrix<C64>,
    comm_power_mw: f64,
    sigma2_mw: f64,
) -> Result<WaterFilling> {
    if !(comm_power_mw > 0.0 && sigma2_mw > 0.0) {
        return Err(Error::domain(
            "water-filling needs positive power and noise",
        ));
    }
    let m0 = g.nrows();
    let gram = crate::metrics::hermitian_part(&(g * g.adjoint()));
    let eig = SymmetricEigen::new(gram);
    let lambda_max = eig.eigenvalues.max();
    if lambda_max.is_nan() || lambda_max <= 0.0 {
        return Ok(WaterFilling {
            covariance: CovarianceMatrix::zeros(m0),
            rate: 0.0,
            water_level: 0.0,
            zero_channel: true,
        });
    }
    // Numerically null modes never receive power.
    let floor = lambda_max * 1e-12;
    let inverse_gains: Vec<Option<f64>> = eig
        .eigenvalues
        .iter()
        .map(|&l| (l > floor).then(|| sigma2_mw / l))
        .collect();
    let allocated = |mu: f64| -> f64 {
        inverse_gains
            .iter()
            .flatten()
            .map(|&ig| (mu - ig).max(0.0))
            .sum()
    };
    let mut lo = 0.0;
    let mut hi = comm_power_mw
        + inverse_gains
            .iter()
            .flatten()
            .fold(0.0f64, |acc, &ig| acc.max(ig));
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if allocated(mid) > comm_power_mw {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let mu = 0.5 * (lo + hi);
    let powers: Vec<f64> = inverse_gains
        .iter()
        .map(|ig| ig.map_or(0.0, |ig| (mu - ig).max(0.0)))
        .collect();
    let total: f64 = powers.iter().sum();
    let powers: Vec<f64> = powers.iter().map(|p| p * comm_power_mw / total).collect();

    let rate = powers
        .iter()
        .zip(eig.eigenvalues.iter())
        .filter(|(p, _)| **p > 0.0)
        .map(|(p, l)| (1.0 + p * l / sigma2_mw).ln())
        .sum::<f64>()
        / LN_2;
    let diag = DMatrix::from_diagonal(&DVector::from_iterator(
        m0,
        powers.iter().map(|&p| C64::new(p, 0.0)),
    ));
    let w = &eig.eigenvectors * diag * eig.eigenvectors.adjoint();
    Ok(WaterFilling {
        covariance: CovarianceMatrix::from_hermitian_unchecked(w),
        rate,
        water_level: mu,
        zero_channel: false,
    })
}
