//! Rate, beampattern gain and the feasibility bound of the sensing constraint.

use std::f64::consts::LN_2;
use std::fmt;

use nalgebra::{Cholesky, DMatrix, SymmetricEigen};

use crate::geometry::{ResponseMatrix, SteeringVector, SystemConfig};
use crate::{Error, Result, C64};

/// Hermitian positive-semidefinite transmit covariance `W` (`m0 x m0`, mW).
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceMatrix(DMatrix<C64>);

impl CovarianceMatrix {
    /// Symmetrizes `w` to `(W + W^H)/2` after checking it is Hermitian within
    /// 1e-9 and PSD within `-1e-8 * trace(W)`.
    pub fn from_matrix(w: DMatrix<C64>) -> Result<Self> {
        if !w.is_square() || w.nrows() == 0 {
            return Err(Error::dimension(format!(
                "covariance must be square and non-empty, got {}x{}",
                w.nrows(),
                w.ncols()
            )));
        }
        if w.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::numeric("covariance has non-finite entries"));
        }
        let asym = (&w - w.adjoint())
            .iter()
            .fold(0.0f64, |acc, z| acc.max(z.norm()));
        if asym > 1e-9 {
            return Err(Error::numeric(format!(
                "covariance not Hermitian (|W - W^H| = {asym:.3e})"
            )));
        }
        let w = hermitian_part(&w);
        let trace = w.trace().re;
        if trace < 0.0 {
            return Err(Error::numeric(format!(
                "covariance has negative trace {trace:.3e}"
            )));
        }
        let min_eig = min_eigenvalue(&w);
        if min_eig < -1e-8 * trace {
            return Err(Error::numeric(format!(
                "covariance not PSD (min eigenvalue {min_eig:.3e}, trace {trace:.3e})"
            )));
        }
        Ok(Self(w))
    }

    pub fn zeros(dim: usize) -> Self {
        Self(DMatrix::zeros(dim, dim))
    }

    pub(crate) fn from_hermitian_unchecked(w: DMatrix<C64>) -> Self {
        Self(hermitian_part(&w))
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<C64> {
        self.0
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    /// Radiated power `tr(W)` in mW.
    pub fn trace(&self) -> f64 {
        self.0.trace().re
    }

    pub fn min_eigenvalue(&self) -> f64 {
        min_eigenvalue(&self.0)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self(self.0.scale(factor))
    }
}

pub(crate) fn hermitian_part(w: &DMatrix<C64>) -> DMatrix<C64> {
    (w + w.adjoint()).scale(0.5)
}

fn min_eigenvalue(w: &DMatrix<C64>) -> f64 {
    SymmetricEigen::new(w.clone()).eigenvalues.min()
}

/// Rate, sensing gain and radiated power of one operating point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkMetrics {
    /// Bits per channel use.
    pub rate: f64,
    pub beampattern_gain_mw: f64,
    pub tx_power_mw: f64,
}

/// `log2 det(I_N + G^H W G / σ²)`, evaluated through a Cholesky factor.
pub fn achievable_rate(w: &CovarianceMatrix, g: &ResponseMatrix, sigma2_mw: f64) -> Result<f64> {
    if w.dim() != g.ports() {
        return Err(Error::dimension(format!(
            "covariance is {0}x{0} but response matrix has {1} rows",
            w.dim(),
            g.ports()
        )));
    }
    if !(sigma2_mw.is_finite() && sigma2_mw > 0.0) {
        return Err(Error::domain(format!(
            "noise power must be positive, got {sigma2_mw}"
        )));
    }
    let gm = g.matrix();
    let gram = gm.adjoint() * w.matrix() * gm;
    let inner =
        DMatrix::identity(g.antennas(), g.antennas()) + hermitian_part(&gram).unscale(sigma2_mw);
    Ok(log_det_hpd(inner)? / LN_2)
}

/// Natural log-determinant of a Hermitian positive-definite matrix.
pub(crate) fn log_det_hpd(m: DMatrix<C64>) -> Result<f64> {
    let chol = Cholesky::new(m)
        .ok_or_else(|| Error::numeric("log-det argument is not positive definite"))?;
    Ok(2.0
        * chol
            .l_dirty()
            .diagonal()
            .iter()
            .map(|z| z.re.ln())
            .sum::<f64>())
}

/// Sensing beampattern gain `a^H W a` in mW.
pub fn beampattern_gain(w: &CovarianceMatrix, a: &SteeringVector) -> Result<f64> {
    if w.dim() != a.len() {
        return Err(Error::dimension(format!(
            "covariance is {0}x{0} but steering vector has length {1}",
            w.dim(),
            a.len()
        )));
    }
    let av = a.vector();
    let value = (av.adjoint() * w.matrix() * av)[(0, 0)];
    let scale =
        w.matrix().iter().fold(0.0f64, |acc, z| acc.max(z.norm())) * (w.dim() * w.dim()) as f64;
    if value.im.abs() > 1e-9 * value.re.abs() + 1e-14 * scale {
        return Err(Error::numeric(format!(
            "beampattern gain has imaginary residue {:.3e}",
            value.im
        )));
    }
    Ok(value.re)
}

pub fn link_metrics(
    w: &CovarianceMatrix,
    g: &ResponseMatrix,
    a: &SteeringVector,
    sigma2_mw: f64,
) -> Result<LinkMetrics> {
    Ok(LinkMetrics {
        rate: achievable_rate(w, g, sigma2_mw)?,
        beampattern_gain_mw: beampattern_gain(w, a)?,
        tx_power_mw: w.trace(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeasibilityCode {
    Feasible,
    /// Hover power consumes the whole budget.
    HoverExceedsBudget,
    /// `m0 * P_C < Γ`: no covariance reaches the sensing threshold.
    GainUnreachable,
}

/// Verdict of [`check_feasibility`], carrying the quantities behind it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Feasibility {
    pub code: FeasibilityCode,
    pub comm_power_mw: f64,
    pub gamma_mw: f64,
    /// Largest achievable beampattern gain, `m0 * P_C`.
    pub max_gain_mw: f64,
}

impl Feasibility {
    pub fn is_feasible(&self) -> bool {
        self.code == FeasibilityCode::Feasible
    }
}

impl fmt::Display for Feasibility {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.code {
            FeasibilityCode::Feasible => write!(
                f,
                "feasible: m0*P_C = {:.6} mW >= Gamma = {:.6} mW",
                self.max_gain_mw, self.gamma_mw
            ),
            FeasibilityCode::HoverExceedsBudget => write!(
                f,
                "HOVER_EXCEEDS_BUDGET: P_C = P_max - P_U = {:.6} mW is not positive",
                self.comm_power_mw
            ),
            FeasibilityCode::GainUnreachable => write!(
                f,
                "GAIN_UNREACHABLE: m0*P_C = {:.6} mW < Gamma = {:.6} mW",
                self.max_gain_mw, self.gamma_mw
            ),
        }
    }
}

/// Feasible iff `P_C > 0` and `m0 * P_C >= Γ`.
///
/// For unit-modulus `a` and PSD `W`, `a^H W a <= ||a||² tr(W) = m0 tr(W)`,
/// with equality for [`aligned_witness`].
pub fn check_feasibility(cfg: &SystemConfig) -> Feasibility {
    let comm_power_mw = cfg.comm_power_mw();
    let gamma_mw = cfg.gamma_mw();
    let max_gain_mw = cfg.active_ports as f64 * comm_power_mw.max(0.0);
    let code = if comm_power_mw <= 0.0 {
        FeasibilityCode::HoverExceedsBudget
    } else if max_gain_mw < gamma_mw {
        FeasibilityCode::GainUnreachable
    } else {
        FeasibilityCode::Feasible
    };
    Feasibility {
        code,
        comm_power_mw,
        gamma_mw,
        max_gain_mw,
    }
}

/// Rank-one covariance `(P / m0) a a^H`: trace `P`, beampattern gain `m0 P`.
pub fn aligned_witness(a: &SteeringVector, power_mw: f64) -> CovarianceMatrix {
    let av = a.vector();
    let m0 = av.len() as f64;
    CovarianceMatrix::from_hermitian_unchecked((av * av.adjoint()).scale(power_mw / m0))
}
