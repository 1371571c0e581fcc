//! Line-of-sight geometry between the UAV fluid-antenna array and the ground
//! base station, plus the sensing steering vector.
//!
//! Ports are numbered `1..=M` from the ground upward and sit at vertical
//! offsets symmetric around the array center. Receive antennas at the base
//! station follow the same convention with their own spacing.

use std::f64::consts::PI;
use std::fmt;

use nalgebra::{DMatrix, DVector};

use crate::{dbm_to_mw, Error, Result, C64};

/// Physical and algorithmic scalars of one scenario.
///
/// Powers are kept in dBm as entered; the linear milliwatt values used by the
/// numerics come from [`SystemConfig::comm_power_mw`],
/// [`SystemConfig::gamma_mw`] and [`SystemConfig::sigma2_mw`].
#[derive(Debug, Clone, PartialEq)]
pub struct SystemConfig {
    /// Total fluid-antenna ports `M`.
    pub total_ports: usize,
    /// Activated ports `m0`.
    pub active_ports: usize,
    /// Receive antennas `N` at the base station.
    pub rx_antennas: usize,
    pub port_spacing_m: f64,
    pub rx_spacing_m: f64,
    pub wavelength_m: f64,
    /// Vertical offset between the array centers.
    pub height_m: f64,
    /// Horizontal UAV to base-station distance.
    pub horizontal_distance_m: f64,
    /// Sensing direction.
    pub theta_rad: f64,
    pub gamma_dbm: f64,
    pub p_max_dbm: f64,
    /// Static hover power drawn from the same budget.
    pub p_hover_dbm: f64,
    pub sigma2_dbm: f64,
    /// Convergence threshold on the rate between two alternating cycles.
    pub epsilon: f64,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self {
            total_ports: 40,
            active_ports: 10,
            rx_antennas: 4,
            port_spacing_m: 0.05,
            rx_spacing_m: 0.05,
            wavelength_m: 0.1,
            height_m: 20.0,
            horizontal_distance_m: 100.0,
            theta_rad: PI / 6.0,
            gamma_dbm: 8.0,
            p_max_dbm: 10.0,
            p_hover_dbm: 7.0,
            sigma2_dbm: -70.0,
            epsilon: 1e-3,
        }
    }
}

impl SystemConfig {
    /// Power left for transmission once hovering is paid for, in mW.
    /// May be non-positive; see [`SystemConfig::validate`].
    pub fn comm_power_mw(&self) -> f64 {
        dbm_to_mw(self.p_max_dbm) - dbm_to_mw(self.p_hover_dbm)
    }

    pub fn gamma_mw(&self) -> f64 {
        dbm_to_mw(self.gamma_dbm)
    }

    pub fn sigma2_mw(&self) -> f64 {
        dbm_to_mw(self.sigma2_dbm)
    }

    /// Checks counts, lengths and thresholds. A non-positive communication
    /// power is reported separately by [`crate::metrics::check_feasibility`]
    /// and is not rejected here.
    pub fn validate(&self) -> Result<()> {
        if self.total_ports == 0 || self.rx_antennas == 0 {
            return Err(Error::domain("port and antenna counts must be at least 1"));
        }
        if self.active_ports == 0 || self.active_ports > self.total_ports {
            return Err(Error::domain(format!(
                "active ports m0 = {} must lie in 1..={}",
                self.active_ports, self.total_ports
            )));
        }
        let lengths = [
            ("d_U_m", self.port_spacing_m),
            ("d_C_m", self.rx_spacing_m),
            ("lambda_m", self.wavelength_m),
            ("H_m", self.height_m),
            ("L_C_m", self.horizontal_distance_m),
        ];
        for (name, value) in lengths {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::domain(format!(
                    "{name} must be positive, got {value}"
                )));
            }
        }
        // Γ = -inf dBm switches the sensing constraint off.
        if self.gamma_dbm.is_nan() || self.gamma_dbm == f64::INFINITY {
            return Err(Error::domain("Gamma_dBm must be finite or -inf"));
        }
        let scalars = [
            ("theta_rad", self.theta_rad),
            ("P_max_dBm", self.p_max_dbm),
            ("P_U_dBm", self.p_hover_dbm),
            ("sigma2_dBm", self.sigma2_dbm),
        ];
        for (name, value) in scalars {
            if !value.is_finite() {
                return Err(Error::domain(format!("{name} must be finite")));
            }
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(Error::domain("epsilon must be positive"));
        }
        Ok(())
    }

    /// Wavenumber `2π/λ`.
    pub fn wavenumber(&self) -> f64 {
        2.0 * PI / self.wavelength_m
    }
}

/// Strictly increasing, 1-based indices of the activated ports.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PortSelection(Vec<usize>);

impl PortSelection {
    /// Validates `indices` against a total of `total_ports` ports.
    pub fn new(indices: Vec<usize>, total_ports: usize) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::domain("port selection must not be empty"));
        }
        if let Some(&bad) = indices.iter().find(|&&r| r == 0 || r > total_ports) {
            return Err(Error::domain(format!(
                "port index {bad} outside 1..={total_ports}"
            )));
        }
        if indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::domain(format!(
                "port indices must be strictly increasing: {indices:?}"
            )));
        }
        Ok(Self(indices))
    }

    /// Evenly spread starting selection: `r_m = round((m - 1/2) M / m0)`,
    /// clipped to `1..=M` and pushed apart where rounding collides.
    pub fn evenly_spaced(total_ports: usize, active_ports: usize) -> Result<Self> {
        if active_ports == 0 || active_ports > total_ports {
            return Err(Error::domain(format!(
                "cannot pick {active_ports} of {total_ports} ports"
            )));
        }
        let step = total_ports as f64 / active_ports as f64;
        let mut indices: Vec<usize> = (1..=active_ports)
            .map(|m| (((m as f64 - 0.5) * step).round() as usize).clamp(1, total_ports))
            .collect();
        for m in 1..active_ports {
            if indices[m] <= indices[m - 1] {
                indices[m] = indices[m - 1] + 1;
            }
        }
        // Leave room for the ports that follow.
        for m in (0..active_ports).rev() {
            let ceiling = total_ports - (active_ports - 1 - m);
            if indices[m] > ceiling {
                indices[m] = ceiling;
            }
            if m + 1 < active_ports && indices[m] >= indices[m + 1] {
                indices[m] = indices[m + 1] - 1;
            }
        }
        Self::new(indices, total_ports)
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Checks that the selection matches `cfg` in length and range.
    pub fn check_against(&self, cfg: &SystemConfig) -> Result<()> {
        if self.0.len() != cfg.active_ports {
            return Err(Error::domain(format!(
                "selection has {} ports, configuration expects {}",
                self.0.len(),
                cfg.active_ports
            )));
        }
        match self.0.last() {
            Some(&last) if last <= cfg.total_ports => Ok(()),
            _ => Err(Error::domain(format!(
                "selection {self} exceeds M = {}",
                cfg.total_ports
            ))),
        }
    }

    /// Copy with position `m` (0-based) replaced, bypassing validation; the
    /// caller keeps the ordering.
    pub(crate) fn with_index(&self, m: usize, port: usize) -> Self {
        let mut indices = self.0.clone();
        indices[m] = port;
        Self(indices)
    }
}

impl fmt::Display for PortSelection {
    /// Dash-joined indices, e.g. `2-6-10`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, r) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str("-")?;
            }
            write!(f, "{r}")?;
        }
        Ok(())
    }
}

/// Communication response matrix `G` (`m0 x N`), one unit-modulus phase per
/// activated port and receive antenna.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseMatrix(DMatrix<C64>);

impl ResponseMatrix {
    /// Wraps an arbitrary matrix; entries must have unit modulus within 1e-12.
    pub fn from_matrix(g: DMatrix<C64>) -> Result<Self> {
        if g.nrows() == 0 || g.ncols() == 0 {
            return Err(Error::dimension("response matrix must be non-empty"));
        }
        if g.iter().any(|z| (z.norm() - 1.0).abs() > 1e-12) {
            return Err(Error::numeric(
                "response matrix entries must have unit modulus",
            ));
        }
        Ok(Self(g))
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.0
    }

    /// Number of activated ports (rows).
    pub fn ports(&self) -> usize {
        self.0.nrows()
    }

    /// Number of receive antennas (columns).
    pub fn antennas(&self) -> usize {
        self.0.ncols()
    }
}

/// Sensing steering vector `a(θ)`, phase-referenced to the first selected port.
#[derive(Debug, Clone, PartialEq)]
pub struct SteeringVector(DVector<C64>);

impl SteeringVector {
    pub fn from_vector(a: DVector<C64>) -> Result<Self> {
        if a.is_empty() {
            return Err(Error::dimension("steering vector must be non-empty"));
        }
        if a.iter().any(|z| (z.norm() - 1.0).abs() > 1e-12) {
            return Err(Error::numeric(
                "steering vector entries must have unit modulus",
            ));
        }
        Ok(Self(a))
    }

    pub fn vector(&self) -> &DVector<C64> {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Vertical offset of port `port` (1-based) from the array center.
pub fn port_offset(port: usize, cfg: &SystemConfig) -> Result<f64> {
    if port == 0 || port > cfg.total_ports {
        return Err(Error::domain(format!(
            "port index {port} outside 1..={}",
            cfg.total_ports
        )));
    }
    Ok(centered_offset(port, cfg.total_ports, cfg.port_spacing_m))
}

/// Vertical offset of receive antenna `antenna` (1-based) from the BS array center.
pub fn rx_antenna_offset(antenna: usize, cfg: &SystemConfig) -> Result<f64> {
    if antenna == 0 || antenna > cfg.rx_antennas {
        return Err(Error::domain(format!(
            "antenna index {antenna} outside 1..={}",
            cfg.rx_antennas
        )));
    }
    Ok(centered_offset(antenna, cfg.rx_antennas, cfg.rx_spacing_m))
}

fn centered_offset(index: usize, count: usize, spacing: f64) -> f64 {
    (2.0 * (index as f64 - 1.0) - count as f64 + 1.0) / 2.0 * spacing
}

/// Path-length difference between activated port `m` (0-based position in the
/// selection) and receive antenna `antenna` (1-based), relative to the path
/// from the FAS center.
pub fn path_difference(
    m: usize,
    antenna: usize,
    sel: &PortSelection,
    cfg: &SystemConfig,
) -> Result<f64> {
    let port = *sel.indices().get(m).ok_or_else(|| {
        Error::domain(format!(
            "activated-port position {m} outside 0..{}",
            sel.len()
        ))
    })?;
    let y_port = port_offset(port, cfg)?;
    let y_rx = rx_antenna_offset(antenna, cfg)?;
    Ok(path_difference_from_offsets(y_port, y_rx, cfg))
}

/// `sqrt(L² + (H + y_port - y_rx)²) - sqrt(L² + H²)`.
pub fn path_difference_from_offsets(y_port: f64, y_rx: f64, cfg: &SystemConfig) -> f64 {
    let l = cfg.horizontal_distance_m;
    let h = cfg.height_m;
    (h + y_port - y_rx).hypot(l) - h.hypot(l)
}

/// Builds `G` with `G[m, n] = exp(j k d_C(m, n))`.
pub fn response_matrix(sel: &PortSelection, cfg: &SystemConfig) -> Result<ResponseMatrix> {
    sel.check_against(cfg)?;
    let k = cfg.wavenumber();
    let rx: Vec<f64> = (1..=cfg.rx_antennas)
        .map(|n| centered_offset(n, cfg.rx_antennas, cfg.rx_spacing_m))
        .collect();
    let ports: Vec<f64> = sel
        .indices()
        .iter()
        .map(|&r| centered_offset(r, cfg.total_ports, cfg.port_spacing_m))
        .collect();
    let g = DMatrix::from_fn(ports.len(), rx.len(), |m, n| {
        C64::from_polar(1.0, k * path_difference_from_offsets(ports[m], rx[n], cfg))
    });
    Ok(ResponseMatrix(g))
}

/// Builds `a(θ)` with entries `exp(j k d_U (r_m - r_1) sin θ)`.
pub fn sensing_steering(sel: &PortSelection, cfg: &SystemConfig) -> Result<SteeringVector> {
    sel.check_against(cfg)?;
    let phase_per_port = cfg.wavenumber() * cfg.port_spacing_m * cfg.theta_rad.sin();
    let first = sel.indices()[0];
    let a = DVector::from_iterator(
        sel.len(),
        sel.indices().iter().map(|&r| {
            if r == first {
                C64::new(1.0, 0.0)
            } else {
                C64::from_polar(1.0, phase_per_port * (r - first) as f64)
            }
        }),
    );
    Ok(SteeringVector(a))
}
