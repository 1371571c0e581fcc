#![allow(dead_code)]

use fasisac_core::geometry::{ResponseMatrix, SteeringVector};
use fasisac_core::metrics::CovarianceMatrix;
use fasisac_core::{SystemConfig, C64};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn unit_phase<R: Rng>(rng: &mut R) -> C64 {
    C64::from_polar(
        1.0,
        rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI),
    )
}

pub fn random_response<R: Rng>(rng: &mut R, m0: usize, n: usize) -> ResponseMatrix {
    ResponseMatrix::from_matrix(DMatrix::from_fn(m0, n, |_, _| unit_phase(rng))).unwrap()
}

/// Unit-modulus steering vector referenced to its first entry.
pub fn random_steering<R: Rng>(rng: &mut R, m0: usize) -> SteeringVector {
    let a = DVector::from_fn(m0, |i, _| {
        if i == 0 {
            C64::new(1.0, 0.0)
        } else {
            unit_phase(rng)
        }
    });
    SteeringVector::from_vector(a).unwrap()
}

pub fn gaussian<R: Rng>(rng: &mut R) -> f64 {
    // Box-Muller.
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// `R R^H` with complex Gaussian `R` of `rank` columns, scaled to `trace`.
pub fn random_psd<R: Rng>(rng: &mut R, dim: usize, rank: usize, trace: f64) -> DMatrix<C64> {
    let r = DMatrix::from_fn(dim, rank, |_, _| C64::new(gaussian(rng), gaussian(rng)));
    let w = &r * r.adjoint();
    let tr = w.trace().re;
    w.scale(trace / tr)
}

pub fn random_covariance(rng: &mut ChaCha8Rng, dim: usize, trace: f64) -> CovarianceMatrix {
    let rank = rng.gen_range(1..=dim);
    CovarianceMatrix::from_matrix(random_psd(rng, dim, rank, trace)).unwrap()
}

/// Small geometry with randomized physical parameters.
pub fn random_small_config(
    rng: &mut ChaCha8Rng,
    max_ports: usize,
    max_active: usize,
) -> SystemConfig {
    let total_ports = rng.gen_range(2..=max_ports);
    let active_ports = rng.gen_range(1..=max_active.min(total_ports));
    SystemConfig {
        total_ports,
        active_ports,
        rx_antennas: rng.gen_range(1..=4),
        port_spacing_m: rng.gen_range(0.02..0.5),
        rx_spacing_m: rng.gen_range(0.02..0.5),
        wavelength_m: rng.gen_range(0.05..0.3),
        height_m: rng.gen_range(5.0..50.0),
        horizontal_distance_m: rng.gen_range(5.0..50.0),
        theta_rad: rng.gen_range(-1.5..1.5),
        sigma2_dbm: rng.gen_range(-30.0..0.0),
        gamma_dbm: f64::NEG_INFINITY,
        ..Default::default()
    }
}

/// Determinant by cofactor expansion along the first row.
pub fn cofactor_det(m: &DMatrix<C64>) -> C64 {
    let n = m.nrows();
    if n == 1 {
        return m[(0, 0)];
    }
    let mut det = C64::new(0.0, 0.0);
    for j in 0..n {
        let minor = m.clone().remove_row(0).remove_column(j);
        let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
        det += m[(0, j)] * cofactor_det(&minor) * sign;
    }
    det
}

/// `Σ_i Σ_j conj(a_i) W_ij a_j`.
pub fn double_loop_gain(w: &DMatrix<C64>, a: &DVector<C64>) -> C64 {
    let mut acc = C64::new(0.0, 0.0);
    for i in 0..a.len() {
        for j in 0..a.len() {
            acc += a[i].conj() * w[(i, j)] * a[j];
        }
    }
    acc
}

pub fn rel_diff(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}
