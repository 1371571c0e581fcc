//! Port selection with the covariance held fixed.
//!
//! [`coordinate_sweep`] moves one activated port at a time inside the gap
//! left by its neighbors and keeps a move only if it strictly raises the rate
//! while meeting the sensing threshold. [`exhaustive_search`] enumerates every
//! selection and serves as ground truth on small arrays.

use itertools::Itertools;

use crate::geometry::{response_matrix, sensing_steering, PortSelection, SystemConfig};
use crate::metrics::{link_metrics, CovarianceMatrix, LinkMetrics};
use crate::{Error, Result};

/// Largest number of selections [`exhaustive_search`] agrees to enumerate.
pub const EXHAUSTIVE_LIMIT: u128 = 1_000_000;

/// Relative slack when testing `P_S >= Γ`, absorbing solver round-off.
pub const SENSING_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct SearchReport {
    pub selection: PortSelection,
    /// Rate of `selection` under the fixed covariance, bits per channel use.
    pub rate: f64,
    pub beampattern_gain_mw: f64,
    pub moves_accepted: usize,
    pub candidates_evaluated: usize,
    pub constraint_rejections: usize,
    /// The returned selection does not meet the sensing threshold.
    pub sensing_violated: bool,
}

/// Rate and gain of `sel` under covariance `w`.
pub fn evaluate_selection(
    sel: &PortSelection,
    w: &CovarianceMatrix,
    cfg: &SystemConfig,
) -> Result<LinkMetrics> {
    let g = response_matrix(sel, cfg)?;
    let a = sensing_steering(sel, cfg)?;
    link_metrics(w, &g, &a, cfg.sigma2_mw())
}

/// Whether `gain_mw` meets the threshold `gamma_mw` up to [`SENSING_TOL`].
pub fn meets_sensing(gain_mw: f64, gamma_mw: f64) -> bool {
    gain_mw >= gamma_mw * (1.0 - SENSING_TOL)
}

/// One pass over the activated ports in ascending order.
///
/// Position `m` may take any port strictly between its neighbors (with
/// sentinels `0` and `M + 1`). The best candidate meeting the sensing
/// threshold replaces the incumbent only if its rate is strictly higher. If
/// the incumbent itself violates the threshold, the best feasible candidate
/// is taken regardless of rate; when none exists the position is left alone
/// and the report is flagged.
pub fn coordinate_sweep(
    sel: &PortSelection,
    w: &CovarianceMatrix,
    cfg: &SystemConfig,
) -> Result<SearchReport> {
    cfg.validate()?;
    sel.check_against(cfg)?;
    if w.dim() != cfg.active_ports {
        return Err(Error::dimension(format!(
            "covariance is {0}x{0}, configuration has m0 = {1}",
            w.dim(),
            cfg.active_ports
        )));
    }
    let gamma = cfg.gamma_mw();
    let mut current = sel.clone();
    let mut metrics = evaluate_selection(&current, w, cfg)?;
    let mut moves_accepted = 0;
    let mut candidates_evaluated = 0;
    let mut constraint_rejections = 0;

    for m in 0..cfg.active_ports {
        let indices = current.indices();
        let lower = if m == 0 { 0 } else { indices[m - 1] };
        let upper = indices.get(m + 1).copied().unwrap_or(cfg.total_ports + 1);
        let incumbent_port = indices[m];

        let mut best: Option<(PortSelection, LinkMetrics)> = None;
        for port in (lower + 1..upper).filter(|&p| p != incumbent_port) {
            let candidate = current.with_index(m, port);
            let cm = evaluate_selection(&candidate, w, cfg)?;
            candidates_evaluated += 1;
            if !meets_sensing(cm.beampattern_gain_mw, gamma) {
                constraint_rejections += 1;
                continue;
            }
            if best.as_ref().is_none_or(|(_, b)| cm.rate > b.rate) {
                best = Some((candidate, cm));
            }
        }

        let incumbent_feasible = meets_sensing(metrics.beampattern_gain_mw, gamma);
        if let Some((candidate, cm)) = best {
            if !incumbent_feasible || cm.rate > metrics.rate {
                current = candidate;
                metrics = cm;
                moves_accepted += 1;
            }
        }
    }

    Ok(SearchReport {
        sensing_violated: !meets_sensing(metrics.beampattern_gain_mw, gamma),
        selection: current,
        rate: metrics.rate,
        beampattern_gain_mw: metrics.beampattern_gain_mw,
        moves_accepted,
        candidates_evaluated,
        constraint_rejections,
    })
}

/// Binomial coefficient `C(n, k)`, saturating.
pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| {
        acc.saturating_mul((n - i) as u128) / (i as u128 + 1)
    })
}

/// Best feasible selection among all `C(M, m0)`; ties keep the
/// lexicographically first one.
pub fn exhaustive_search(w: &CovarianceMatrix, cfg: &SystemConfig) -> Result<SearchReport> {
    cfg.validate()?;
    if w.dim() != cfg.active_ports {
        return Err(Error::dimension(format!(
            "covariance is {0}x{0}, configuration has m0 = {1}",
            w.dim(),
            cfg.active_ports
        )));
    }
    let count = binomial(cfg.total_ports, cfg.active_ports);
    if count > EXHAUSTIVE_LIMIT {
        return Err(Error::SearchTooLarge {
            count,
            limit: EXHAUSTIVE_LIMIT,
        });
    }
    let gamma = cfg.gamma_mw();
    let mut best: Option<(PortSelection, LinkMetrics)> = None;
    let mut evaluated = 0;
    let mut rejected = 0;
    for indices in (1..=cfg.total_ports).combinations(cfg.active_ports) {
        let sel = PortSelection::new(indices, cfg.total_ports)?;
        let cm = evaluate_selection(&sel, w, cfg)?;
        evaluated += 1;
        if !meets_sensing(cm.beampattern_gain_mw, gamma) {
            rejected += 1;
            continue;
        }
        if best.as_ref().is_none_or(|(_, b)| cm.rate > b.rate) {
            best = Some((sel, cm));
        }
    }
    let (selection, cm) = best.ok_or(Error::NoFeasibleSelection)?;
    Ok(SearchReport {
        selection,
        rate: cm.rate,
        beampattern_gain_mw: cm.beampattern_gain_mw,
        moves_accepted: 0,
        candidates_evaluated: evaluated,
        constraint_rejections: rejected,
        sensing_violated: false,
    })
}
