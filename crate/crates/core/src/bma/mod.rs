//! Bayesian model averaging over exchangeable member groups.
//!
//! Every BMA predictive law is a mixture with one component per ensemble
//! member; members of one group share the component parameters and the weight.
//! Weights are stored per group (`weights[k]` is the weight of *each* member of
//! group `k`), so they satisfy `sum_k M_k * weights[k] = 1`.

mod bias;
mod gamma;
mod mixture;
mod normal;
mod truncnormal;

pub use bias::{fit_bias_regression, BiasCorrection, BiasMode};
pub use gamma::{fit_bma_gamma, BmaGammaModel, GAMMA_OBS_FLOOR};
pub use mixture::{crps_normal_mixture, Component, Mixture};
pub use normal::{fit_bma_normal_crps, fit_bma_normal_em, BmaNormalModel};
pub use truncnormal::{fit_bma_truncnormal_ml, BmaTruncNormalModel};

use crate::error::{Error, Result};
use crate::grouping::GroupingScheme;
use crate::window::TrainingSet;

/// Stopping rule for the EM iterations.
#[derive(Debug, Clone, Copy)]
pub struct EmOptions {
    /// Stop once the log-likelihood gain of an iteration drops below this.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for EmOptions {
    fn default() -> Self {
        EmOptions {
            tol: 1e-8,
            max_iter: 5000,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FitDiagnostics {
    pub iterations: usize,
    pub converged: bool,
    /// Training log-likelihood at the start of every EM iteration.
    pub loglik_trace: Vec<f64>,
    /// Degeneracy rules that fired during the fit.
    pub flags: Vec<String>,
}

impl FitDiagnostics {
    pub(crate) fn flag(&mut self, msg: impl Into<String>) {
        let msg = msg.into();
        if !self.flags.contains(&msg) {
            self.flags.push(msg);
        }
    }
}

/// A fitted model together with how the fit went.
#[derive(Debug, Clone)]
pub struct Fit<M> {
    pub model: M,
    pub diagnostics: FitDiagnostics,
}

/// Smallest weight given to a group that received no responsibility at all.
pub const WEIGHT_FLOOR: f64 = 1e-6;

pub(crate) fn equal_weights(grouping: &GroupingScheme) -> Vec<f64> {
    vec![1.0 / grouping.member_count() as f64; grouping.group_count()]
}

pub(crate) fn check_weights(grouping: &GroupingScheme, weights: &[f64]) -> Result<()> {
    if weights.len() != grouping.group_count() {
        return Err(Error::Shape(format!(
            "{} weights for {} groups",
            weights.len(),
            grouping.group_count()
        )));
    }
    if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
        return Err(Error::Domain(format!(
            "weights must be nonnegative: {weights:?}"
        )));
    }
    let total: f64 = weights
        .iter()
        .zip(grouping.sizes())
        .map(|(w, m)| w * m as f64)
        .sum();
    if (total - 1.0).abs() > 1e-12 {
        return Err(Error::Domain(format!(
            "member weights sum to {total}, expected 1"
        )));
    }
    Ok(())
}

pub(crate) fn require_cases(set: &TrainingSet, min: usize) -> Result<()> {
    if set.len() < min {
        return Err(Error::Fit(format!(
            "training window has {} usable cases, need at least {min}",
            set.len()
        )));
    }
    Ok(())
}

/// Responsibilities of every slot for every case, stored row-major (n x M).
pub(crate) struct EStep {
    pub loglik: f64,
    pub resp: Vec<f64>,
    /// Total responsibility mass per group.
    pub group_mass: Vec<f64>,
}

/// Computes responsibilities in log space with max subtraction.
/// `log_density(i, slot)` is the log component density of case `i` under the
/// component of `slot`.
pub(crate) fn e_step<F>(set: &TrainingSet, weights: &[f64], log_density: F) -> Result<EStep>
where
    F: Fn(usize, usize) -> f64,
{
    let grouping = set.grouping();
    let m = set.members();
    let log_w: Vec<f64> = grouping
        .group_of_slot()
        .iter()
        .map(|&g| weights[g].ln())
        .collect();
    let mut resp = vec![0.0; set.len() * m];
    let mut group_mass = vec![0.0; grouping.group_count()];
    let mut loglik = 0.0;
    let mut terms = vec![0.0; m];
    for i in 0..set.len() {
        let mut max = f64::NEG_INFINITY;
        for (slot, t) in terms.iter_mut().enumerate() {
            *t = log_w[slot] + log_density(i, slot);
            max = max.max(*t);
        }
        if !max.is_finite() {
            return Err(Error::Fit(format!(
                "case {i} has zero likelihood under every component"
            )));
        }
        let sum: f64 = terms.iter().map(|t| (t - max).exp()).sum();
        let lse = max + sum.ln();
        loglik += lse;
        let row = &mut resp[i * m..(i + 1) * m];
        for (slot, (r, t)) in row.iter_mut().zip(&terms).enumerate() {
            *r = (t - lse).exp();
            group_mass[grouping.group_of_slot()[slot]] += *r;
        }
    }
    Ok(EStep {
        loglik,
        resp,
        group_mass,
    })
}

/// Weight update `w_k = mass_k / (n M_k)`, with the empty-group floor applied.
pub(crate) fn update_weights(
    grouping: &GroupingScheme,
    group_mass: &[f64],
    n: usize,
    diagnostics: &mut FitDiagnostics,
) -> Vec<f64> {
    let mut weights: Vec<f64> = group_mass
        .iter()
        .zip(grouping.sizes())
        .map(|(mass, size)| mass / (n as f64 * size as f64))
        .collect();
    if weights.iter().any(|w| *w <= 0.0) {
        for (k, w) in weights.iter_mut().enumerate() {
            if *w <= 0.0 {
                *w = WEIGHT_FLOOR;
                diagnostics.flag(format!("group {} received no responsibility", k + 1));
            }
        }
    }
    normalize_weights(grouping, &mut weights);
    weights
}

pub(crate) fn normalize_weights(grouping: &GroupingScheme, weights: &mut [f64]) {
    let total: f64 = weights
        .iter()
        .zip(grouping.sizes())
        .map(|(w, m)| w * m as f64)
        .sum();
    weights.iter_mut().for_each(|w| *w /= total);
}

/// Root mean square of the pooled residuals `y - predict(group, f)`.
pub(crate) fn pooled_residual_sd<F>(set: &TrainingSet, predict: F) -> f64
where
    F: Fn(usize, f64) -> f64,
{
    let groups = set.grouping().group_of_slot();
    let mut sum_sq = 0.0;
    let mut count = 0usize;
    for (row, y) in set.rows() {
        for (slot, &f) in row.iter().enumerate() {
            sum_sq += (y - predict(groups[slot], f)).powi(2);
            count += 1;
        }
    }
    (sum_sq / count as f64).sqrt()
}
