//! Ensemble model output statistics with exchangeable-group coefficients.
//!
//! The predictive law is `N(a0 + sum_k a_k * s_k, b0 + b1 * S^2)` (or its
//! zero-truncated version), where `s_k` is the sum of the members of group `k`
//! and `S^2` is the ensemble variance with divisor `M - 1`.

use std::fmt;
use std::str::FromStr;

use crate::bma::{Fit, FitDiagnostics};
use crate::dist::{crps_normal, crps_truncnormal, Normal, Predictive, TruncNormal};
use crate::error::{Error, Result};
use crate::grouping::GroupingScheme;
use crate::optimize::{minimize, ObjectiveSpec, Options, Transform};
use crate::window::TrainingSet;

/// Summary of one ensemble that EMOS depends on.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleStats {
    pub group_sums: Vec<f64>,
    pub mean: f64,
    /// Unbiased variance (divisor `M - 1`).
    pub variance: f64,
}

/// Statistics of `members`, accumulated in the canonical member arrangement so
/// that reordering members within a group cannot change a single bit.
pub fn ensemble_stats(members: &[f64], grouping: &GroupingScheme) -> Result<EnsembleStats> {
    let arranged = grouping.arrange(members)?;
    Ok(stats_of_arranged(&arranged, grouping))
}

fn stats_of_arranged(arranged: &[f64], grouping: &GroupingScheme) -> EnsembleStats {
    let m = arranged.len();
    let group_sums: Vec<f64> = (0..grouping.group_count())
        .map(|k| arranged[grouping.slots(k)].iter().sum())
        .collect();
    let mean = arranged.iter().sum::<f64>() / m as f64;
    let variance = arranged
        .iter()
        .map(|f| (f - mean) * (f - mean))
        .sum::<f64>()
        / (m - 1) as f64;
    EnsembleStats {
        group_sums,
        mean,
        variance,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmosFamily {
    Normal,
    TruncNormal,
}

impl EmosFamily {
    pub fn as_str(&self) -> &'static str {
        match self {
            EmosFamily::Normal => "normal",
            EmosFamily::TruncNormal => "truncnormal",
        }
    }
}

impl fmt::Display for EmosFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EmosFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "normal" => Ok(EmosFamily::Normal),
            "truncnormal" => Ok(EmosFamily::TruncNormal),
            other => Err(Error::Parse {
                line: 0,
                message: format!("unknown EMOS family {other:?}"),
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmosModel {
    pub grouping: GroupingScheme,
    pub family: EmosFamily,
    pub a0: f64,
    /// One nonnegative coefficient per group, multiplying the group sum.
    pub a: Vec<f64>,
    pub b0: f64,
    pub b1: f64,
}

impl EmosModel {
    pub fn validate(&self) -> Result<()> {
        if self.a.len() != self.grouping.group_count() {
            return Err(Error::Shape(format!(
                "{} location coefficients for {} groups",
                self.a.len(),
                self.grouping.group_count()
            )));
        }
        let finite = self.a0.is_finite() && self.b0.is_finite() && self.b1.is_finite();
        if !finite || self.a.iter().any(|a| !(*a >= 0.0) || !a.is_finite()) {
            return Err(Error::Domain(
                "EMOS location coefficients must be finite and a_k >= 0".into(),
            ));
        }
        if !(self.b0 >= 0.0 && self.b1 >= 0.0) {
            return Err(Error::Domain(format!(
                "variance coefficients must be nonnegative, got b0={} b1={}",
                self.b0, self.b1
            )));
        }
        Ok(())
    }

    /// Location and scale for one ensemble.
    pub fn location_scale(&self, stats: &EnsembleStats) -> Result<(f64, f64)> {
        let mu = location(self.a0, &self.a, &stats.group_sums);
        let var = self.b0 + self.b1 * stats.variance;
        if !(var > 0.0) {
            return Err(Error::Degenerate(format!(
                "predictive variance {var} (b0={}, b1={}, S^2={})",
                self.b0, self.b1, stats.variance
            )));
        }
        Ok((mu, var.sqrt()))
    }

    pub fn predict(&self, members: &[f64]) -> Result<Predictive> {
        let stats = ensemble_stats(members, &self.grouping)?;
        let (mu, sigma) = self.location_scale(&stats)?;
        Ok(match self.family {
            EmosFamily::Normal => Normal::new(mu, sigma)?.into(),
            EmosFamily::TruncNormal => TruncNormal::new(mu, sigma)?.into(),
        })
    }

    /// Mean closed-form CRPS over a training set.
    pub fn mean_crps(&self, set: &TrainingSet) -> Result<f64> {
        let cases = precompute(set);
        let v = mean_crps(self.family, &cases, self.a0, &self.a, self.b0, self.b1);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Degenerate(
                "CRPS is not finite on this training set".into(),
            ))
        }
    }
}

fn location(a0: f64, a: &[f64], sums: &[f64]) -> f64 {
    a0 + a.iter().zip(sums).map(|(a, s)| a * s).sum::<f64>()
}

struct Case {
    stats: EnsembleStats,
    obs: f64,
}

fn precompute(set: &TrainingSet) -> Vec<Case> {
    set.rows()
        .map(|(row, obs)| Case {
            stats: stats_of_arranged(row, set.grouping()),
            obs,
        })
        .collect()
}

fn mean_crps(family: EmosFamily, cases: &[Case], a0: f64, a: &[f64], b0: f64, b1: f64) -> f64 {
    let mut total = 0.0;
    for c in cases {
        let var = b0 + b1 * c.stats.variance;
        if !(var > 0.0) {
            return f64::INFINITY;
        }
        let mu = location(a0, a, &c.stats.group_sums);
        total += match family {
            EmosFamily::Normal => crps_normal(mu, var.sqrt(), c.obs),
            EmosFamily::TruncNormal => crps_truncnormal(mu, var.sqrt(), c.obs),
        };
    }
    total / cases.len() as f64
}

/// Warm start: ensemble mean as location plus the mean residual as intercept,
/// residual variance as `b0`, and `b1 = 0.1`.
fn initial_model(set: &TrainingSet, family: EmosFamily) -> EmosModel {
    let grouping = set.grouping();
    let n = set.len() as f64;
    // Equal member weights 1/M reproduce the ensemble mean as the location.
    let a = vec![1.0 / grouping.member_count() as f64; grouping.group_count()];
    let means: Vec<f64> = set
        .rows()
        .map(|(row, _)| row.iter().sum::<f64>() / row.len() as f64)
        .collect();
    let a0 = (set.obs().iter().sum::<f64>() - means.iter().sum::<f64>()) / n;
    let resid_var = set
        .obs()
        .iter()
        .zip(&means)
        .map(|(y, f)| (y - a0 - f).powi(2))
        .sum::<f64>()
        / n;
    EmosModel {
        grouping: grouping.clone(),
        family,
        a0,
        a,
        b0: resid_var.max(1e-6),
        b1: 0.1,
    }
}

/// Attempts at widening `b0` when the starting point has non-finite CRPS.
const WIDEN_RETRIES: usize = 3;

/// Minimum mean CRPS fit over the training set.
///
/// Parameters are `(a0, a_1..a_m, b0, b1)`; all but `a0` go through the square
/// transform, so every fitted coefficient except the intercept is nonnegative.
pub fn fit_emos(set: &TrainingSet, family: EmosFamily, opts: &Options) -> Result<Fit<EmosModel>> {
    let grouping = set.grouping();
    let g = grouping.group_count();
    let n = set.len();
    if n < g + 3 {
        return Err(Error::Fit(format!(
            "EMOS with {g} groups needs at least {} cases, window has {n}",
            g + 3
        )));
    }
    if family == EmosFamily::TruncNormal && set.obs().iter().any(|y| *y < 0.0) {
        return Err(Error::Fit(
            "negative observation in truncated normal fit".into(),
        ));
    }
    let cases = precompute(set);
    let init = initial_model(set, family);
    let (a0_init, a_init, b1_init) = (init.a0, init.a, init.b1);
    let mut b0_init = init.b0;

    let objective = |p: &[f64]| mean_crps(family, &cases, p[0], &p[1..=g], p[g + 1], p[g + 2]);
    let mut diagnostics = FitDiagnostics::default();
    let mut retries = 0;
    loop {
        let mut start = vec![a0_init];
        start.extend(&a_init);
        start.push(b0_init);
        start.push(b1_init);
        if objective(&start).is_finite() {
            break;
        }
        if retries == WIDEN_RETRIES {
            return Err(Error::Setup(format!(
                "EMOS objective not finite at the start even after widening b0 to {b0_init}"
            )));
        }
        retries += 1;
        b0_init *= 10.0;
        diagnostics.flag("initial b0 widened");
    }

    let mut start = vec![a0_init];
    start.extend(&a_init);
    start.push(b0_init);
    start.push(b1_init);
    let mut transforms = vec![Transform::Identity];
    transforms.extend(std::iter::repeat_n(Transform::Square, g + 2));
    let spec = ObjectiveSpec::from_constrained(objective, transforms, &start)?;
    let result = minimize(&spec, opts)?;
    diagnostics.iterations = result.iterations;
    diagnostics.converged = result.converged;

    let p = &result.argmin;
    let model = EmosModel {
        grouping: grouping.clone(),
        family,
        a0: p[0],
        a: p[1..=g].to_vec(),
        b0: p[g + 1],
        b1: p[g + 2],
    };
    Ok(Fit { model, diagnostics })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::PredictiveDist;
    use crate::grouping::{make_grouping, GroupingKind};

    fn two_group(m: usize) -> GroupingScheme {
        make_grouping(&GroupingKind::TwoGroup, m).unwrap()
    }

    #[test]
    fn stats_of_three_members() {
        let s = ensemble_stats(&[1.0, 2.0, 3.0], &two_group(3)).unwrap();
        assert_eq!(s.mean, 2.0);
        assert_eq!(s.variance, 1.0);
        assert_eq!(s.group_sums, vec![1.0, 5.0]);
    }

    #[test]
    fn stats_of_constant_ensemble() {
        let s = ensemble_stats(&[4.5; 5], &two_group(5)).unwrap();
        assert_eq!(s.variance, 0.0);
    }

    #[test]
    fn stats_of_one_to_eleven() {
        let members: Vec<f64> = (1..=11).map(f64::from).collect();
        let s = ensemble_stats(&members, &two_group(11)).unwrap();
        assert_eq!(s.group_sums, vec![1.0, 65.0]);
        assert_eq!(s.variance, 11.0);
    }

    fn model(b0: f64, b1: f64) -> EmosModel {
        EmosModel {
            grouping: two_group(3),
            family: EmosFamily::Normal,
            a0: 0.0,
            a: vec![1.0, 1.0],
            b0,
            b1,
        }
    }

    #[test]
    fn predict_substitutes_directly() {
        match model(1.0, 0.0).predict(&[0.0; 3]).unwrap() {
            Predictive::Normal(n) => {
                assert_eq!(n.mu(), 0.0);
                assert_eq!(n.sigma(), 1.0);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn constant_ensemble_uses_intercept_variance() {
        let p = model(4.0, 3.0).predict(&[1.0; 3]).unwrap();
        let n = match p {
            Predictive::Normal(n) => n,
            other => panic!("{other:?}"),
        };
        assert_eq!(n.sigma(), 2.0);
        assert_eq!(n.mu(), 3.0);
    }

    #[test]
    fn zero_variance_is_degenerate() {
        assert!(matches!(
            model(0.0, 0.0).predict(&[1.0, 2.0, 3.0]),
            Err(Error::Degenerate(_))
        ));
        assert!(matches!(
            model(0.0, 1.0).predict(&[1.0; 3]),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn normal_mean_equals_median() {
        let p = model(2.0, 0.5).predict(&[1.0, 2.0, 4.0]).unwrap();
        assert!((p.mean() - p.quantile(0.5).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn too_few_cases() {
        let g = two_group(3);
        let rows = vec![(vec![1.0, 2.0, 3.0], 2.0); 4];
        let set = TrainingSet::from_rows(rows, &g).unwrap();
        assert!(matches!(
            fit_emos(&set, EmosFamily::Normal, &Options::default()),
            Err(Error::Fit(_))
        ));
    }

    #[test]
    fn recovers_noise_free_relation() {
        // obs = 0.5 + 0.3 * control + 0.1 * (sum of the rest), tiny noise.
        let g = two_group(4);
        let mut rows = Vec::new();
        for i in 0..200 {
            let x = i as f64 * 0.05;
            let members = vec![
                x,
                x + 0.3 * (i % 3) as f64,
                x - 0.2,
                x + 0.1 * (i % 5) as f64,
            ];
            let noise = 1e-3 * ((i * 7919) % 13) as f64 / 13.0 - 5e-4;
            let obs = 0.5 + 0.3 * members[0] + 0.1 * members[1..].iter().sum::<f64>() + noise;
            rows.push((members, obs));
        }
        let set = TrainingSet::from_rows(rows, &g).unwrap();
        let fit = fit_emos(&set, EmosFamily::Normal, &Options::default()).unwrap();
        let m = fit.model;
        assert!((m.a[0] - 0.3).abs() < 0.01, "{m:?}");
        assert!((m.a[1] - 0.1).abs() < 0.01, "{m:?}");
        assert!(m.b0 + m.b1 * 0.1 < 1e-3, "{m:?}");
    }

    #[test]
    fn fit_does_not_worsen_the_start() {
        let g = two_group(3);
        let rows: Vec<_> = (0..50)
            .map(|i| {
                let x = (i as f64 * 0.37).sin() * 3.0;
                (vec![x, x + 0.5, x - 0.4], x + (i as f64 * 1.3).cos())
            })
            .collect();
        let set = TrainingSet::from_rows(rows, &g).unwrap();
        let fit = fit_emos(&set, EmosFamily::Normal, &Options::default()).unwrap();
        let m = &fit.model;
        assert!(m.a.iter().all(|a| *a >= 0.0) && m.b0 >= 0.0 && m.b1 >= 0.0);
        let start = initial_model(&set, EmosFamily::Normal);
        assert!(m.mean_crps(&set).unwrap() <= start.mean_crps(&set).unwrap());
    }
}
