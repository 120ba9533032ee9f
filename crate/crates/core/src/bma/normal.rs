use super::{
    check_weights, crps_normal_mixture, e_step, equal_weights, normalize_weights,
    pooled_residual_sd, require_cases, update_weights, BiasCorrection, Component, EmOptions, Fit,
    FitDiagnostics, Mixture,
};
use crate::dist::Normal;
use crate::error::{Error, Result};
use crate::grouping::GroupingScheme;
use crate::optimize::{minimize, ObjectiveSpec, Options, Transform};
use crate::window::TrainingSet;

/// Variance floor applied when the EM variance collapses.
pub const VARIANCE_FLOOR: f64 = 1e-8;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// Normal-component BMA: member `f` of group `k` contributes
/// `N(b0_k + b1_k f, sigma^2)` with weight `weights[k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BmaNormalModel {
    pub grouping: GroupingScheme,
    pub bias: BiasCorrection,
    pub weights: Vec<f64>,
    pub sigma: f64,
}

impl BmaNormalModel {
    pub fn validate(&self) -> Result<()> {
        check_weights(&self.grouping, &self.weights)?;
        self.bias.validate()?;
        if self.bias.coefficients.len() != self.grouping.group_count() {
            return Err(Error::Shape("one bias pair per group required".into()));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::Domain(format!(
                "sigma must be positive, got {}",
                self.sigma
            )));
        }
        Ok(())
    }

    /// Component means of a case, in canonical slot order.
    fn means(&self, arranged: &[f64]) -> Vec<f64> {
        arranged
            .iter()
            .zip(self.grouping.group_of_slot())
            .map(|(&f, &g)| self.bias.apply(g, f))
            .collect()
    }

    pub fn predict(&self, members: &[f64]) -> Result<Mixture> {
        let arranged = self.grouping.arrange(members)?;
        let components = self
            .means(&arranged)
            .into_iter()
            .zip(self.grouping.group_of_slot())
            .map(|(mu, &g)| {
                Ok((
                    self.weights[g],
                    Component::Normal(Normal::new(mu, self.sigma)?),
                ))
            })
            .collect::<Result<Vec<_>>>()?;
        Mixture::new(components)
    }

    /// Training log-likelihood.
    pub fn loglik(&self, set: &TrainingSet) -> Result<f64> {
        let residuals = residuals(set, &self.bias);
        let m = set.members();
        let ln_sigma = self.sigma.ln();
        let inv_var = 1.0 / (self.sigma * self.sigma);
        Ok(e_step(set, &self.weights, |i, s| {
            let r = residuals[i * m + s];
            -0.5 * r * r * inv_var - ln_sigma - HALF_LN_2PI
        })?
        .loglik)
    }
}

fn residuals(set: &TrainingSet, bias: &BiasCorrection) -> Vec<f64> {
    let groups = set.grouping().group_of_slot();
    set.rows()
        .flat_map(|(row, y)| {
            row.iter()
                .zip(groups)
                .map(move |(&f, &g)| y - bias.apply(g, f))
        })
        .collect()
}

/// EM for the weights and the common variance with the bias correction held fixed.
pub fn fit_bma_normal_em(
    set: &TrainingSet,
    bias: &BiasCorrection,
    init: Option<&BmaNormalModel>,
    opts: &EmOptions,
) -> Result<Fit<BmaNormalModel>> {
    require_cases(set, 2)?;
    let grouping = set.grouping();
    bias.validate()?;
    if bias.coefficients.len() != grouping.group_count() {
        return Err(Error::Shape("one bias pair per group required".into()));
    }
    let residuals = residuals(set, bias);
    let m = set.members();
    let n = set.len();

    let (mut weights, mut variance) = match init {
        Some(model) => {
            model.validate()?;
            (model.weights.clone(), model.sigma * model.sigma)
        }
        None => {
            let sd = pooled_residual_sd(set, |g, f| bias.apply(g, f));
            (equal_weights(grouping), (sd * sd).max(VARIANCE_FLOOR))
        }
    };

    let mut diagnostics = FitDiagnostics::default();
    let mut previous = f64::NEG_INFINITY;
    for iteration in 0..opts.max_iter {
        let ln_sigma = 0.5 * variance.ln();
        let inv_var = 1.0 / variance;
        let step = e_step(set, &weights, |i, s| {
            let r = residuals[i * m + s];
            -0.5 * r * r * inv_var - ln_sigma - HALF_LN_2PI
        })?;
        diagnostics.loglik_trace.push(step.loglik);
        diagnostics.iterations = iteration + 1;
        if step.loglik - previous < opts.tol {
            diagnostics.converged = true;
            break;
        }
        previous = step.loglik;

        weights = update_weights(grouping, &step.group_mass, n, &mut diagnostics);
        let weighted_sq: f64 = step
            .resp
            .iter()
            .zip(&residuals)
            .map(|(z, r)| z * r * r)
            .sum();
        variance = weighted_sq / n as f64;
        if variance < VARIANCE_FLOOR {
            variance = VARIANCE_FLOOR;
            diagnostics.flag("variance collapsed to the floor");
        }
    }

    Ok(Fit {
        model: BmaNormalModel {
            grouping: grouping.clone(),
            bias: bias.clone(),
            weights,
            sigma: variance.sqrt(),
        },
        diagnostics,
    })
}

/// Weights and variance chosen to minimize the mean training CRPS, with the
/// bias correction held fixed.
pub fn fit_bma_normal_crps(
    set: &TrainingSet,
    bias: &BiasCorrection,
    init: Option<&BmaNormalModel>,
    opts: &Options,
) -> Result<Fit<BmaNormalModel>> {
    require_cases(set, 2)?;
    let grouping = set.grouping();
    bias.validate()?;
    let g = grouping.group_count();
    let means: Vec<Vec<f64>> = set
        .rows()
        .map(|(row, _)| {
            row.iter()
                .zip(grouping.group_of_slot())
                .map(|(&f, &k)| bias.apply(k, f))
                .collect()
        })
        .collect();
    let sizes = grouping.sizes();

    // params: g unnormalized group masses, then sigma
    let to_model = |p: &[f64]| -> Option<(Vec<f64>, f64)> {
        let total: f64 = p[..g].iter().sum();
        if !(total > 0.0) || !(p[g] > 0.0) {
            return None;
        }
        let weights = p[..g]
            .iter()
            .zip(&sizes)
            .map(|(mass, &size)| mass / total / size as f64)
            .collect();
        Some((weights, p[g]))
    };
    let objective = |p: &[f64]| -> f64 {
        let Some((weights, sigma)) = to_model(p) else {
            return f64::INFINITY;
        };
        let slot_w: Vec<f64> = grouping
            .group_of_slot()
            .iter()
            .map(|&k| weights[k])
            .collect();
        let total: f64 = means
            .iter()
            .zip(set.obs())
            .map(|(mu, &y)| crps_normal_mixture(&slot_w, mu, sigma, y))
            .sum();
        total / set.len() as f64
    };

    let (start_w, start_sigma) = match init {
        Some(model) => (model.weights.clone(), model.sigma),
        None => (
            equal_weights(grouping),
            pooled_residual_sd(set, |k, f| bias.apply(k, f)).max(1e-4),
        ),
    };
    let mut start: Vec<f64> = start_w
        .iter()
        .zip(&sizes)
        .map(|(w, &size)| w * size as f64)
        .collect();
    start.push(start_sigma);
    let spec = ObjectiveSpec::from_constrained(objective, vec![Transform::Square; g + 1], &start)?;
    let result = minimize(&spec, opts)?;
    let (mut weights, sigma) = to_model(&result.argmin)
        .ok_or_else(|| Error::Fit("CRPS minimization left the parameter domain".into()))?;
    normalize_weights(grouping, &mut weights);

    let mut diagnostics = FitDiagnostics {
        iterations: result.iterations,
        converged: result.converged,
        ..Default::default()
    };
    if !result.converged {
        diagnostics.flag("CRPS minimization hit the iteration cap");
    }
    Ok(Fit {
        model: BmaNormalModel {
            grouping: grouping.clone(),
            bias: bias.clone(),
            weights,
            sigma,
        },
        diagnostics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::PredictiveDist;
    use crate::grouping::{make_grouping, GroupingKind};

    #[test]
    fn single_group_identity_bias_gives_ml_variance() {
        let g = GroupingScheme::from_index_sets(&[vec![1, 2]], 2).unwrap();
        // identical members: one effective component
        let rows: Vec<(Vec<f64>, f64)> = (0..20)
            .map(|i| {
                let f = i as f64 * 0.5;
                (vec![f, f], f + if i % 2 == 0 { 0.7 } else { -0.3 })
            })
            .collect();
        let set = TrainingSet::from_rows(rows.clone(), &g).unwrap();
        let fit = fit_bma_normal_em(
            &set,
            &BiasCorrection::identity(1),
            None,
            &EmOptions::default(),
        )
        .unwrap();
        let mse: f64 =
            rows.iter().map(|(m, y)| (y - m[0]).powi(2)).sum::<f64>() / rows.len() as f64;
        assert!((fit.model.sigma.powi(2) - mse).abs() < 1e-12);
        assert_eq!(fit.model.weights, vec![0.5]);
    }

    #[test]
    fn identical_members_keep_equal_weights() {
        let g = make_grouping(&GroupingKind::TwoGroup, 4).unwrap();
        let rows = (0..30)
            .map(|i| {
                let f = (i as f64).sin() * 3.0;
                (vec![f; 4], f + (i as f64 * 1.7).cos())
            })
            .collect();
        let set = TrainingSet::from_rows(rows, &g).unwrap();
        let fit = fit_bma_normal_em(
            &set,
            &BiasCorrection::identity(2),
            None,
            &EmOptions::default(),
        )
        .unwrap();
        for w in &fit.model.weights {
            assert!((w - 0.25).abs() < 1e-12, "{w}");
        }
    }

    #[test]
    fn predict_collapses_identical_members() {
        let g = make_grouping(&GroupingKind::TwoGroup, 11).unwrap();
        let mut weights = vec![0.3, 0.07];
        normalize_weights(&g, &mut weights);
        let model = BmaNormalModel {
            grouping: g,
            bias: BiasCorrection::identity(2),
            weights,
            sigma: 1.5,
        };
        let mix = model.predict(&[4.0; 11]).unwrap();
        let single = Normal::new(4.0, 1.5).unwrap();
        for &x in &[0.0, 3.0, 4.0, 7.5] {
            assert!((mix.cdf(x) - single.cdf(x)).abs() < 1e-14);
        }
        assert_eq!(mix.components().len(), 11);
        assert!((mix.components()[0].0 - 0.3).abs() < 1e-15);
        assert!((mix.components()[1].0 - 0.07).abs() < 1e-15);
        assert!(model.predict(&[1.0; 10]).is_err());
    }

    #[test]
    fn too_few_cases_is_an_error() {
        let g = make_grouping(&GroupingKind::TwoGroup, 3).unwrap();
        let set = TrainingSet::from_rows(vec![(vec![1.0, 2.0, 3.0], 2.0)], &g).unwrap();
        let bias = BiasCorrection::identity(2);
        assert!(fit_bma_normal_em(&set, &bias, None, &EmOptions::default()).is_err());
    }
}
