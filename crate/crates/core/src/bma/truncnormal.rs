use super::{
    check_weights, e_step, equal_weights, fit_bias_regression, pooled_residual_sd, require_cases,
    update_weights, BiasMode, Component, EmOptions, Fit, FitDiagnostics, Mixture,
};
use crate::dist::{std_cdf, TruncNormal};
use crate::error::{Error, Result};
use crate::grouping::GroupingScheme;
use crate::optimize::{minimize, ObjectiveSpec, Options, Transform};
use crate::window::TrainingSet;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// Above this standardized location ln Phi is below 1e-16 in magnitude and is dropped.
const NEGLIGIBLE_TRUNCATION: f64 = 8.3;

/// Zero-truncated normal BMA: member `f` of group `k` contributes
/// `N0(b0_k + b1_k f, sigma^2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BmaTruncNormalModel {
    pub grouping: GroupingScheme,
    /// `(b0, b1)` per group.
    pub coefficients: Vec<(f64, f64)>,
    pub sigma: f64,
    pub weights: Vec<f64>,
}

impl BmaTruncNormalModel {
    pub fn validate(&self) -> Result<()> {
        check_weights(&self.grouping, &self.weights)?;
        if self.coefficients.len() != self.grouping.group_count() {
            return Err(Error::Shape("one location pair per group required".into()));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::Domain(format!(
                "sigma must be positive, got {}",
                self.sigma
            )));
        }
        Ok(())
    }

    pub fn predict(&self, members: &[f64]) -> Result<Mixture> {
        let arranged = self.grouping.arrange(members)?;
        let components = arranged
            .iter()
            .zip(self.grouping.group_of_slot())
            .map(|(&f, &g)| {
                let (b0, b1) = self.coefficients[g];
                Ok((
                    self.weights[g],
                    Component::TruncNormal(TruncNormal::new(b0 + b1 * f, self.sigma)?),
                ))
            })
            .collect::<Result<Vec<_>>>()?;
        Mixture::new(components)
    }

    pub fn loglik(&self, set: &TrainingSet) -> Result<f64> {
        let groups = set.grouping().group_of_slot();
        Ok(e_step(set, &self.weights, |i, s| {
            let (b0, b1) = self.coefficients[groups[s]];
            ln_density(set.obs()[i], b0 + b1 * set.row(i)[s], self.sigma)
        })?
        .loglik)
    }
}

fn ln_density(y: f64, mu: f64, sigma: f64) -> f64 {
    if y < 0.0 {
        return f64::NEG_INFINITY;
    }
    let z = (y - mu) / sigma;
    -0.5 * z * z - sigma.ln() - std_cdf(mu / sigma).ln() - HALF_LN_2PI
}

/// Responsibility-weighted moments of one group, enough for the Gaussian part
/// of the expected complete-data log-likelihood.
#[derive(Default, Clone, Copy)]
struct Moments {
    z: f64,
    zy: f64,
    zf: f64,
    zyy: f64,
    zff: f64,
    zyf: f64,
}

/// Full maximum likelihood: EM over the mixture memberships whose M-step moves
/// the locations and the scale jointly by numerical ascent.
pub fn fit_bma_truncnormal_ml(
    set: &TrainingSet,
    init: Option<&BmaTruncNormalModel>,
    opts: &EmOptions,
) -> Result<Fit<BmaTruncNormalModel>> {
    require_cases(set, 2)?;
    if set.obs().iter().any(|y| *y < 0.0) {
        return Err(Error::Fit(
            "negative observation in truncated normal fit".into(),
        ));
    }
    let grouping = set.grouping();
    let groups = grouping.group_of_slot();
    let k = grouping.group_count();
    let m = set.members();
    let n = set.len();
    let mut diagnostics = FitDiagnostics::default();

    let (mut weights, mut coefficients, mut sigma) = match init {
        Some(model) => {
            model.validate()?;
            (
                model.weights.clone(),
                model.coefficients.clone(),
                model.sigma,
            )
        }
        None => {
            let bias = fit_bias_regression(set, BiasMode::Linear, &mut diagnostics)?;
            let sd = pooled_residual_sd(set, |g, f| bias.apply(g, f));
            (equal_weights(grouping), bias.coefficients, sd.max(1e-3))
        }
    };

    let inner = Options {
        tol: 1e-10,
        max_iter: 2000,
        multistart: false,
    };
    let mut previous = f64::NEG_INFINITY;
    for iteration in 0..opts.max_iter {
        let step = e_step(set, &weights, |i, s| {
            let (b0, b1) = coefficients[groups[s]];
            ln_density(set.obs()[i], b0 + b1 * set.row(i)[s], sigma)
        })
        .map_err(|e| Error::Fit(format!("truncated normal E-step: {e}")))?;
        diagnostics.loglik_trace.push(step.loglik);
        diagnostics.iterations = iteration + 1;
        if step.loglik - previous < opts.tol {
            diagnostics.converged = true;
            break;
        }
        previous = step.loglik;

        weights = update_weights(grouping, &step.group_mass, n, &mut diagnostics);

        let mut moments = vec![Moments::default(); k];
        for (i, (row, y)) in set.rows().enumerate() {
            for (s, &f) in row.iter().enumerate() {
                let z = step.resp[i * m + s];
                let mo = &mut moments[groups[s]];
                mo.z += z;
                mo.zy += z * y;
                mo.zf += z * f;
                mo.zyy += z * y * y;
                mo.zff += z * f * f;
                mo.zyf += z * y * f;
            }
        }
        let resp = &step.resp;
        let objective = |p: &[f64]| -> f64 {
            let sigma = p[2 * k];
            if !(sigma > 0.0) {
                return f64::INFINITY;
            }
            let mut sq = 0.0;
            for (g, mo) in moments.iter().enumerate() {
                let (b0, b1) = (p[2 * g], p[2 * g + 1]);
                sq += mo.zyy + b0 * b0 * mo.z + b1 * b1 * mo.zff
                    - 2.0 * b0 * mo.zy
                    - 2.0 * b1 * mo.zyf
                    + 2.0 * b0 * b1 * mo.zf;
            }
            let mut q = -0.5 * sq / (sigma * sigma) - n as f64 * sigma.ln();
            for i in 0..n {
                let row = set.row(i);
                for (s, &f) in row.iter().enumerate() {
                    let g = groups[s];
                    let a = (p[2 * g] + p[2 * g + 1] * f) / sigma;
                    if a < NEGLIGIBLE_TRUNCATION {
                        let mass = std_cdf(a);
                        if mass < crate::dist::TRUNC_MIN_MASS {
                            return f64::INFINITY;
                        }
                        q -= resp[i * m + s] * mass.ln();
                    }
                }
            }
            -q / n as f64
        };
        let mut start: Vec<f64> = coefficients.iter().flat_map(|&(a, b)| [a, b]).collect();
        start.push(sigma);
        let mut transforms = vec![Transform::Identity; 2 * k];
        transforms.push(Transform::Square);
        let spec = ObjectiveSpec::from_constrained(objective, transforms, &start)?;
        let result = minimize(&spec, &inner)?;
        coefficients = (0..k)
            .map(|g| (result.argmin[2 * g], result.argmin[2 * g + 1]))
            .collect();
        sigma = result.argmin[2 * k];
    }

    Ok(Fit {
        model: BmaTruncNormalModel {
            grouping: grouping.clone(),
            coefficients,
            sigma,
            weights,
        },
        diagnostics,
    })
}
