use super::{
    check_weights, e_step, equal_weights, require_cases, update_weights, Component, EmOptions, Fit,
    FitDiagnostics, Mixture,
};
use crate::dist::{gamma_ln_pdf, GammaMeanSd};
use crate::error::{Error, Result};
use crate::grouping::GroupingScheme;
use crate::optimize::{minimize, ObjectiveSpec, Options, Transform};
use crate::window::TrainingSet;

/// Observations below this value are raised to it before entering the gamma likelihood.
pub const GAMMA_OBS_FLOOR: f64 = 0.1;

/// Smallest mean a training member may be assigned.
const MIN_MEAN: f64 = 1e-3;

/// Gamma-component BMA with mean `b0 + b1 f` and standard deviation `c0 + c1 f`
/// shared by all members; only the weights differ between groups.
#[derive(Debug, Clone, PartialEq)]
pub struct BmaGammaModel {
    pub grouping: GroupingScheme,
    pub b0: f64,
    pub b1: f64,
    pub c0: f64,
    pub c1: f64,
    pub weights: Vec<f64>,
}

impl BmaGammaModel {
    pub fn validate(&self) -> Result<()> {
        check_weights(&self.grouping, &self.weights)?;
        if [self.b0, self.b1, self.c0, self.c1]
            .iter()
            .any(|v| !v.is_finite())
        {
            return Err(Error::Domain(
                "gamma BMA coefficients must be finite".into(),
            ));
        }
        Ok(())
    }

    pub fn component(&self, f: f64) -> Result<GammaMeanSd> {
        let mean = self.b0 + self.b1 * f;
        let sd = self.c0 + self.c1 * f;
        GammaMeanSd::new(mean, sd).map_err(|_| {
            Error::Degenerate(format!(
                "member value {f} gives gamma mean {mean} and sd {sd}"
            ))
        })
    }

    pub fn predict(&self, members: &[f64]) -> Result<Mixture> {
        let arranged = self.grouping.arrange(members)?;
        let components = arranged
            .iter()
            .zip(self.grouping.group_of_slot())
            .map(|(&f, &g)| Ok((self.weights[g], Component::Gamma(self.component(f)?))))
            .collect::<Result<Vec<_>>>()?;
        Mixture::new(components)
    }

    pub fn loglik(&self, set: &TrainingSet) -> Result<f64> {
        let obs: Vec<f64> = set.obs().iter().map(|y| y.max(GAMMA_OBS_FLOOR)).collect();
        let (b0, b1, c0, c1) = (self.b0, self.b1, self.c0, self.c1);
        Ok(e_step(set, &self.weights, |i, s| {
            let f = set.row(i)[s];
            gamma_ln_pdf(b0 + b1 * f, c0 + c1 * f, obs[i])
        })?
        .loglik)
    }
}

/// Regression for the mean, then EM for the weights and the sd coefficients.
///
/// The M-step for `(c0, c1)` maximizes the expected complete-data
/// log-likelihood numerically from the previous values, so the training
/// likelihood never decreases.
pub fn fit_bma_gamma(
    set: &TrainingSet,
    init: Option<&BmaGammaModel>,
    opts: &EmOptions,
) -> Result<Fit<BmaGammaModel>> {
    require_cases(set, 2)?;
    let grouping = set.grouping();
    let m = set.members();
    let n = set.len();
    let mut diagnostics = FitDiagnostics::default();

    let obs: Vec<f64> = set.obs().iter().map(|y| y.max(GAMMA_OBS_FLOOR)).collect();
    if set.obs().iter().any(|y| *y < GAMMA_OBS_FLOOR) {
        diagnostics.flag(format!("observations below {GAMMA_OBS_FLOOR} clamped"));
    }

    // Pooled OLS of the observation on every member value.
    let count = (n * m) as f64;
    let mf = set.rows().flat_map(|(row, _)| row.iter()).sum::<f64>() / count;
    let my = set.obs().iter().sum::<f64>() / n as f64;
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for (row, y) in set.rows() {
        for &f in row {
            sxx += (f - mf) * (f - mf);
            sxy += (f - mf) * (y - my);
        }
    }
    let b1 = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let mut b0 = my - b1 * mf;
    let min_mean = set
        .rows()
        .flat_map(|(row, _)| row.iter().map(|&f| b0 + b1 * f))
        .fold(f64::INFINITY, f64::min);
    if min_mean < MIN_MEAN {
        b0 += MIN_MEAN - min_mean;
        diagnostics.flag("nonpositive fitted mean; intercept raised");
    }

    let means: Vec<f64> = set
        .rows()
        .flat_map(|(row, _)| row.iter().map(|&f| b0 + b1 * f).collect::<Vec<_>>())
        .collect();
    let values: Vec<f64> = set.rows().flat_map(|(row, _)| row.to_vec()).collect();

    let (mut weights, mut c0, mut c1) = match init {
        Some(model) => {
            model.validate()?;
            (model.weights.clone(), model.c0, model.c1)
        }
        None => {
            let rms = (means
                .iter()
                .enumerate()
                .map(|(j, mu)| (obs[j / m] - mu).powi(2))
                .sum::<f64>()
                / means.len() as f64)
                .sqrt();
            (equal_weights(grouping), rms.max(1e-3), 0.0)
        }
    };

    let inner = Options {
        tol: 1e-10,
        max_iter: 400,
        multistart: false,
    };
    let mut previous = f64::NEG_INFINITY;
    for iteration in 0..opts.max_iter {
        let step = e_step(set, &weights, |i, s| {
            let j = i * m + s;
            gamma_ln_pdf(means[j], c0 + c1 * values[j], obs[i])
        })?;
        diagnostics.loglik_trace.push(step.loglik);
        diagnostics.iterations = iteration + 1;
        if step.loglik - previous < opts.tol {
            diagnostics.converged = true;
            break;
        }
        previous = step.loglik;

        weights = update_weights(grouping, &step.group_mass, n, &mut diagnostics);
        let resp = &step.resp;
        let objective = |p: &[f64]| -> f64 {
            let mut q = 0.0;
            for (j, (&z, (&mu, &f))) in resp.iter().zip(means.iter().zip(&values)).enumerate() {
                let sd = p[0] + p[1] * f;
                if !(sd > 0.0) {
                    return f64::INFINITY;
                }
                if z > 0.0 {
                    q += z * gamma_ln_pdf(mu, sd, obs[j / m]);
                }
            }
            -q / n as f64
        };
        let spec =
            ObjectiveSpec::from_constrained(objective, vec![Transform::Square; 2], &[c0, c1])?;
        let result = minimize(&spec, &inner)?;
        c0 = result.argmin[0];
        c1 = result.argmin[1];
    }

    Ok(Fit {
        model: BmaGammaModel {
            grouping: grouping.clone(),
            b0,
            b1,
            c0,
            c1,
            weights,
        },
        diagnostics,
    })
}
