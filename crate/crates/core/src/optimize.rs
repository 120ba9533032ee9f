//! Derivative-free minimization (Nelder-Mead) with per-coordinate constraint transforms.
//!
//! The simplex lives in an unconstrained space; each coordinate is mapped to the
//! constrained parameter by its [`Transform`] before the objective sees it.

use crate::error::{Error, Result};

/// Map from an unconstrained coordinate `u` to the parameter handed to the objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Transform {
    Identity,
    /// `u^2`, keeps the parameter nonnegative.
    Square,
    /// `1 / (1 + e^-u)`, keeps the parameter in (0, 1).
    Logistic,
}

impl Transform {
    pub fn to_constrained(self, u: f64) -> f64 {
        match self {
            Transform::Identity => u,
            Transform::Square => u * u,
            Transform::Logistic => 1.0 / (1.0 + (-u).exp()),
        }
    }

    pub fn to_unconstrained(self, c: f64) -> Result<f64> {
        match self {
            Transform::Identity => Ok(c),
            Transform::Square if c >= 0.0 => Ok(c.sqrt()),
            Transform::Logistic if c > 0.0 && c < 1.0 => Ok((c / (1.0 - c)).ln()),
            t => Err(Error::Setup(format!("{c} is outside the range of {t:?}"))),
        }
    }
}

pub struct ObjectiveSpec<F> {
    objective: F,
    transforms: Vec<Transform>,
    initial: Vec<f64>,
}

impl<F: Fn(&[f64]) -> f64> ObjectiveSpec<F> {
    /// `initial` is given in the unconstrained space.
    pub fn new(objective: F, transforms: Vec<Transform>, initial: Vec<f64>) -> Result<Self> {
        if transforms.is_empty() {
            return Err(Error::Setup("dimension must be at least 1".into()));
        }
        if transforms.len() != initial.len() {
            return Err(Error::Setup(format!(
                "{} transforms for a {}-dimensional start",
                transforms.len(),
                initial.len()
            )));
        }
        if initial.iter().any(|u| !u.is_finite()) {
            return Err(Error::Setup("initial point is not finite".into()));
        }
        Ok(ObjectiveSpec {
            objective,
            transforms,
            initial,
        })
    }

    /// Like [`ObjectiveSpec::new`] but with the start given as parameter values.
    pub fn from_constrained(
        objective: F,
        transforms: Vec<Transform>,
        initial: &[f64],
    ) -> Result<Self> {
        let unconstrained = transforms
            .iter()
            .zip(initial)
            .map(|(t, &c)| t.to_unconstrained(c))
            .collect::<Result<Vec<_>>>()?;
        Self::new(objective, transforms, unconstrained)
    }

    pub fn dimension(&self) -> usize {
        self.transforms.len()
    }

    pub fn constrained(&self, u: &[f64]) -> Vec<f64> {
        self.transforms
            .iter()
            .zip(u)
            .map(|(t, &v)| t.to_constrained(v))
            .collect()
    }

    fn eval(&self, u: &[f64]) -> f64 {
        let v = (self.objective)(&self.constrained(u));
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Options {
    /// Bound on both the simplex diameter and the spread of vertex values.
    pub tol: f64,
    /// Iteration cap per start.
    pub max_iter: usize,
    /// Also run from a start perturbed by +10% per coordinate and keep the better result.
    pub multistart: bool,
}

impl Default for Options {
    fn default() -> Self {
        Options {
            tol: 1e-8,
            max_iter: 10_000,
            multistart: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct OptimResult {
    /// Minimizer in the constrained (parameter) space.
    pub argmin: Vec<f64>,
    pub argmin_unconstrained: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Best value after each iteration of the winning start.
    pub trace: Vec<f64>,
}

pub fn minimize<F: Fn(&[f64]) -> f64>(
    spec: &ObjectiveSpec<F>,
    opts: &Options,
) -> Result<OptimResult> {
    if !(opts.tol > 0.0) || opts.max_iter == 0 {
        return Err(Error::Setup("need tol > 0 and max_iter >= 1".into()));
    }
    let f0 = spec.eval(&spec.initial);
    if !f0.is_finite() {
        return Err(Error::Setup(
            "objective is not finite at the initial point".into(),
        ));
    }
    let mut best = nelder_mead(spec, &spec.initial, f0, opts);
    if opts.multistart {
        let perturbed: Vec<f64> = spec
            .initial
            .iter()
            .map(|u| u + 0.1 * u.abs().max(1.0))
            .collect();
        let fp = spec.eval(&perturbed);
        if fp.is_finite() {
            let other = nelder_mead(spec, &perturbed, fp, opts);
            if other.value < best.value {
                best = other;
            }
        }
    }
    Ok(best)
}

fn nelder_mead<F: Fn(&[f64]) -> f64>(
    spec: &ObjectiveSpec<F>,
    start: &[f64],
    f_start: f64,
    opts: &Options,
) -> OptimResult {
    let n = start.len();
    let mut simplex = Vec::with_capacity(n + 1);
    let mut values = Vec::with_capacity(n + 1);
    simplex.push(start.to_vec());
    values.push(f_start);
    for i in 0..n {
        let mut v = start.to_vec();
        v[i] += 0.1 * start[i].abs().max(1.0);
        values.push(spec.eval(&v));
        simplex.push(v);
    }

    let mut order: Vec<usize> = (0..=n).collect();
    let mut trace = Vec::new();
    let mut iterations = 0;
    let mut converged = false;

    while iterations < opts.max_iter {
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        let (ib, iw, isw) = (order[0], order[n], order[n - 1]);

        let spread = values[iw] - values[ib];
        let diameter = simplex
            .iter()
            .flat_map(|x| x.iter().zip(&simplex[ib]).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        if diameter < opts.tol && spread < opts.tol {
            converged = true;
            break;
        }
        iterations += 1;

        let mut centroid = vec![0.0; n];
        for &i in &order[..n] {
            for (c, x) in centroid.iter_mut().zip(&simplex[i]) {
                *c += x;
            }
        }
        centroid.iter_mut().for_each(|c| *c /= n as f64);

        let along = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&simplex[iw])
                .map(|(c, w)| c + t * (c - w))
                .collect()
        };

        let xr = along(1.0);
        let fr = spec.eval(&xr);
        if fr < values[ib] {
            let xe = along(2.0);
            let fe = spec.eval(&xe);
            if fe < fr {
                simplex[iw] = xe;
                values[iw] = fe;
            } else {
                simplex[iw] = xr;
                values[iw] = fr;
            }
        } else if fr < values[isw] {
            simplex[iw] = xr;
            values[iw] = fr;
        } else {
            let (xc, fc, accept) = if fr < values[iw] {
                let xc = along(0.5);
                let fc = spec.eval(&xc);
                (xc, fc, fc <= fr)
            } else {
                let xc = along(-0.5);
                let fc = spec.eval(&xc);
                (xc, fc, fc < values[iw])
            };
            if accept {
                simplex[iw] = xc;
                values[iw] = fc;
            } else {
                let xb = simplex[ib].clone();
                for &i in &order[1..] {
                    for (x, b) in simplex[i].iter_mut().zip(&xb) {
                        *x = b + 0.5 * (*x - b);
                    }
                    values[i] = spec.eval(&simplex[i]);
                }
            }
        }
        trace.push(values.iter().copied().fold(f64::INFINITY, f64::min));
    }

    let ib = (0..=n)
        .min_by(|&a, &b| values[a].total_cmp(&values[b]))
        .expect("simplex has n + 1 >= 2 vertices");
    OptimResult {
        argmin: spec.constrained(&simplex[ib]),
        argmin_unconstrained: simplex[ib].clone(),
        value: values[ib],
        iterations,
        converged,
        trace,
    }
}
