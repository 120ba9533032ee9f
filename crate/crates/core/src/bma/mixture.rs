use crate::dist::normal::abs_moment;
use crate::dist::{crps_quadrature, GammaMeanSd, Normal, PredictiveDist, TruncNormal};
use crate::error::{Error, Result};

const SUPPORT_TAIL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Component {
    Normal(Normal),
    TruncNormal(TruncNormal),
    Gamma(GammaMeanSd),
}

impl Component {
    fn as_dist(&self) -> &dyn PredictiveDist {
        match self {
            Component::Normal(d) => d,
            Component::TruncNormal(d) => d,
            Component::Gamma(d) => d,
        }
    }
}

/// Finite mixture `sum_i w_i F_i` of parametric components.
#[derive(Debug, Clone, PartialEq)]
pub struct Mixture {
    components: Vec<(f64, Component)>,
}

impl Mixture {
    /// Weights must be nonnegative and sum to one within 1e-12.
    pub fn new(components: Vec<(f64, Component)>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::Domain("mixture without components".into()));
        }
        if components
            .iter()
            .any(|(w, _)| !(*w >= 0.0) || !w.is_finite())
        {
            return Err(Error::Domain("mixture weights must be nonnegative".into()));
        }
        let total: f64 = components.iter().map(|(w, _)| w).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Domain(format!("mixture weights sum to {total}")));
        }
        Ok(Mixture { components })
    }

    pub fn components(&self) -> &[(f64, Component)] {
        &self.components
    }

    fn bracket(&self, p: f64) -> Result<(f64, f64)> {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for (_, c) in &self.components {
            let q = c.as_dist().quantile(p)?;
            lo = lo.min(q);
            hi = hi.max(q);
        }
        Ok((lo, hi))
    }
}

impl PredictiveDist for Mixture {
    fn pdf(&self, x: f64) -> Result<f64> {
        self.components
            .iter()
            .map(|(w, c)| Ok(w * c.as_dist().pdf(x)?))
            .sum()
    }

    fn cdf(&self, x: f64) -> f64 {
        self.components
            .iter()
            .map(|(w, c)| w * c.as_dist().cdf(x))
            .sum::<f64>()
            .clamp(0.0, 1.0)
    }

    /// Bisection on the CDF inside the range spanned by the component quantiles.
    fn quantile(&self, p: f64) -> Result<f64> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::Domain(format!("probability {p} outside (0, 1)")));
        }
        let (mut lo, mut hi) = self.bracket(p)?;
        if lo == hi {
            return Ok(lo);
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi || hi - lo <= 1e-13 * mid.abs().max(1.0) {
                break;
            }
            if self.cdf(mid) < p {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    fn mean(&self) -> f64 {
        self.components
            .iter()
            .map(|(w, c)| w * c.as_dist().mean())
            .sum()
    }

    /// Integrated CRPS; every component quantile bounds the mixture's, so the
    /// extreme component tail quantiles delimit the integration range.
    fn crps(&self, x: f64) -> Result<f64> {
        let (lower, _) = self.bracket(SUPPORT_TAIL)?;
        let (_, upper) = self.bracket(1.0 - SUPPORT_TAIL)?;
        let breaks: Vec<f64> = self.lower_bound().into_iter().collect();
        let lower = self.lower_bound().map_or(lower, |b| lower.max(b));
        crps_quadrature(|y| self.cdf(y), x, lower, upper, &breaks)
    }

    fn lower_bound(&self) -> Option<f64> {
        self.components
            .iter()
            .map(|(_, c)| c.as_dist().lower_bound())
            .try_fold(f64::INFINITY, |acc, b| b.map(|b| acc.min(b)))
    }
}

/// Closed-form CRPS of a normal mixture with common scale `sigma`:
/// `sum_i w_i E|X_i - x| - 1/2 sum_ij w_i w_j E|X_i - X_j|`.
pub fn crps_normal_mixture(weights: &[f64], means: &[f64], sigma: f64, x: f64) -> f64 {
    let pair_sd = std::f64::consts::SQRT_2 * sigma;
    let mut first = 0.0;
    let mut second = 0.0;
    for (i, (&wi, &mi)) in weights.iter().zip(means).enumerate() {
        first += wi * abs_moment(mi - x, sigma);
        second += wi * wi * abs_moment(0.0, pair_sd);
        for (&wj, &mj) in weights[i + 1..].iter().zip(&means[i + 1..]) {
            second += 2.0 * wi * wj * abs_moment(mi - mj, pair_sd);
        }
    }
    first - 0.5 * second
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::crps_of;

    fn normal(mu: f64, sigma: f64) -> Component {
        Component::Normal(Normal::new(mu, sigma).unwrap())
    }

    #[test]
    fn one_component_delegates() {
        let n = Normal::new(1.0, 2.0).unwrap();
        let m = Mixture::new(vec![(1.0, Component::Normal(n))]).unwrap();
        for &x in &[-3.0, 0.0, 1.0, 4.5] {
            assert_eq!(m.cdf(x), n.cdf(x));
            assert!((m.crps(x).unwrap() - n.crps(x).unwrap()).abs() < 1e-9);
        }
        assert!((m.quantile(0.3).unwrap() - n.quantile(0.3).unwrap()).abs() < 1e-10);
    }

    #[test]
    fn symmetric_mixture_median_is_zero() {
        let m = Mixture::new(vec![(0.5, normal(-1.0, 1.0)), (0.5, normal(1.0, 1.0))]).unwrap();
        assert!(m.quantile(0.5).unwrap().abs() < 1e-12);
        assert_eq!(m.mean(), 0.0);
    }

    #[test]
    fn cdf_at_center_of_symmetric_pair() {
        let m = Mixture::new(vec![(0.5, normal(0.0, 1.0)), (0.5, normal(4.0, 1.0))]).unwrap();
        assert!((m.cdf(2.0) - 0.5).abs() < 1e-10);
    }

    #[test]
    fn quantile_inverts_cdf() {
        let m = Mixture::new(vec![
            (0.2, normal(-2.0, 0.5)),
            (0.5, normal(1.0, 1.0)),
            (
                0.3,
                Component::TruncNormal(TruncNormal::new(3.0, 2.0).unwrap()),
            ),
        ])
        .unwrap();
        for i in 1..100 {
            let p = i as f64 / 100.0;
            assert!((m.cdf(m.quantile(p).unwrap()) - p).abs() < 1e-10);
        }
    }

    #[test]
    fn weights_must_sum_to_one() {
        assert!(Mixture::new(vec![(0.4, normal(0.0, 1.0)), (0.4, normal(0.0, 1.0))]).is_err());
        assert!(Mixture::new(vec![]).is_err());
    }

    #[test]
    fn pdf_integrates_to_one() {
        let m = Mixture::new(vec![
            (0.3, Component::Gamma(GammaMeanSd::new(3.0, 1.0).unwrap())),
            (0.7, Component::Gamma(GammaMeanSd::new(6.0, 2.5).unwrap())),
        ])
        .unwrap();
        let total = crate::dist::integrate(|x| m.pdf(x).unwrap(), 0.0, 80.0, 1e-11).unwrap();
        assert!((total - 1.0).abs() < 1e-8);
        assert_eq!(m.lower_bound(), Some(0.0));
        assert_eq!(m.cdf(-1e-9), 0.0);
    }

    #[test]
    fn closed_form_normal_mixture_matches_quadrature() {
        let weights = [0.3, 0.07, 0.63];
        let means = [1.0, -0.5, 2.5];
        let sigma = 0.8;
        let m = Mixture::new(
            weights
                .iter()
                .zip(&means)
                .map(|(&w, &mu)| (w, normal(mu, sigma)))
                .collect(),
        )
        .unwrap();
        for &x in &[-4.0, 0.0, 1.3, 2.5, 7.0] {
            let closed = crps_normal_mixture(&weights, &means, sigma, x);
            let quad = crps_of(&m, x).unwrap();
            assert!((closed - quad).abs() < 1e-9, "x={x}: {closed} vs {quad}");
        }
    }
}
