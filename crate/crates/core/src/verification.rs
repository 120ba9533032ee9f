//! Scores and calibration diagnostics.

use rand::Rng;
use statrs::function::gamma::gamma_ur;

use crate::dist::PredictiveDist;
use crate::error::{Error, Result};

/// CRPS of the empirical distribution of `members` at `obs`:
/// `mean |x_i - y| - 1/(2 M^2) sum_ij |x_i - x_j|`.
///
/// The pair sum is evaluated from sorted members in `O(M log M)`.
pub fn crps_ensemble(members: &[f64], obs: f64) -> f64 {
    let m = members.len() as f64;
    let mut sorted = members.to_vec();
    sorted.sort_by(f64::total_cmp);
    let abs_err: f64 = sorted.iter().map(|x| (x - obs).abs()).sum::<f64>() / m;
    // sum_{i<j} (x_j - x_i) with sorted x equals sum_i (2i - M + 1) x_i.
    let pairs: f64 = sorted
        .iter()
        .enumerate()
        .map(|(i, x)| (2.0 * i as f64 - m + 1.0) * x)
        .sum();
    abs_err - pairs / (m * m)
}

/// Rank of `obs` among `members`, in `1..=M+1`; ties with members are broken
/// uniformly at random.
pub fn verification_rank<R: Rng + ?Sized>(members: &[f64], obs: f64, rng: &mut R) -> usize {
    let below = members.iter().filter(|&&x| x < obs).count();
    let ties = members.iter().filter(|&&x| x == obs).count();
    1 + below
        + if ties > 0 {
            rng.random_range(0..=ties)
        } else {
            0
        }
}

pub fn pit_value<D: PredictiveDist + ?Sized>(dist: &D, obs: f64) -> f64 {
    dist.cdf(obs)
}

/// PIT with the boundary rule: an observation at or below a finite lower
/// support bound that carries probability mass gets a uniform draw on
/// `[0, cdf(bound)]`. The flag reports whether the rule fired.
pub fn pit_value_randomized<D, R>(dist: &D, obs: f64, rng: &mut R) -> (f64, bool)
where
    D: PredictiveDist + ?Sized,
    R: Rng + ?Sized,
{
    if let Some(bound) = dist.lower_bound() {
        if obs <= bound {
            let mass = dist.cdf(bound);
            return (rng.random::<f64>() * mass, true);
        }
    }
    (dist.cdf(obs), false)
}

/// Kolmogorov-Smirnov test of `pits` against the uniform distribution.
/// Returns `(D, p)` with the asymptotic p-value.
pub fn ks_uniform_test(pits: &[f64]) -> Result<(f64, f64)> {
    if pits.is_empty() {
        return Err(Error::Domain("KS test needs at least one value".into()));
    }
    if pits.iter().any(|u| !(0.0..=1.0).contains(u)) {
        return Err(Error::Domain("PIT values must lie in [0, 1]".into()));
    }
    let mut u = pits.to_vec();
    u.sort_by(f64::total_cmp);
    let n = u.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in u.iter().enumerate() {
        let plus = (i + 1) as f64 / n - x;
        let minus = x - i as f64 / n;
        d = d.max(plus).max(minus);
    }
    Ok((d, kolmogorov_sf(n.sqrt() * d)))
}

/// `P(K > lambda)` for the Kolmogorov distribution.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 1.0 {
        // The alternating series converges slowly here; use the Jacobi dual form
        // P(K <= l) = sqrt(2 pi)/l * sum exp(-(2j-1)^2 pi^2 / (8 l^2)).
        let c = -std::f64::consts::PI.powi(2) / (8.0 * lambda * lambda);
        let mut cdf = 0.0;
        for j in 1..100 {
            let k = (2 * j - 1) as f64;
            let term = (c * k * k).exp();
            cdf += term;
            if term < 1e-16 {
                break;
            }
        }
        let cdf = cdf * (2.0 * std::f64::consts::PI).sqrt() / lambda;
        return (1.0 - cdf).clamp(0.0, 1.0);
    }
    let mut sum = 0.0;
    for j in 1..1000 {
        let jf = j as f64;
        let term = (-2.0 * jf * jf * lambda * lambda).exp();
        sum += if j % 2 == 1 { term } else { -term };
        if term < 1e-12 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Central prediction interval with nominal coverage `level`.
pub fn central_interval<D: PredictiveDist + ?Sized>(dist: &D, level: f64) -> Result<(f64, f64)> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Domain(format!(
            "interval level {level} outside (0, 1)"
        )));
    }
    let alpha = 1.0 - level;
    Ok((
        dist.quantile(alpha / 2.0)?,
        dist.quantile(1.0 - alpha / 2.0)?,
    ))
}

/// Sample median with the midpoint convention for even counts.
pub fn ensemble_median(members: &[f64]) -> f64 {
    let mut s = members.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

/// Summed in sorted order, so any permutation of `members` gives the same bits.
pub fn ensemble_mean(members: &[f64]) -> f64 {
    let mut s = members.to_vec();
    s.sort_by(f64::total_cmp);
    s.iter().sum::<f64>() / s.len() as f64
}

/// Everything a report needs to know about one verified forecast.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CaseScore {
    pub obs: f64,
    pub crps: f64,
    pub median: f64,
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
}

impl CaseScore {
    pub fn covered(&self) -> bool {
        self.lower <= self.obs && self.obs <= self.upper
    }

    /// Scores of a predictive law; `level` is the nominal interval coverage.
    pub fn of_dist<D: PredictiveDist + ?Sized>(dist: &D, obs: f64, level: f64) -> Result<Self> {
        let (lower, upper) = central_interval(dist, level)?;
        Ok(CaseScore {
            obs,
            crps: dist.crps(obs)?,
            median: dist.median(),
            mean: dist.mean(),
            lower,
            upper,
        })
    }

    /// Scores of the raw ensemble; its interval is the member range.
    pub fn of_ensemble(members: &[f64], obs: f64) -> Self {
        let (lower, upper) = members
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
                (lo.min(x), hi.max(x))
            });
        CaseScore {
            obs,
            crps: crps_ensemble(members, obs),
            median: ensemble_median(members),
            mean: ensemble_mean(members),
            lower,
            upper,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreReport {
    pub mean_crps: f64,
    pub mae_median: f64,
    pub mae_mean: f64,
    pub rmse_median: f64,
    pub rmse_mean: f64,
    pub avg_width: f64,
    /// Fraction of observations inside the central interval.
    pub coverage: f64,
    pub n_cases: usize,
}

impl ScoreReport {
    /// Aggregates in input order, so equal inputs give bit-identical reports.
    pub fn from_cases(cases: &[CaseScore]) -> Result<Self> {
        if cases.is_empty() {
            return Err(Error::Domain("score report over zero cases".into()));
        }
        let n = cases.len() as f64;
        let mut r = ScoreReport {
            mean_crps: 0.0,
            mae_median: 0.0,
            mae_mean: 0.0,
            rmse_median: 0.0,
            rmse_mean: 0.0,
            avg_width: 0.0,
            coverage: 0.0,
            n_cases: cases.len(),
        };
        let mut covered = 0usize;
        for c in cases {
            r.mean_crps += c.crps;
            r.mae_median += (c.median - c.obs).abs();
            r.mae_mean += (c.mean - c.obs).abs();
            r.rmse_median += (c.median - c.obs).powi(2);
            r.rmse_mean += (c.mean - c.obs).powi(2);
            r.avg_width += c.upper - c.lower;
            covered += c.covered() as usize;
        }
        r.mean_crps /= n;
        r.mae_median /= n;
        r.mae_mean /= n;
        r.rmse_median = (r.rmse_median / n).sqrt();
        r.rmse_mean = (r.rmse_mean / n).sqrt();
        r.avg_width /= n;
        r.coverage = covered as f64 / n;
        let values = [
            r.mean_crps,
            r.mae_median,
            r.mae_mean,
            r.rmse_median,
            r.rmse_mean,
            r.avg_width,
        ];
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("non-finite score in report".into()));
        }
        Ok(r)
    }
}

/// Report over predictive laws with externally supplied point forecasts.
pub fn score_report<D: PredictiveDist>(
    dists: &[D],
    medians: &[f64],
    means: &[f64],
    obs: &[f64],
    level: f64,
) -> Result<ScoreReport> {
    let n = dists.len();
    if medians.len() != n || means.len() != n || obs.len() != n {
        return Err(Error::Shape(format!(
            "score report inputs have lengths {n}, {}, {}, {}",
            medians.len(),
            means.len(),
            obs.len()
        )));
    }
    let cases = dists
        .iter()
        .enumerate()
        .map(|(i, d)| {
            let (lower, upper) = central_interval(d, level)?;
            Ok(CaseScore {
                obs: obs[i],
                crps: d.crps(obs[i])?,
                median: medians[i],
                mean: means[i],
                lower,
                upper,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    ScoreReport::from_cases(&cases)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Histogram {
    pub counts: Vec<u64>,
    pub total: u64,
}

impl Histogram {
    pub fn relative(&self) -> Vec<f64> {
        self.counts
            .iter()
            .map(|&c| c as f64 / self.total.max(1) as f64)
            .collect()
    }
}

/// `M + 1` bins; ranks are `1..=M+1`.
pub fn rank_histogram(ranks: &[usize], members: usize) -> Result<Histogram> {
    let mut counts = vec![0u64; members + 1];
    for &r in ranks {
        if r == 0 || r > members + 1 {
            return Err(Error::Domain(format!(
                "rank {r} outside 1..={}",
                members + 1
            )));
        }
        counts[r - 1] += 1;
    }
    Ok(Histogram {
        counts,
        total: ranks.len() as u64,
    })
}

pub const DEFAULT_PIT_BINS: usize = 11;

/// Equal-width bins on `[0, 1]`; a value of exactly 1 goes in the last bin.
pub fn pit_histogram(pits: &[f64], bins: usize) -> Result<Histogram> {
    if bins == 0 {
        return Err(Error::Domain("PIT histogram needs at least one bin".into()));
    }
    let mut counts = vec![0u64; bins];
    for &u in pits {
        if !(0.0..=1.0).contains(&u) {
            return Err(Error::Domain(format!("PIT value {u} outside [0, 1]")));
        }
        counts[((u * bins as f64) as usize).min(bins - 1)] += 1;
    }
    Ok(Histogram {
        counts,
        total: pits.len() as u64,
    })
}

/// Pearson chi-square test of equal bin probabilities. Returns `(statistic, p)`.
pub fn chi_square_uniform(hist: &Histogram) -> Result<(f64, f64)> {
    let k = hist.counts.len();
    if k < 2 || hist.total == 0 {
        return Err(Error::Domain(
            "chi-square test needs two bins and data".into(),
        ));
    }
    let expected = hist.total as f64 / k as f64;
    let stat: f64 = hist
        .counts
        .iter()
        .map(|&c| (c as f64 - expected).powi(2) / expected)
        .sum();
    let dof = (k - 1) as f64;
    let p = if stat > 0.0 {
        gamma_ur(dof / 2.0, stat / 2.0)
    } else {
        1.0
    };
    Ok((stat, p))
}
