//! Rolling calibration experiments, training-length sweeps and method comparisons.

mod io;

pub use io::{
    read_case_column, write_argmin, write_cases, write_histogram, write_scores, ScoreRow,
};

use std::collections::BTreeSet;
use std::fmt;
use std::ops::RangeInclusive;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use chrono::NaiveDate;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::bma::{
    fit_bias_regression, fit_bma_gamma, fit_bma_normal_crps, fit_bma_normal_em,
    fit_bma_truncnormal_ml, BiasMode, EmOptions, FitDiagnostics,
};
use crate::data::{Dataset, VariableKind};
use crate::emos::{fit_emos, EmosFamily};
use crate::error::{Error, Result};
use crate::grouping::{make_grouping, GroupingKind};
use crate::model_io::FittedModel;
use crate::optimize::Options;
use crate::verification::{
    ks_uniform_test, pit_histogram, pit_value_randomized, rank_histogram, verification_rank,
    CaseScore, Histogram, ScoreReport,
};
use crate::window::{earliest_start, rolling_windows_between, TrainingSet};

/// Nominal coverage of the central prediction interval: that of the range of an 11-member ensemble.
pub const DEFAULT_LEVEL: f64 = 10.0 / 12.0;

/// Largest tolerated fraction of evaluation cases lost to fit or prediction failures.
pub const MAX_SKIP_FRACTION: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BmaEstimation {
    MaxLikelihood,
    MinCrps,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Raw,
    BmaNormal {
        bias: BiasMode,
        estimation: BmaEstimation,
    },
    BmaGamma,
    BmaTruncNormal,
    Emos(EmosFamily),
}

impl Method {
    pub fn requires_nonnegative(&self) -> bool {
        matches!(
            self,
            Method::BmaGamma | Method::BmaTruncNormal | Method::Emos(EmosFamily::TruncNormal)
        )
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Raw => f.write_str("raw"),
            Method::BmaNormal { bias, estimation } => {
                let est = match estimation {
                    BmaEstimation::MaxLikelihood => "ml",
                    BmaEstimation::MinCrps => "crps",
                };
                write!(f, "bma_normal:{bias}:{est}")
            }
            Method::BmaGamma => f.write_str("bma_gamma"),
            Method::BmaTruncNormal => f.write_str("bma_truncnormal"),
            Method::Emos(family) => write!(f, "emos_{family}"),
        }
    }
}

/// Accepts the [`Display`](fmt::Display) form; `bma_normal` alone means linear
/// bias with maximum likelihood.
impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Setup(format!("unknown method {s:?}"));
        let mut parts = s.split(':');
        let head = parts.next().unwrap_or_default();
        let method = match head {
            "raw" => Method::Raw,
            "bma_gamma" => Method::BmaGamma,
            "bma_truncnormal" => Method::BmaTruncNormal,
            "emos_normal" => Method::Emos(EmosFamily::Normal),
            "emos_truncnormal" => Method::Emos(EmosFamily::TruncNormal),
            "bma_normal" => {
                let bias = match parts.next() {
                    Some(b) => b.parse().map_err(|_| bad())?,
                    None => BiasMode::Linear,
                };
                let estimation = match parts.next() {
                    None | Some("ml") => BmaEstimation::MaxLikelihood,
                    Some("crps") => BmaEstimation::MinCrps,
                    Some(_) => return Err(bad()),
                };
                Method::BmaNormal { bias, estimation }
            }
            _ => return Err(bad()),
        };
        match parts.next() {
            Some(_) => Err(bad()),
            None => Ok(method),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub grouping: GroupingKind,
    pub method: Method,
    pub training_length: usize,
    /// First target date; the earliest date with a full window when `None`.
    pub start: Option<NaiveDate>,
    /// Last target date, inclusive.
    pub end: Option<NaiveDate>,
    pub level: f64,
    pub seed: u64,
    pub pit_bins: usize,
}

impl ExperimentSpec {
    pub fn new(method: Method, training_length: usize) -> Self {
        ExperimentSpec {
            grouping: GroupingKind::TwoGroup,
            method,
            training_length,
            start: None,
            end: None,
            level: DEFAULT_LEVEL,
            seed: 0,
            pit_bins: crate::verification::DEFAULT_PIT_BINS,
        }
    }

    pub fn validate(&self, kind: VariableKind) -> Result<()> {
        if self.method.requires_nonnegative() && kind != VariableKind::Nonnegative {
            return Err(Error::Setup(format!(
                "method {} needs a nonnegative variable, dataset is {kind}",
                self.method
            )));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::Setup(format!(
                "interval level {} outside (0, 1)",
                self.level
            )));
        }
        if self.training_length == 0 {
            return Err(Error::Setup("training length must be at least 1".into()));
        }
        if self.pit_bins == 0 {
            return Err(Error::Setup("PIT histogram needs at least one bin".into()));
        }
        if let (Some(s), Some(e)) = (self.start, self.end) {
            if e < s {
                return Err(Error::Setup(format!("end {e} precedes start {s}")));
            }
        }
        Ok(())
    }
}

/// Scores of one verified forecast.
#[derive(Debug, Clone, PartialEq)]
pub struct CaseOutput {
    pub date: NaiveDate,
    pub station: String,
    pub score: CaseScore,
    /// `None` for the raw ensemble.
    pub pit: Option<f64>,
    /// Rank of the observation within the raw ensemble.
    pub rank: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SkippedCase {
    pub date: NaiveDate,
    pub station: String,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub method: Method,
    pub training_length: usize,
    pub members: usize,
    pub report: ScoreReport,
    pub cases: Vec<CaseOutput>,
    pub models: Vec<(NaiveDate, FittedModel)>,
    pub skipped: Vec<SkippedCase>,
    /// KS statistic and p-value of the PIT values; `None` for the raw ensemble.
    pub ks: Option<(f64, f64)>,
    /// Cases whose PIT fell on a support boundary and was randomized.
    pub pit_boundary_cases: usize,
    pub pit_bins: usize,
}

impl ExperimentOutput {
    pub fn evaluation_dates(&self) -> usize {
        self.cases
            .iter()
            .map(|c| c.date)
            .collect::<BTreeSet<_>>()
            .len()
    }

    fn case_keys(&self) -> BTreeSet<(NaiveDate, &str)> {
        self.cases
            .iter()
            .map(|c| (c.date, c.station.as_str()))
            .collect()
    }

    pub fn rank_histogram(&self) -> Result<Histogram> {
        let ranks: Vec<usize> = self.cases.iter().map(|c| c.rank).collect();
        rank_histogram(&ranks, self.members)
    }

    /// `None` when the method has no predictive CDF.
    pub fn pit_histogram(&self) -> Result<Option<Histogram>> {
        let pits: Vec<f64> = self.cases.iter().filter_map(|c| c.pit).collect();
        if pits.is_empty() {
            return Ok(None);
        }
        pit_histogram(&pits, self.pit_bins).map(Some)
    }

    pub fn score_row(&self) -> ScoreRow {
        ScoreRow {
            method: self.method.to_string(),
            length: self.training_length,
            evaluation_dates: self.evaluation_dates(),
            report: self.report,
            ks: self.ks,
            skipped: self.skipped.len(),
            pit_boundary: self.pit_boundary_cases,
        }
    }
}

fn fit_model(method: Method, set: &TrainingSet) -> Result<(FittedModel, FitDiagnostics)> {
    let em = EmOptions::default();
    Ok(match method {
        Method::Raw => unreachable!("the raw ensemble is never fitted"),
        Method::BmaNormal { bias, estimation } => {
            let mut diag = FitDiagnostics::default();
            let correction = fit_bias_regression(set, bias, &mut diag)?;
            let fit = match estimation {
                BmaEstimation::MaxLikelihood => fit_bma_normal_em(set, &correction, None, &em)?,
                BmaEstimation::MinCrps => {
                    fit_bma_normal_crps(set, &correction, None, &Options::default())?
                }
            };
            let mut d = fit.diagnostics;
            d.flags.extend(diag.flags);
            (FittedModel::BmaNormal(fit.model), d)
        }
        Method::BmaGamma => {
            let fit = fit_bma_gamma(set, None, &em)?;
            (FittedModel::BmaGamma(fit.model), fit.diagnostics)
        }
        Method::BmaTruncNormal => {
            let fit = fit_bma_truncnormal_ml(set, None, &em)?;
            (FittedModel::BmaTruncNormal(fit.model), fit.diagnostics)
        }
        Method::Emos(family) => {
            let fit = fit_emos(set, family, &Options::default())?;
            (FittedModel::Emos(fit.model), fit.diagnostics)
        }
    })
}

/// Fits one model per target date on the preceding window and scores every
/// station's forecast for that date.
pub fn run_experiment(ds: &Dataset, spec: &ExperimentSpec) -> Result<ExperimentOutput> {
    spec.validate(ds.kind())?;
    let grouping = make_grouping(&spec.grouping, ds.member_count())?;
    let start = match spec.start {
        Some(s) => s,
        None => earliest_start(ds, spec.training_length)?,
    };
    let steps = rolling_windows_between(ds, spec.training_length, start, spec.end)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let mut cases = Vec::new();
    let mut scores = Vec::new();
    let mut pits = Vec::new();
    let mut models = Vec::new();
    let mut skipped = Vec::new();
    let mut pit_boundary_cases = 0;

    for step in &steps {
        let target = step.window.target_date;
        assert!(
            step.window.dates.iter().all(|d| *d < target),
            "training window for {target} reaches the target date"
        );
        let targets: Vec<_> = step
            .targets
            .iter()
            .filter_map(|c| c.observation.map(|y| (c, y)))
            .collect();
        if targets.is_empty() {
            continue;
        }
        let model = match spec.method {
            Method::Raw => None,
            method => {
                let fitted = TrainingSet::from_window(&step.window, &grouping)
                    .and_then(|set| fit_model(method, &set));
                match fitted {
                    Ok((model, diag)) => {
                        if !diag.flags.is_empty() {
                            log::debug!("{target}: {}", diag.flags.join("; "));
                        }
                        models.push((target, model.clone()));
                        Some(model)
                    }
                    Err(e) => {
                        log::warn!("{target}: fit failed, skipping its cases: {e}");
                        skipped.extend(targets.iter().map(|(c, _)| SkippedCase {
                            date: target,
                            station: c.station.clone(),
                            reason: e.to_string(),
                        }));
                        continue;
                    }
                }
            }
        };
        for (case, obs) in targets {
            let rank = verification_rank(&case.members, obs, &mut rng);
            let scored = match &model {
                None => Ok((CaseScore::of_ensemble(&case.members, obs), None)),
                Some(model) => model.predict(&case.members).and_then(|dist| {
                    let score = CaseScore::of_dist(&dist, obs, spec.level)?;
                    let (pit, boundary) = pit_value_randomized(&dist, obs, &mut rng);
                    pit_boundary_cases += boundary as usize;
                    Ok((score, Some(pit)))
                }),
            };
            match scored {
                Ok((score, pit)) => {
                    scores.push(score);
                    pits.extend(pit);
                    cases.push(CaseOutput {
                        date: target,
                        station: case.station.clone(),
                        score,
                        pit,
                        rank,
                    });
                }
                Err(e) => {
                    log::warn!("{target} {}: prediction failed: {e}", case.station);
                    skipped.push(SkippedCase {
                        date: target,
                        station: case.station.clone(),
                        reason: e.to_string(),
                    });
                }
            }
        }
    }

    let total = cases.len() + skipped.len();
    if total == 0 {
        return Err(Error::Experiment(
            "no evaluation case has an observation".into(),
        ));
    }
    if skipped.len() as f64 > MAX_SKIP_FRACTION * total as f64 {
        return Err(Error::Experiment(format!(
            "{} of {total} evaluation cases skipped; first failure: {}",
            skipped.len(),
            skipped[0].reason
        )));
    }
    let report = ScoreReport::from_cases(&scores)?;
    let ks = if pits.is_empty() {
        None
    } else {
        Some(ks_uniform_test(&pits)?)
    };
    Ok(ExperimentOutput {
        method: spec.method,
        training_length: spec.training_length,
        members: ds.member_count(),
        report,
        cases,
        models,
        skipped,
        ks,
        pit_boundary_cases,
        pit_bins: spec.pit_bins,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Optimum {
    pub length: usize,
    pub value: f64,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub method: Method,
    pub start: NaiveDate,
    pub rows: Vec<ScoreRow>,
    /// Minimizers of mean CRPS, MAE of the median and RMSE of the mean.
    pub best_crps: Optimum,
    pub best_mae: Optimum,
    pub best_rmse: Optimum,
}

impl SweepResult {
    pub fn row(&self, length: usize) -> Option<&ScoreRow> {
        self.rows.iter().find(|r| r.length == length)
    }
}

/// First minimizer of `score` over rows sorted by length, so ties go to the shorter length.
fn argmin(rows: &[ScoreRow], score: impl Fn(&ScoreReport) -> f64) -> Optimum {
    let mut best = Optimum {
        length: rows[0].length,
        value: score(&rows[0].report),
    };
    for r in &rows[1..] {
        let v = score(&r.report);
        if v < best.value {
            best = Optimum {
                length: r.length,
                value: v,
            };
        }
    }
    best
}

fn check_comparable(outputs: &[ExperimentOutput]) -> Result<()> {
    let Some(first) = outputs.first() else {
        return Ok(());
    };
    let keys = first.case_keys();
    for o in &outputs[1..] {
        if o.case_keys() != keys {
            return Err(Error::Comparability(format!(
                "{} (length {}) and {} (length {}) evaluate different cases",
                first.method, first.training_length, o.method, o.training_length
            )));
        }
    }
    Ok(())
}

/// Runs `jobs` independent experiments on up to `threads` threads; the result
/// order follows `specs` whatever the scheduling.
fn run_all(
    ds: &Dataset,
    specs: &[ExperimentSpec],
    threads: usize,
) -> Result<Vec<ExperimentOutput>> {
    let threads = threads.clamp(1, specs.len().max(1));
    if threads == 1 {
        return specs.iter().map(|s| run_experiment(ds, s)).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<ExperimentOutput>>>> =
        Mutex::new((0..specs.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..threads {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= specs.len() {
                    break;
                }
                let out = run_experiment(ds, &specs[i]);
                slots.lock().expect("no worker panicked")[i] = Some(out);
            });
        }
    });
    slots
        .into_inner()
        .expect("no worker panicked")
        .into_iter()
        .map(|o| o.expect("every cell ran"))
        .collect()
}

/// Runs `spec` once per training length with a common evaluation period.
///
/// Without an explicit start the evaluation begins at the first date with a
/// full window of the longest length.
pub fn sweep_training_length(
    ds: &Dataset,
    spec: &ExperimentSpec,
    lengths: RangeInclusive<usize>,
    jobs: usize,
) -> Result<SweepResult> {
    let (lo, hi) = (*lengths.start(), *lengths.end());
    if lo == 0 || hi < lo {
        return Err(Error::Setup(format!("invalid length range [{lo}, {hi}]")));
    }
    let start = match spec.start {
        Some(s) => s,
        None => earliest_start(ds, hi)?,
    };
    let specs: Vec<ExperimentSpec> = lengths
        .map(|n| ExperimentSpec {
            training_length: n,
            start: Some(start),
            ..spec.clone()
        })
        .collect();
    let outputs = run_all(ds, &specs, jobs)?;
    check_comparable(&outputs)?;
    let rows: Vec<ScoreRow> = outputs.iter().map(ExperimentOutput::score_row).collect();
    Ok(SweepResult {
        method: spec.method,
        start,
        best_crps: argmin(&rows, |r| r.mean_crps),
        best_mae: argmin(&rows, |r| r.mae_median),
        best_rmse: argmin(&rows, |r| r.rmse_mean),
        rows,
    })
}

/// Runs every spec and checks they verified exactly the same cases.
pub fn compare_methods(
    ds: &Dataset,
    specs: &[ExperimentSpec],
    jobs: usize,
) -> Result<Vec<ExperimentOutput>> {
    if specs.is_empty() {
        return Err(Error::Setup("nothing to compare".into()));
    }
    let outputs = run_all(ds, specs, jobs)?;
    check_comparable(&outputs)?;
    Ok(outputs)
}
