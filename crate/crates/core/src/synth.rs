//! Synthetic ensemble datasets whose generating process is a known model.
//!
//! Members are drawn first; the observation is then drawn from the named
//! model's predictive law given those members, so that law is the exact
//! conditional distribution and its CRPS is an oracle for any fit.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use chrono::{Days, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::bma::{BiasCorrection, BiasMode, BmaGammaModel, BmaNormalModel, BmaTruncNormalModel};
use crate::data::{Dataset, ForecastCase, VariableKind};
use crate::dist::{Predictive, PredictiveDist};
use crate::emos::{EmosFamily, EmosModel};
use crate::error::{Error, Result};
use crate::grouping::{make_grouping, GroupingKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    BmaNormal,
    BmaGamma,
    BmaTruncNormal,
    EmosNormal,
    EmosTruncNormal,
    /// Members far less spread than the observation uncertainty.
    UnderdispersiveRaw,
}

impl Scenario {
    pub const ALL: [Scenario; 6] = [
        Scenario::BmaNormal,
        Scenario::BmaGamma,
        Scenario::BmaTruncNormal,
        Scenario::EmosNormal,
        Scenario::EmosTruncNormal,
        Scenario::UnderdispersiveRaw,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Scenario::BmaNormal => "bma_normal",
            Scenario::BmaGamma => "bma_gamma",
            Scenario::BmaTruncNormal => "bma_truncnormal",
            Scenario::EmosNormal => "emos_normal",
            Scenario::EmosTruncNormal => "emos_truncnormal",
            Scenario::UnderdispersiveRaw => "underdispersive_raw",
        }
    }

    pub fn kind(&self) -> VariableKind {
        match self {
            Scenario::BmaGamma | Scenario::BmaTruncNormal | Scenario::EmosTruncNormal => {
                VariableKind::Nonnegative
            }
            _ => VariableKind::RealLine,
        }
    }

    /// Tunable parameters and their defaults.
    pub fn defaults(&self) -> BTreeMap<&'static str, f64> {
        let pairs: &[(&str, f64)] = match self {
            Scenario::BmaNormal => &[
                ("w_control", 0.3),
                ("sigma", 1.0),
                ("bias_b0", 0.0),
                ("bias_b1", 1.0),
                ("member_sd", 3.0),
            ],
            Scenario::BmaGamma => &[
                ("w_control", 0.3),
                ("b0", 0.2),
                ("b1", 0.9),
                ("c0", 0.4),
                ("c1", 0.2),
                ("member_sd", 0.5),
            ],
            Scenario::BmaTruncNormal => &[
                ("w_control", 0.2),
                ("sigma", 0.8),
                ("beta0_control", 0.5),
                ("beta1_control", 0.9),
                ("beta0_rest", 0.3),
                ("beta1_rest", 0.95),
                ("member_sd", 1.5),
            ],
            Scenario::EmosNormal => &[("a0", 2.0), ("b0", 1.0), ("b1", 1.0)],
            Scenario::EmosTruncNormal => &[("a0", 0.5), ("b0", 0.5), ("b1", 1.0)],
            Scenario::UnderdispersiveRaw => &[("member_sd", 0.3), ("obs_sd", 1.0)],
        };
        let signal: [(&str, f64); 2] = match self.kind() {
            VariableKind::RealLine => [("signal_shift", 10.0), ("signal_scale", 5.0)],
            VariableKind::Nonnegative => [("signal_shift", 0.5), ("signal_scale", 2.0)],
        };
        pairs.iter().chain(&signal).copied().collect()
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scenario::ALL
            .into_iter()
            .find(|sc| sc.as_str() == s)
            .ok_or_else(|| Error::Setup(format!("unknown scenario {s:?}")))
    }
}

#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub scenario: Scenario,
    pub seed: u64,
    pub members: usize,
    pub stations: usize,
    /// Forecast dates, ascending.
    pub dates: Vec<NaiveDate>,
    /// Overrides of [`Scenario::defaults`].
    pub params: BTreeMap<String, f64>,
}

impl SynthConfig {
    /// `n_dates` consecutive days from 2012-04-01.
    pub fn new(scenario: Scenario, seed: u64, n_dates: usize, stations: usize) -> Self {
        let start = NaiveDate::from_ymd_opt(2012, 4, 1).expect("valid date");
        SynthConfig {
            scenario,
            seed,
            members: 11,
            stations,
            dates: (0..n_dates as u64).map(|d| start + Days::new(d)).collect(),
            params: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub dataset: Dataset,
    /// Generating law of each case, aligned with `dataset.cases()`.
    pub truths: Vec<Predictive>,
    /// Parameters actually used, defaults merged with overrides.
    pub params: BTreeMap<String, f64>,
    /// Mean CRPS of the generating law over all cases.
    pub mean_crps: f64,
}

impl SynthOutput {
    /// Mean CRPS of the generating law restricted to the cases `keep` accepts.
    pub fn mean_crps_where<F: Fn(&ForecastCase) -> bool>(&self, keep: F) -> Result<f64> {
        let mut total = 0.0;
        let mut n = 0usize;
        for (case, truth) in self.dataset.cases().iter().zip(&self.truths) {
            if let (true, Some(y)) = (keep(case), case.observation) {
                total += truth.crps(y)?;
                n += 1;
            }
        }
        if n == 0 {
            return Err(Error::Domain("no case selected".into()));
        }
        Ok(total / n as f64)
    }
}

/// The April 2012 to March 2013 verification year with six days removed.
pub fn reference_calendar() -> Vec<NaiveDate> {
    let missing = [
        (2012, 8, 15),
        (2012, 10, 3),
        (2012, 11, 20),
        (2012, 12, 25),
        (2013, 1, 17),
        (2013, 2, 28),
    ]
    .map(|(y, m, d)| NaiveDate::from_ymd_opt(y, m, d).expect("valid date"));
    NaiveDate::from_ymd_opt(2012, 4, 1)
        .expect("valid date")
        .iter_days()
        .take_while(|d| *d <= NaiveDate::from_ymd_opt(2013, 3, 31).expect("valid date"))
        .filter(|d| !missing.contains(d))
        .collect()
}

pub fn station_name(i: usize) -> String {
    format!("ST{:04}", i + 1)
}

pub fn generate(cfg: &SynthConfig) -> Result<SynthOutput> {
    let mut params = BTreeMap::new();
    for (k, v) in cfg.scenario.defaults() {
        params.insert(k.to_string(), v);
    }
    for (k, v) in &cfg.params {
        if !params.contains_key(k) {
            return Err(Error::Setup(format!(
                "scenario {} has no parameter {k:?}",
                cfg.scenario
            )));
        }
        if !v.is_finite() {
            return Err(Error::Setup(format!("parameter {k} must be finite")));
        }
        params.insert(k.clone(), *v);
    }
    if cfg.members < 2 || cfg.stations == 0 || cfg.dates.is_empty() {
        return Err(Error::Setup(
            "need M >= 2, at least one station and one date".into(),
        ));
    }
    if cfg.dates.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Setup("dates must be strictly increasing".into()));
    }
    let generator = Generator::new(cfg, &params)?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut cases = Vec::with_capacity(cfg.dates.len() * cfg.stations);
    let mut truths = Vec::with_capacity(cases.capacity());
    let mut total = 0.0;
    // Station names sort in generation order, so cases stay aligned with truths.
    for &date in &cfg.dates {
        for s in 0..cfg.stations {
            let members = generator.members(&mut rng, cfg.members);
            let truth = generator.truth(&members)?;
            let obs = sample(&truth, &mut rng)?;
            total += truth.crps(obs)?;
            cases.push(ForecastCase::new(date, station_name(s), members, Some(obs)));
            truths.push(truth);
        }
    }
    let n = cases.len() as f64;
    let dataset = Dataset::new(cases, cfg.scenario.kind())?;
    Ok(SynthOutput {
        dataset,
        truths,
        params,
        mean_crps: total / n,
    })
}

fn sample<R: Rng>(truth: &Predictive, rng: &mut R) -> Result<f64> {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return truth.quantile(u);
        }
    }
}

/// Location model of the observation given the members.
enum Law {
    BmaNormal(BmaNormalModel),
    BmaGamma(BmaGammaModel),
    BmaTruncNormal(BmaTruncNormalModel),
    Emos(EmosModel),
    EnsembleMean { obs_sd: f64 },
}

/// Members are `signal + noise`; the signal is `shift + scale * N(0, 1)` on
/// the real line and `shift + scale * Gamma(2, 1)` for nonnegative variables.
struct Generator {
    law: Law,
    nonnegative: bool,
    signal_shift: f64,
    signal_scale: f64,
    /// Member noise sd; `None` draws a per-case spread uniformly from [0.5, 2).
    member_sd: Option<f64>,
}

fn control_weights(w_control: f64, members: usize) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&w_control) {
        return Err(Error::Setup(format!(
            "w_control {w_control} outside [0, 1]"
        )));
    }
    Ok(vec![w_control, (1.0 - w_control) / (members - 1) as f64])
}

impl Generator {
    fn new(cfg: &SynthConfig, p: &BTreeMap<String, f64>) -> Result<Self> {
        let grouping = make_grouping(&GroupingKind::TwoGroup, cfg.members)?;
        let m = cfg.members;
        let positive = |k: &str| -> Result<f64> {
            let v = p[k];
            if v > 0.0 {
                Ok(v)
            } else {
                Err(Error::Setup(format!("{k} must be positive")))
            }
        };
        let law = match cfg.scenario {
            Scenario::BmaNormal => Law::BmaNormal(BmaNormalModel {
                grouping,
                bias: BiasCorrection {
                    mode: BiasMode::Linear,
                    coefficients: vec![(p["bias_b0"], p["bias_b1"]); 2],
                },
                weights: control_weights(p["w_control"], m)?,
                sigma: positive("sigma")?,
            }),
            Scenario::BmaGamma => Law::BmaGamma(BmaGammaModel {
                grouping,
                b0: p["b0"],
                b1: p["b1"],
                c0: p["c0"],
                c1: p["c1"],
                weights: control_weights(p["w_control"], m)?,
            }),
            Scenario::BmaTruncNormal => Law::BmaTruncNormal(BmaTruncNormalModel {
                grouping,
                coefficients: vec![
                    (p["beta0_control"], p["beta1_control"]),
                    (p["beta0_rest"], p["beta1_rest"]),
                ],
                sigma: positive("sigma")?,
                weights: control_weights(p["w_control"], m)?,
            }),
            Scenario::EmosNormal | Scenario::EmosTruncNormal => {
                let family = if cfg.scenario == Scenario::EmosNormal {
                    EmosFamily::Normal
                } else {
                    EmosFamily::TruncNormal
                };
                let model = EmosModel {
                    grouping,
                    family,
                    a0: p["a0"],
                    // Location a0 + ensemble mean.
                    a: vec![1.0 / m as f64; 2],
                    b0: p["b0"],
                    b1: p["b1"],
                };
                model.validate()?;
                Law::Emos(model)
            }
            Scenario::UnderdispersiveRaw => Law::EnsembleMean {
                obs_sd: positive("obs_sd")?,
            },
        };
        let member_sd = match p.get("member_sd") {
            Some(_) => Some(positive("member_sd")?),
            None => None,
        };
        Ok(Generator {
            law,
            nonnegative: cfg.scenario.kind() == VariableKind::Nonnegative,
            signal_shift: p["signal_shift"],
            signal_scale: positive("signal_scale")?,
            member_sd,
        })
    }

    fn members<R: Rng>(&self, rng: &mut R, m: usize) -> Vec<f64> {
        let normal = |rng: &mut R| -> f64 { rng.sample(StandardNormal) };
        let signal = if self.nonnegative {
            let gamma = Gamma::new(2.0, 1.0).expect("valid gamma");
            self.signal_shift + self.signal_scale * gamma.sample(rng)
        } else {
            self.signal_shift + self.signal_scale * normal(rng)
        };
        let sd = match self.member_sd {
            Some(sd) => sd,
            None => rng.random_range(0.5..2.0),
        };
        (0..m)
            .map(|_| {
                let f = signal + sd * normal(rng);
                if self.nonnegative {
                    f.abs()
                } else {
                    f
                }
            })
            .collect()
    }

    fn truth(&self, members: &[f64]) -> Result<Predictive> {
        Ok(match &self.law {
            Law::BmaNormal(model) => model.predict(members)?.into(),
            Law::BmaGamma(model) => model.predict(members)?.into(),
            Law::BmaTruncNormal(model) => model.predict(members)?.into(),
            Law::Emos(model) => model.predict(members)?,
            Law::EnsembleMean { obs_sd } => {
                let mean = members.iter().sum::<f64>() / members.len() as f64;
                crate::dist::Normal::new(mean, *obs_sd)?.into()
            }
        })
    }
}
