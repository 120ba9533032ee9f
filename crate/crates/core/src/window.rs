//! Rolling training windows and the flattened training sets the fitters consume.

use chrono::NaiveDate;

use crate::data::{Dataset, ForecastCase};
use crate::error::{Error, Result};
use crate::grouping::GroupingScheme;

/// The `length_days` most recent data-bearing dates strictly before `target_date`,
/// with every station's case from those dates pooled together.
#[derive(Debug, Clone)]
pub struct TrainingWindow<'a> {
    pub target_date: NaiveDate,
    pub length_days: usize,
    pub dates: &'a [NaiveDate],
    pub cases: &'a [ForecastCase],
}

impl TrainingWindow<'_> {
    /// Cases with an observation; only these enter a fit.
    pub fn usable_cases(&self) -> impl Iterator<Item = &ForecastCase> {
        self.cases.iter().filter(|c| c.observation.is_some())
    }
}

/// One step of a rolling calibration: a training window and the cases to forecast.
#[derive(Debug, Clone)]
pub struct RollingStep<'a> {
    pub window: TrainingWindow<'a>,
    pub targets: &'a [ForecastCase],
}

/// Index of the first date that has `length` data dates before it.
pub fn earliest_start(ds: &Dataset, length: usize) -> Result<NaiveDate> {
    ds.dates().get(length).copied().ok_or(Error::NoHistory {
        length,
        available: ds.dates().len(),
    })
}

/// Windows for every data date from `start` onwards.
pub fn rolling_windows(
    ds: &Dataset,
    length_days: usize,
    start: NaiveDate,
) -> Result<Vec<RollingStep<'_>>> {
    rolling_windows_between(ds, length_days, start, None)
}

/// Windows for every data date in `[start, end]` (`end` inclusive, open if `None`).
///
/// Dates without any case are skipped rather than counted, so each window
/// always spans exactly `length_days` dates with data.
pub fn rolling_windows_between(
    ds: &Dataset,
    length_days: usize,
    start: NaiveDate,
    end: Option<NaiveDate>,
) -> Result<Vec<RollingStep<'_>>> {
    if length_days == 0 {
        return Err(Error::Domain("training length must be at least 1".into()));
    }
    let earliest = earliest_start(ds, length_days)?;
    let dates = ds.dates();
    let first = dates.partition_point(|d| *d < start);
    if first < length_days {
        return Err(Error::Window {
            length: length_days,
            earliest,
        });
    }
    let mut steps = Vec::new();
    for t in first..dates.len() {
        let target_date = dates[t];
        if end.is_some_and(|e| target_date > e) {
            break;
        }
        let from = t - length_days;
        let lo = ds.case_range(from).start;
        let hi = ds.case_range(t - 1).end;
        steps.push(RollingStep {
            window: TrainingWindow {
                target_date,
                length_days,
                dates: &dates[from..t],
                cases: &ds.cases()[lo..hi],
            },
            targets: ds.cases_at(t),
        });
    }
    Ok(steps)
}

/// Training data in the canonical grouped layout: `n` cases by `M` slots.
#[derive(Debug, Clone)]
pub struct TrainingSet {
    grouping: GroupingScheme,
    values: Vec<f64>,
    obs: Vec<f64>,
}

impl TrainingSet {
    /// Collects cases with observations; members are arranged by
    /// [`GroupingScheme::arrange`].
    pub fn new<'a, I>(cases: I, grouping: &GroupingScheme) -> Result<Self>
    where
        I: IntoIterator<Item = &'a ForecastCase>,
    {
        let mut values = Vec::new();
        let mut obs = Vec::new();
        for case in cases {
            if let Some(y) = case.observation {
                values.extend(grouping.arrange(&case.members)?);
                obs.push(y);
            }
        }
        Ok(TrainingSet {
            grouping: grouping.clone(),
            values,
            obs,
        })
    }

    pub fn from_window(window: &TrainingWindow<'_>, grouping: &GroupingScheme) -> Result<Self> {
        Self::new(window.cases, grouping)
    }

    /// Builds a set directly from arranged rows; mainly for tests and synthetic studies.
    pub fn from_rows(rows: Vec<(Vec<f64>, f64)>, grouping: &GroupingScheme) -> Result<Self> {
        let mut values = Vec::with_capacity(rows.len() * grouping.member_count());
        let mut obs = Vec::with_capacity(rows.len());
        for (members, y) in rows {
            values.extend(grouping.arrange(&members)?);
            obs.push(y);
        }
        Ok(TrainingSet {
            grouping: grouping.clone(),
            values,
            obs,
        })
    }

    pub fn grouping(&self) -> &GroupingScheme {
        &self.grouping
    }

    pub fn len(&self) -> usize {
        self.obs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.obs.is_empty()
    }

    pub fn members(&self) -> usize {
        self.grouping.member_count()
    }

    /// Arranged members of case `i`.
    pub fn row(&self, i: usize) -> &[f64] {
        let m = self.members();
        &self.values[i * m..(i + 1) * m]
    }

    pub fn obs(&self) -> &[f64] {
        &self.obs
    }

    pub fn rows(&self) -> impl Iterator<Item = (&[f64], f64)> {
        self.values
            .chunks_exact(self.members())
            .zip(self.obs.iter().copied())
    }
}
