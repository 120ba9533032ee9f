//! CSV emission of scores, per-case outputs and histograms.

use std::io::{Read, Write};

use super::{CaseOutput, SweepResult};
use crate::error::{Error, Result};
use crate::verification::{Histogram, ScoreReport};

/// One line of `scores.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRow {
    pub method: String,
    pub length: usize,
    pub evaluation_dates: usize,
    pub report: ScoreReport,
    pub ks: Option<(f64, f64)>,
    pub skipped: usize,
    pub pit_boundary: usize,
}

const SCORE_HEADER: [&str; 15] = [
    "method",
    "length",
    "evaluation_dates",
    "n_cases",
    "mean_crps",
    "mae_median",
    "mae_mean",
    "rmse_median",
    "rmse_mean",
    "avg_width",
    "coverage_pct",
    "ks_stat",
    "ks_p",
    "skipped",
    "pit_boundary",
];

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_scores<W: Write>(sink: W, rows: &[ScoreRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(SCORE_HEADER)?;
    for r in rows {
        let s = &r.report;
        w.write_record([
            r.method.clone(),
            r.length.to_string(),
            r.evaluation_dates.to_string(),
            s.n_cases.to_string(),
            s.mean_crps.to_string(),
            s.mae_median.to_string(),
            s.mae_mean.to_string(),
            s.rmse_median.to_string(),
            s.rmse_mean.to_string(),
            s.avg_width.to_string(),
            (100.0 * s.coverage).to_string(),
            opt(r.ks.map(|k| k.0)),
            opt(r.ks.map(|k| k.1)),
            r.skipped.to_string(),
            r.pit_boundary.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Optimal training length and value for each score of a sweep.
pub fn write_argmin<W: Write>(sink: W, sweep: &SweepResult) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["score", "opt_length", "opt_value"])?;
    for (name, o) in [
        ("crps", sweep.best_crps),
        ("mae_median", sweep.best_mae),
        ("rmse_mean", sweep.best_rmse),
    ] {
        w.write_record([name.to_string(), o.length.to_string(), o.value.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_cases<W: Write>(sink: W, cases: &[CaseOutput]) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record([
        "date", "station", "obs", "crps", "median", "mean", "lower", "upper", "pit", "rank",
    ])?;
    for c in cases {
        let s = &c.score;
        w.write_record([
            c.date.to_string(),
            c.station.clone(),
            s.obs.to_string(),
            s.crps.to_string(),
            s.median.to_string(),
            s.mean.to_string(),
            s.lower.to_string(),
            s.upper.to_string(),
            opt(c.pit),
            c.rank.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `bin,lower,upper,count`; `edges` holds one more entry than there are bins.
pub fn write_histogram<W: Write>(sink: W, hist: &Histogram, edges: &[f64]) -> Result<()> {
    if edges.len() != hist.counts.len() + 1 {
        return Err(Error::Shape(format!(
            "{} edges for {} bins",
            edges.len(),
            hist.counts.len()
        )));
    }
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["bin", "lower", "upper", "count"])?;
    for (i, c) in hist.counts.iter().enumerate() {
        w.write_record([
            (i + 1).to_string(),
            edges[i].to_string(),
            edges[i + 1].to_string(),
            c.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Values of column `name`; empty cells read as `None`.
pub fn read_case_column<R: Read>(source: R, name: &str) -> Result<Vec<Option<f64>>> {
    let mut r = csv::Reader::from_reader(source);
    let idx = r
        .headers()?
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| Error::Schema(format!("missing column {name:?}")))?;
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let line = i as u64 + 2;
        let cell = rec
            .get(idx)
            .ok_or_else(|| Error::Schema(format!("line {line}: short row")))?;
        out.push(if cell.trim().is_empty() {
            None
        } else {
            Some(cell.trim().parse().map_err(|_| Error::Parse {
                line,
                message: format!("{name}: not a number: {cell:?}"),
            })?)
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::verification::CaseScore;
    use chrono::NaiveDate;

    #[test]
    fn cases_column_round_trip() {
        let cases: Vec<CaseOutput> = (0..3)
            .map(|i| CaseOutput {
                date: NaiveDate::from_ymd_opt(2012, 6, 1 + i).unwrap(),
                station: "A".into(),
                score: CaseScore::of_ensemble(&[0.1 * i as f64, 1.0 / 3.0], 0.5),
                pit: (i > 0).then_some(0.25 * i as f64),
                rank: i as usize + 1,
            })
            .collect();
        let mut buf = Vec::new();
        write_cases(&mut buf, &cases).unwrap();
        let crps = read_case_column(buf.as_slice(), "crps").unwrap();
        for (c, v) in cases.iter().zip(&crps) {
            assert_eq!(Some(c.score.crps), *v);
        }
        let pit = read_case_column(buf.as_slice(), "pit").unwrap();
        assert_eq!(pit, vec![None, Some(0.25), Some(0.5)]);
        assert!(matches!(
            read_case_column(buf.as_slice(), "nope"),
            Err(Error::Schema(_))
        ));
    }

    #[test]
    fn histogram_edges_must_match() {
        let h = Histogram {
            counts: vec![1, 2],
            total: 3,
        };
        assert!(write_histogram(Vec::new(), &h, &[0.0, 1.0]).is_err());
        let mut buf = Vec::new();
        write_histogram(&mut buf, &h, &[0.0, 0.5, 1.0]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "bin,lower,upper,count\n1,0,0.5,1\n2,0.5,1,2\n");
    }
}
