//! Forecast cases, datasets and the CSV ingestion format.
//!
//! The file layout is `date,station,obs,m1,...,mM` with ISO-8601 dates. Member
//! `m1` is the control run by convention; the grouping schemes in
//! [`crate::grouping`] rely on that ordering. An empty `obs` field marks a
//! missing observation: such rows are kept (they still count as a date with
//! data) but never enter a fit or a score.

use std::collections::BTreeSet;
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use chrono::NaiveDate;

use crate::error::{Error, Result};

/// Support of the forecast variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VariableKind {
    /// Unbounded quantities such as temperature.
    RealLine,
    /// Quantities such as wind speed that cannot be negative.
    Nonnegative,
}

impl VariableKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            VariableKind::RealLine => "real_line",
            VariableKind::Nonnegative => "nonnegative",
        }
    }
}

impl fmt::Display for VariableKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for VariableKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "real_line" | "real" => Ok(VariableKind::RealLine),
            "nonnegative" => Ok(VariableKind::Nonnegative),
            other => Err(Error::Schema(format!("unknown variable kind `{other}`"))),
        }
    }
}

/// One (date, station) record: the ensemble and its verifying observation.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastCase {
    pub date: NaiveDate,
    pub station: String,
    pub members: Vec<f64>,
    pub observation: Option<f64>,
}

impl ForecastCase {
    pub fn new(
        date: NaiveDate,
        station: impl Into<String>,
        members: Vec<f64>,
        observation: Option<f64>,
    ) -> Self {
        ForecastCase {
            date,
            station: station.into(),
            members,
            observation,
        }
    }

    pub fn member_count(&self) -> usize {
        self.members.len()
    }

    fn validate(&self, kind: VariableKind) -> Result<()> {
        if self.members.len() < 2 {
            return Err(Error::Schema(format!(
                "{} {}: need at least 2 members, got {}",
                self.date,
                self.station,
                self.members.len()
            )));
        }
        if let Some(i) = self.members.iter().position(|v| !v.is_finite()) {
            return Err(Error::Schema(format!(
                "{} {}: member {} is not finite",
                self.date,
                self.station,
                i + 1
            )));
        }
        if let Some(obs) = self.observation {
            if !obs.is_finite() {
                return Err(Error::Schema(format!(
                    "{} {}: observation is not finite",
                    self.date, self.station
                )));
            }
            if kind == VariableKind::Nonnegative && obs < 0.0 {
                return Err(Error::Schema(format!(
                    "{} {}: negative observation {obs} for a nonnegative variable",
                    self.date, self.station
                )));
            }
        }
        Ok(())
    }
}

/// A validated, chronologically ordered collection of forecast cases.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    cases: Vec<ForecastCase>,
    kind: VariableKind,
    members: usize,
    dates: Vec<NaiveDate>,
    /// `date_starts[i]..date_starts[i + 1]` indexes the cases of `dates[i]`.
    date_starts: Vec<usize>,
    stations: Vec<String>,
}

impl Dataset {
    /// Sorts the cases by (date, station) and checks the dataset invariants.
    pub fn new(mut cases: Vec<ForecastCase>, kind: VariableKind) -> Result<Self> {
        let first = cases
            .first()
            .ok_or_else(|| Error::Schema("dataset has no cases".into()))?;
        let members = first.members.len();
        for case in &cases {
            case.validate(kind)?;
            if case.members.len() != members {
                return Err(Error::Schema(format!(
                    "{} {}: {} members, expected {members}",
                    case.date,
                    case.station,
                    case.members.len()
                )));
            }
        }
        cases.sort_by(|a, b| (a.date, &a.station).cmp(&(b.date, &b.station)));

        let mut dates = Vec::new();
        let mut date_starts = Vec::new();
        let mut stations = BTreeSet::new();
        for (i, case) in cases.iter().enumerate() {
            if i > 0 {
                let prev = &cases[i - 1];
                if prev.date == case.date && prev.station == case.station {
                    return Err(Error::Schema(format!(
                        "duplicate case for {} at station {}",
                        case.date, case.station
                    )));
                }
            }
            if dates.last() != Some(&case.date) {
                dates.push(case.date);
                date_starts.push(i);
            }
            stations.insert(case.station.clone());
        }
        date_starts.push(cases.len());

        Ok(Dataset {
            cases,
            kind,
            members,
            dates,
            date_starts,
            stations: stations.into_iter().collect(),
        })
    }

    pub fn cases(&self) -> &[ForecastCase] {
        &self.cases
    }

    pub fn kind(&self) -> VariableKind {
        self.kind
    }

    /// Ensemble size M.
    pub fn member_count(&self) -> usize {
        self.members
    }

    /// Distinct dates carrying at least one case, ascending.
    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn stations(&self) -> &[String] {
        &self.stations
    }

    /// Cases of the `i`-th date in [`Dataset::dates`].
    pub fn cases_at(&self, date_index: usize) -> &[ForecastCase] {
        &self.cases[self.case_range(date_index)]
    }

    /// Index range into [`Dataset::cases`] covering the `i`-th date.
    pub fn case_range(&self, date_index: usize) -> std::ops::Range<usize> {
        self.date_starts[date_index]..self.date_starts[date_index + 1]
    }

    pub fn cases_on(&self, date: NaiveDate) -> &[ForecastCase] {
        match self.dates.binary_search(&date) {
            Ok(i) => self.cases_at(i),
            Err(_) => &[],
        }
    }

    /// Returns a copy with every case's members replaced by `f(case)`.
    pub fn map_members<F>(&self, mut f: F) -> Result<Dataset>
    where
        F: FnMut(&ForecastCase) -> Vec<f64>,
    {
        let cases = self
            .cases
            .iter()
            .map(|c| ForecastCase {
                members: f(c),
                ..c.clone()
            })
            .collect();
        Dataset::new(cases, self.kind)
    }
}

/// Column mapping for the delimited input format.
#[derive(Debug, Clone)]
pub struct CsvSchema {
    pub date: String,
    pub station: String,
    pub observation: String,
    /// Member columns are `<prefix>1 .. <prefix>M`.
    pub member_prefix: String,
    pub delimiter: u8,
}

impl Default for CsvSchema {
    fn default() -> Self {
        CsvSchema {
            date: "date".into(),
            station: "station".into(),
            observation: "obs".into(),
            member_prefix: "m".into(),
            delimiter: b',',
        }
    }
}

struct ColumnMap {
    date: usize,
    station: usize,
    observation: usize,
    members: Vec<usize>,
}

impl CsvSchema {
    fn resolve(&self, header: &csv::StringRecord) -> Result<ColumnMap> {
        let find = |name: &str| {
            header
                .iter()
                .position(|h| h.trim() == name)
                .ok_or_else(|| Error::Schema(format!("missing column `{name}`")))
        };
        let mut numbered: Vec<(usize, usize)> = header
            .iter()
            .enumerate()
            .filter_map(|(col, h)| {
                let rest = h.trim().strip_prefix(self.member_prefix.as_str())?;
                rest.parse::<usize>().ok().map(|n| (n, col))
            })
            .collect();
        numbered.sort_unstable();
        for (expected, (n, _)) in (1..).zip(&numbered) {
            if *n != expected {
                return Err(Error::Schema(format!(
                    "member columns must be numbered {p}1..{p}M without gaps",
                    p = self.member_prefix
                )));
            }
        }
        Ok(ColumnMap {
            date: find(&self.date)?,
            station: find(&self.station)?,
            observation: find(&self.observation)?,
            members: numbered.into_iter().map(|(_, col)| col).collect(),
        })
    }
}

/// Reads a dataset in the `date,station,obs,m1,...,mM` layout.
pub fn load_dataset<R: Read>(source: R, schema: &CsvSchema, kind: VariableKind) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(schema.delimiter)
        .flexible(true)
        .from_reader(source);
    let header = reader.headers()?.clone();
    let columns = schema.resolve(&header)?;
    if columns.members.len() < 2 {
        return Err(Error::Schema(format!(
            "need at least 2 member columns, found {}",
            columns.members.len()
        )));
    }

    let mut cases = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != header.len() {
            return Err(Error::Schema(format!(
                "line {line}: {} fields, header has {} ({} members expected)",
                record.len(),
                header.len(),
                columns.members.len()
            )));
        }
        let field = |i: usize| record.get(i).unwrap_or("").trim();
        let parse_err = |message: String| Error::Parse { line, message };

        let date = NaiveDate::parse_from_str(field(columns.date), "%Y-%m-%d")
            .map_err(|e| parse_err(format!("bad date `{}`: {e}", field(columns.date))))?;
        let station = field(columns.station);
        if station.is_empty() {
            return Err(parse_err("empty station".into()));
        }
        let observation = match field(columns.observation) {
            "" | "NA" | "NaN" => None,
            s => Some(
                s.parse::<f64>()
                    .map_err(|_| parse_err(format!("bad observation `{s}`")))?,
            ),
        };
        let members = columns
            .members
            .iter()
            .enumerate()
            .map(|(k, &col)| match field(col) {
                "" => Err(parse_err(format!("missing value for member {}", k + 1))),
                s => s
                    .parse::<f64>()
                    .map_err(|_| parse_err(format!("bad value `{s}` for member {}", k + 1))),
            })
            .collect::<Result<Vec<_>>>()?;
        let case = ForecastCase::new(date, station, members, observation);
        case.validate(kind).map_err(|e| parse_err(e.to_string()))?;
        cases.push(case);
    }
    Dataset::new(cases, kind)
}

/// Writes a dataset in the ingestion format. Values use the shortest
/// representation that parses back to the same `f64`.
pub fn write_dataset<W: Write>(sink: W, ds: &Dataset) -> Result<()> {
    let mut writer = csv::Writer::from_writer(sink);
    let mut header = vec!["date".to_string(), "station".into(), "obs".into()];
    header.extend((1..=ds.member_count()).map(|k| format!("m{k}")));
    writer.write_record(&header)?;
    for case in ds.cases() {
        let mut row = vec![
            case.date.format("%Y-%m-%d").to_string(),
            case.station.clone(),
            case.observation.map(|o| o.to_string()).unwrap_or_default(),
        ];
        row.extend(case.members.iter().map(|v| v.to_string()));
        writer.write_record(&row)?;
    }
    writer.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO_ROWS: &str = "date,station,obs,m1,m2,m3,m4,m5,m6,m7,m8,m9,m10,m11
2012-04-01,A,280.5,280,281,279,282,280,281,279,280,281,282,280
2012-04-01,B,,1,2,3,4,5,6,7,8,9,10,11
";

    #[test]
    fn loads_two_valid_rows() {
        let ds = load_dataset(
            TWO_ROWS.as_bytes(),
            &CsvSchema::default(),
            VariableKind::RealLine,
        )
        .unwrap();
        assert_eq!(ds.cases().len(), 2);
        assert_eq!(ds.member_count(), 11);
        assert_eq!(ds.dates().len(), 1);
        assert_eq!(ds.cases()[1].observation, None);
    }

    #[test]
    fn short_row_is_a_schema_error() {
        let text = format!("{TWO_ROWS}2012-04-02,A,1,1,2,3,4,5,6,7,8,9,10\n");
        let err = load_dataset(
            text.as_bytes(),
            &CsvSchema::default(),
            VariableKind::RealLine,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Schema(_)), "{err}");
    }

    #[test]
    fn malformed_value_reports_line() {
        let text = "date,station,obs,m1,m2\n2012-04-01,A,1,2,3\n2012-04-02,A,1,x,3\n";
        match load_dataset(
            text.as_bytes(),
            &CsvSchema::default(),
            VariableKind::RealLine,
        ) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn missing_member_rejected() {
        let text = "date,station,obs,m1,m2\n2012-04-01,A,1,,3\n";
        assert!(matches!(
            load_dataset(
                text.as_bytes(),
                &CsvSchema::default(),
                VariableKind::RealLine
            ),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn negative_wind_rejected() {
        let text = "date,station,obs,m1,m2\n2012-04-01,A,-0.5,1,3\n";
        assert!(load_dataset(
            text.as_bytes(),
            &CsvSchema::default(),
            VariableKind::Nonnegative
        )
        .is_err());
    }

    #[test]
    fn duplicate_case_rejected() {
        let d = NaiveDate::from_ymd_opt(2012, 4, 1).unwrap();
        let cases = vec![
            ForecastCase::new(d, "A", vec![1.0, 2.0], Some(1.0)),
            ForecastCase::new(d, "A", vec![1.0, 2.0], Some(1.0)),
        ];
        assert!(Dataset::new(cases, VariableKind::RealLine).is_err());
    }

    #[test]
    fn write_then_load_is_identity() {
        let ds = load_dataset(
            TWO_ROWS.as_bytes(),
            &CsvSchema::default(),
            VariableKind::RealLine,
        )
        .unwrap();
        let mut buf = Vec::new();
        write_dataset(&mut buf, &ds).unwrap();
        let back = load_dataset(
            buf.as_slice(),
            &CsvSchema::default(),
            VariableKind::RealLine,
        )
        .unwrap();
        assert_eq!(ds, back);
    }

    #[test]
    fn custom_schema_columns() {
        let text = "day;site;y;f2;f1\n2012-04-01;A;1.5;2;1\n";
        let schema = CsvSchema {
            date: "day".into(),
            station: "site".into(),
            observation: "y".into(),
            member_prefix: "f".into(),
            delimiter: b';',
        };
        let ds = load_dataset(text.as_bytes(), &schema, VariableKind::RealLine).unwrap();
        assert_eq!(ds.cases()[0].members, vec![1.0, 2.0]);
    }
}
