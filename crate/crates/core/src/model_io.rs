//! Plain-text serialization of fitted models.
//!
//! ```text
//! enscal-models v1
//!
//! [2012-05-07]
//! kind = emos_normal
//! groups = 1;2,3,4
//! a0 = 0.25
//! ...
//! ```
//!
//! Floats are written with the shortest representation that parses back to the
//! same value, so a write/read round trip is exact.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use chrono::NaiveDate;

use crate::bma::{BiasCorrection, BiasMode, BmaGammaModel, BmaNormalModel, BmaTruncNormalModel};
use crate::dist::Predictive;
use crate::emos::{EmosFamily, EmosModel};
use crate::error::{Error, Result};
use crate::grouping::GroupingScheme;

pub const HEADER: &str = "enscal-models v1";

#[derive(Debug, Clone, PartialEq)]
pub enum FittedModel {
    BmaNormal(BmaNormalModel),
    BmaGamma(BmaGammaModel),
    BmaTruncNormal(BmaTruncNormalModel),
    Emos(EmosModel),
}

impl FittedModel {
    pub fn kind(&self) -> &'static str {
        match self {
            FittedModel::BmaNormal(_) => "bma_normal",
            FittedModel::BmaGamma(_) => "bma_gamma",
            FittedModel::BmaTruncNormal(_) => "bma_truncnormal",
            FittedModel::Emos(m) => match m.family {
                EmosFamily::Normal => "emos_normal",
                EmosFamily::TruncNormal => "emos_truncnormal",
            },
        }
    }

    pub fn grouping(&self) -> &GroupingScheme {
        match self {
            FittedModel::BmaNormal(m) => &m.grouping,
            FittedModel::BmaGamma(m) => &m.grouping,
            FittedModel::BmaTruncNormal(m) => &m.grouping,
            FittedModel::Emos(m) => &m.grouping,
        }
    }

    pub fn predict(&self, members: &[f64]) -> Result<Predictive> {
        Ok(match self {
            FittedModel::BmaNormal(m) => m.predict(members)?.into(),
            FittedModel::BmaGamma(m) => m.predict(members)?.into(),
            FittedModel::BmaTruncNormal(m) => m.predict(members)?.into(),
            FittedModel::Emos(m) => m.predict(members)?,
        })
    }

    fn entries(&self) -> Vec<(&'static str, String)> {
        let mut out = vec![
            ("kind", self.kind().to_string()),
            ("groups", groups_text(self.grouping())),
        ];
        match self {
            FittedModel::BmaNormal(m) => {
                out.push(("bias_mode", m.bias.mode.to_string()));
                out.push(("bias", pairs_text(&m.bias.coefficients)));
                out.push(("weights", list_text(&m.weights)));
                out.push(("sigma", m.sigma.to_string()));
            }
            FittedModel::BmaGamma(m) => {
                out.push(("b0", m.b0.to_string()));
                out.push(("b1", m.b1.to_string()));
                out.push(("c0", m.c0.to_string()));
                out.push(("c1", m.c1.to_string()));
                out.push(("weights", list_text(&m.weights)));
            }
            FittedModel::BmaTruncNormal(m) => {
                out.push(("location", pairs_text(&m.coefficients)));
                out.push(("sigma", m.sigma.to_string()));
                out.push(("weights", list_text(&m.weights)));
            }
            FittedModel::Emos(m) => {
                out.push(("a0", m.a0.to_string()));
                out.push(("a", list_text(&m.a)));
                out.push(("b0", m.b0.to_string()));
                out.push(("b1", m.b1.to_string()));
            }
        }
        out
    }
}

fn groups_text(g: &GroupingScheme) -> String {
    g.index_sets()
        .iter()
        .map(|set| {
            set.iter()
                .map(|i| i.to_string())
                .collect::<Vec<_>>()
                .join(",")
        })
        .collect::<Vec<_>>()
        .join(";")
}

fn list_text(v: &[f64]) -> String {
    v.iter().map(f64::to_string).collect::<Vec<_>>().join(",")
}

fn pairs_text(v: &[(f64, f64)]) -> String {
    v.iter()
        .map(|(a, b)| format!("{a}:{b}"))
        .collect::<Vec<_>>()
        .join(",")
}

pub fn write_models<W: Write>(mut sink: W, models: &[(NaiveDate, FittedModel)]) -> Result<()> {
    writeln!(sink, "{HEADER}")?;
    for (date, model) in models {
        writeln!(sink, "\n[{date}]")?;
        for (k, v) in model.entries() {
            writeln!(sink, "{k} = {v}")?;
        }
    }
    Ok(())
}

pub fn read_models<R: BufRead>(source: R) -> Result<Vec<(NaiveDate, FittedModel)>> {
    let mut lines = source.lines().enumerate();
    match lines.next() {
        Some((_, Ok(l))) if l.trim() == HEADER => {}
        Some((_, Err(e))) => return Err(e.into()),
        _ => {
            return Err(Error::Parse {
                line: 1,
                message: format!("expected header {HEADER:?}"),
            })
        }
    }
    let mut out = Vec::new();
    let mut current: Option<(NaiveDate, u64, BTreeMap<String, String>)> = None;
    for (idx, line) in lines {
        let line = line?;
        let lineno = idx as u64 + 1;
        let text = line.trim();
        if text.is_empty() || text.starts_with('#') {
            continue;
        }
        if let Some(inner) = text.strip_prefix('[').and_then(|t| t.strip_suffix(']')) {
            if let Some((date, at, map)) = current.take() {
                out.push((date, build(map, at)?));
            }
            let date = inner.parse::<NaiveDate>().map_err(|e| Error::Parse {
                line: lineno,
                message: format!("bad block date {inner:?}: {e}"),
            })?;
            current = Some((date, lineno, BTreeMap::new()));
            continue;
        }
        let Some((_, _, map)) = current.as_mut() else {
            return Err(Error::Parse {
                line: lineno,
                message: "key outside a [date] block".into(),
            });
        };
        let (k, v) = text.split_once('=').ok_or_else(|| Error::Parse {
            line: lineno,
            message: format!("expected key = value, got {text:?}"),
        })?;
        if map
            .insert(k.trim().to_string(), v.trim().to_string())
            .is_some()
        {
            return Err(Error::Parse {
                line: lineno,
                message: format!("duplicate key {:?}", k.trim()),
            });
        }
    }
    if let Some((date, at, map)) = current {
        out.push((date, build(map, at)?));
    }
    Ok(out)
}

struct Fields {
    map: BTreeMap<String, String>,
    line: u64,
}

impl Fields {
    fn err(&self, message: String) -> Error {
        Error::Parse {
            line: self.line,
            message,
        }
    }

    fn take(&mut self, key: &str) -> Result<String> {
        self.map
            .remove(key)
            .ok_or_else(|| self.err(format!("missing key {key:?}")))
    }

    fn float(&mut self, key: &str) -> Result<f64> {
        let v = self.take(key)?;
        v.parse()
            .map_err(|_| self.err(format!("{key}: not a number: {v:?}")))
    }

    fn list(&mut self, key: &str) -> Result<Vec<f64>> {
        let v = self.take(key)?;
        v.split(',')
            .map(|s| {
                s.trim()
                    .parse()
                    .map_err(|_| self.err(format!("{key}: bad list {v:?}")))
            })
            .collect()
    }

    fn pairs(&mut self, key: &str) -> Result<Vec<(f64, f64)>> {
        let v = self.take(key)?;
        v.split(',')
            .map(|p| {
                let (a, b) = p
                    .split_once(':')
                    .ok_or_else(|| self.err(format!("{key}: expected a:b pairs")))?;
                let parse = |s: &str| {
                    s.trim()
                        .parse::<f64>()
                        .map_err(|_| self.err(format!("{key}: bad pair {p:?}")))
                };
                Ok((parse(a)?, parse(b)?))
            })
            .collect()
    }

    fn finish(self) -> Result<()> {
        match self.map.keys().next() {
            Some(k) => Err(self.err(format!("unknown key {k:?}"))),
            None => Ok(()),
        }
    }
}

fn build(map: BTreeMap<String, String>, line: u64) -> Result<FittedModel> {
    let mut f = Fields { map, line };
    let kind = f.take("kind")?;
    let groups = f.take("groups")?;
    let sets = groups
        .split(';')
        .map(|set| {
            set.split(',')
                .map(|i| i.trim().parse::<usize>())
                .collect::<std::result::Result<Vec<_>, _>>()
        })
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|_| f.err(format!("bad groups {groups:?}")))?;
    let members = sets.iter().map(Vec::len).sum();
    let grouping = GroupingScheme::from_index_sets(&sets, members)?;
    let model = match kind.as_str() {
        "bma_normal" => {
            let mode: BiasMode = f.take("bias_mode")?.parse()?;
            let m = BmaNormalModel {
                grouping,
                bias: BiasCorrection {
                    mode,
                    coefficients: f.pairs("bias")?,
                },
                weights: f.list("weights")?,
                sigma: f.float("sigma")?,
            };
            m.validate()?;
            FittedModel::BmaNormal(m)
        }
        "bma_gamma" => {
            let m = BmaGammaModel {
                grouping,
                b0: f.float("b0")?,
                b1: f.float("b1")?,
                c0: f.float("c0")?,
                c1: f.float("c1")?,
                weights: f.list("weights")?,
            };
            m.validate()?;
            FittedModel::BmaGamma(m)
        }
        "bma_truncnormal" => {
            let m = BmaTruncNormalModel {
                grouping,
                coefficients: f.pairs("location")?,
                sigma: f.float("sigma")?,
                weights: f.list("weights")?,
            };
            m.validate()?;
            FittedModel::BmaTruncNormal(m)
        }
        "emos_normal" | "emos_truncnormal" => {
            let family = if kind == "emos_normal" {
                EmosFamily::Normal
            } else {
                EmosFamily::TruncNormal
            };
            let m = EmosModel {
                grouping,
                family,
                a0: f.float("a0")?,
                a: f.list("a")?,
                b0: f.float("b0")?,
                b1: f.float("b1")?,
            };
            m.validate()?;
            FittedModel::Emos(m)
        }
        other => return Err(f.err(format!("unknown model kind {other:?}"))),
    };
    f.finish()?;
    Ok(model)
}
