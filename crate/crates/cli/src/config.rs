//! The run configuration document.

use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::Deserialize;

use enscal::{ExperimentSpec, GroupingKind, Method, VariableKind};

pub const CONFIG_VERSION: u32 = 1;
pub const OUTPUT_DIR_ENV: &str = "ENSCAL_OUTPUT_DIR";

/// Flat TOML document. Relative paths resolve against the config file's directory.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub version: u32,
    pub data: PathBuf,
    pub variable: String,
    pub method: String,
    #[serde(default = "default_grouping")]
    pub grouping: String,
    pub training_length: Option<usize>,
    /// Inclusive `[lo, hi]`; used by `sweep` only.
    pub lengths: Option<[usize; 2]>,
    /// ISO date, as a string or a TOML local date.
    pub start: Option<DateField>,
    pub end: Option<DateField>,
    pub level: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    pub pit_bins: Option<usize>,
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
pub enum DateField {
    Text(String),
    Toml(toml::value::Datetime),
}

impl DateField {
    fn resolve(&self, name: &str) -> Result<NaiveDate, String> {
        let text = match self {
            DateField::Text(s) => s.clone(),
            DateField::Toml(d) => d.to_string(),
        };
        text.trim()
            .parse()
            .map_err(|_| field(name, format!("not an ISO date: {text:?}")))
    }
}

fn default_grouping() -> String {
    "two_group".into()
}

/// A configuration that passed validation.
#[derive(Debug)]
pub struct Run {
    pub data: PathBuf,
    pub kind: VariableKind,
    pub spec: ExperimentSpec,
    pub lengths: Option<(usize, usize)>,
    pub output_dir: PathBuf,
}

fn field(name: &str, msg: impl std::fmt::Display) -> String {
    format!("{name}: {msg}")
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.message().to_string())
    }

    /// Checks every field. `sweep` decides whether `lengths` or
    /// `training_length` is required.
    pub fn validate(
        self,
        base: &Path,
        sweep: bool,
        env_output: Option<PathBuf>,
    ) -> Result<Run, String> {
        if self.version != CONFIG_VERSION {
            return Err(field(
                "version",
                format!(
                    "unsupported version {}, expected {CONFIG_VERSION}",
                    self.version
                ),
            ));
        }
        let data = base.join(&self.data);
        if !data.is_file() {
            return Err(field("data", format!("no such file {}", data.display())));
        }
        let kind: VariableKind = self.variable.parse().map_err(|e| field("variable", e))?;
        let method: Method = self.method.parse().map_err(|e| field("method", e))?;
        let grouping: GroupingKind = self.grouping.parse().map_err(|e| field("grouping", e))?;

        let lengths = match (sweep, self.lengths, self.training_length) {
            (true, Some([lo, hi]), _) => {
                if lo == 0 || hi < lo {
                    return Err(field("lengths", format!("invalid range [{lo}, {hi}]")));
                }
                Some((lo, hi))
            }
            (true, None, _) => return Err(field("lengths", "required for sweep")),
            (false, _, None) => return Err(field("training_length", "required")),
            (false, _, Some(0)) => return Err(field("training_length", "must be positive")),
            (false, _, Some(_)) => None,
        };
        let mut spec = ExperimentSpec::new(
            method,
            lengths.map_or(self.training_length.unwrap_or(0), |l| l.1),
        );
        spec.grouping = grouping;
        spec.start = self.start.map(|d| d.resolve("start")).transpose()?;
        spec.end = self.end.map(|d| d.resolve("end")).transpose()?;
        spec.seed = self.seed;
        if let (Some(s), Some(e)) = (spec.start, spec.end) {
            if e < s {
                return Err(field("end", format!("{e} precedes start {s}")));
            }
        }
        if let Some(level) = self.level {
            if !(level > 0.0 && level < 1.0) {
                return Err(field("level", format!("{level} not in (0, 1)")));
            }
            spec.level = level;
        }
        if let Some(bins) = self.pit_bins {
            if bins == 0 {
                return Err(field("pit_bins", "must be positive"));
            }
            spec.pit_bins = bins;
        }
        spec.validate(kind).map_err(|e| field("method", e))?;

        let output_dir = env_output
            .or_else(|| self.output_dir.map(|d| base.join(d)))
            .ok_or_else(|| {
                field(
                    "output_dir",
                    format!("required unless {OUTPUT_DIR_ENV} is set"),
                )
            })?;
        Ok(Run {
            data,
            kind,
            spec,
            lengths,
            output_dir,
        })
    }
}
