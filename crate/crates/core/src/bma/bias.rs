use std::fmt;
use std::str::FromStr;

use super::FitDiagnostics;
use crate::error::{Error, Result};
use crate::window::TrainingSet;

/// Form of the per-group affine member correction `b0 + b1 * f`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BiasMode {
    Linear,
    /// `b1` fixed to 1.
    Additive,
    /// `b0 = 0`, `b1 = 1`.
    None,
}

impl BiasMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            BiasMode::Linear => "linear",
            BiasMode::Additive => "additive",
            BiasMode::None => "none",
        }
    }
}

impl fmt::Display for BiasMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BiasMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(BiasMode::Linear),
            "additive" => Ok(BiasMode::Additive),
            "none" => Ok(BiasMode::None),
            other => Err(Error::Schema(format!("unknown bias mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BiasCorrection {
    pub mode: BiasMode,
    /// `(b0, b1)` per group.
    pub coefficients: Vec<(f64, f64)>,
}

impl BiasCorrection {
    /// Identity correction (`mode = none`) for `groups` groups.
    pub fn identity(groups: usize) -> Self {
        BiasCorrection {
            mode: BiasMode::None,
            coefficients: vec![(0.0, 1.0); groups],
        }
    }

    #[inline]
    pub fn apply(&self, group: usize, f: f64) -> f64 {
        let (b0, b1) = self.coefficients[group];
        b0 + b1 * f
    }

    pub fn validate(&self) -> Result<()> {
        for &(b0, b1) in &self.coefficients {
            if !b0.is_finite() || !b1.is_finite() {
                return Err(Error::Domain("bias coefficients must be finite".into()));
            }
            let ok = match self.mode {
                BiasMode::Linear => true,
                BiasMode::Additive => b1 == 1.0,
                BiasMode::None => b0 == 0.0 && b1 == 1.0,
            };
            if !ok {
                return Err(Error::Domain(format!(
                    "coefficients ({b0}, {b1}) violate {} bias correction",
                    self.mode
                )));
            }
        }
        Ok(())
    }
}

/// Ordinary least squares of the observation on the pooled member values of
/// each group. A group whose members do not vary falls back to the additive
/// correction; `diagnostics` records it.
pub fn fit_bias_regression(
    set: &TrainingSet,
    mode: BiasMode,
    diagnostics: &mut FitDiagnostics,
) -> Result<BiasCorrection> {
    let grouping = set.grouping();
    if set.is_empty() {
        return Err(Error::Fit("bias regression on an empty window".into()));
    }
    if mode == BiasMode::None {
        return Ok(BiasCorrection::identity(grouping.group_count()));
    }
    let mut coefficients = Vec::with_capacity(grouping.group_count());
    for k in 0..grouping.group_count() {
        let slots = grouping.slots(k);
        let count = (set.len() * slots.len()) as f64;
        let (mut sf, mut sy) = (0.0, 0.0);
        for (row, y) in set.rows() {
            for &f in &row[slots.clone()] {
                sf += f;
                sy += y;
            }
        }
        let (mf, my) = (sf / count, sy / count);
        let additive = (my - mf, 1.0);
        if mode == BiasMode::Additive {
            coefficients.push(additive);
            continue;
        }
        let (mut sxx, mut sxy, mut scale) = (0.0, 0.0, 0.0);
        for (row, y) in set.rows() {
            for &f in &row[slots.clone()] {
                sxx += (f - mf) * (f - mf);
                sxy += (f - mf) * (y - my);
                scale += f * f;
            }
        }
        if sxx <= 1e-12 * scale.max(f64::MIN_POSITIVE) {
            diagnostics.flag(format!(
                "group {}: constant members, additive bias used",
                k + 1
            ));
            coefficients.push(additive);
            continue;
        }
        let b1 = sxy / sxx;
        coefficients.push((my - b1 * mf, b1));
    }
    Ok(BiasCorrection { mode, coefficients })
}
