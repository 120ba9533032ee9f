//! Statistical post-processing of ensemble forecasts.
//!
//! Raw ensembles are turned into calibrated predictive distributions with
//! Bayesian model averaging ([`bma`]) or ensemble model output statistics
//! ([`emos`]), fitted on rolling training windows ([`window`]) and verified with
//! proper scores and calibration diagnostics ([`verification`]).

// `!(x > 0.0)` is used deliberately so that NaN fails positivity checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bma;
pub mod data;
pub mod dist;
pub mod emos;
pub mod error;
pub mod grouping;
pub mod harness;
pub mod model_io;
pub mod optimize;
pub mod synth;
pub mod verification;
pub mod window;

pub use data::{load_dataset, write_dataset, CsvSchema, Dataset, ForecastCase, VariableKind};
pub use dist::{Predictive, PredictiveDist};
pub use error::{Error, Result};
pub use grouping::{make_grouping, GroupingKind, GroupingScheme};
pub use harness::{ExperimentSpec, Method};
pub use model_io::FittedModel;
pub use verification::ScoreReport;
pub use window::TrainingSet;
