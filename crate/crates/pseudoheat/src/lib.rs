//! File formats, configuration and experiment drivers around `pseudoheat-core`.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod dataset;
pub mod error;
pub mod format;
pub mod plot;
pub mod run;

pub use config::{parse_config, ExperimentConfig};
pub use error::{Error, Result};
pub use pseudoheat_core as core;
