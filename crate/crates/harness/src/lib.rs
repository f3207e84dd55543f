//! Experiment harness: configuration, synthetic task suites, method
//! comparisons, β sweeps, theory-check batches and the interactive mode.

#![forbid(unsafe_code)]
// `!(x > 0.0)` also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod experiment;
pub mod interactive;
pub mod output;
pub mod seeds;
pub mod suite;
pub mod theory_suite;

pub use config::ExperimentConfig;
pub use error::{HarnessError, Result};
