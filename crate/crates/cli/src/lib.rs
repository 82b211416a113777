//! Configuration-driven experiments on top of `rbanova-core`: benchmark
//! construction, run modes over a tolerance ladder, quasi-Monte Carlo
//! reference moments and the CSV/text artifacts.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod experiment;
pub mod output;

pub use config::ExperimentConfig;
pub use error::CliError;
pub use experiment::{run_experiment, Outcome};
