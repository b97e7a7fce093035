//! Experiment runner, file formats and command line built on `protofid-core`.
//!
//! * [`io`]: CSV datasets, rule files, JSON and CSV outputs, network checkpoints.
//! * [`harness`]: the repeated cross-validation experiment and its summaries.
//! * [`report`]: report tables and the on-disk bundle.
//! * [`cli`]: the `protofid` command.

pub mod cli;
pub mod harness;
pub mod io;
pub mod report;

pub use harness::{run_experiment, ExperimentConfig, Model, Stages, SubsetMode, SurrogateFit};
pub use report::Report;
