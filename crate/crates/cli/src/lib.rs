//! File formats, configuration and experiment drivers for `coda-core`.
//!
//! The `coda` binary exposes four commands:
//!
//! - `gen`: write one synthetic stream per sparsity level (see [`dataset`]).
//! - `run`: decompose a stored stream frame by frame into a CSV.
//! - `sweep`: Monte Carlo phase diagram over an `s0 × m` grid.
//! - `report`: text and gnuplot renderings of a sweep CSV.

pub mod commands;
pub mod config;
pub mod dataset;
pub mod error;
pub mod report;
pub mod sweep;

pub use config::{ExperimentConfig, Overrides, Profile};
pub use error::{CliError, Result};
