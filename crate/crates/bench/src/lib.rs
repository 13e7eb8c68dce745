//! Training, evaluation, replay and reporting front end for the
//! action-space benchmark.

pub mod benchmark;
pub mod cli;
pub mod config;
pub mod error;
pub mod eval;
pub mod layout;
pub mod replay;
pub mod report;
pub mod svg;
pub mod train;

pub use config::{expand_spaces, parse_seeds, PerturbationProfile, RunConfig};
pub use error::{CliError, CliResult};
