//! Front end for `pseudopost-core`: microdata and draws files, TOML run
//! configuration, rayon-parallel runners, and report rendering.

pub mod cli;
pub mod config;
pub mod data;
pub mod draws;
pub mod error;
pub mod report;
pub mod run;

pub use error::{CliError, Result};
