//! Library side of the `wic-disagree` command-line tool: configuration,
//! the five commands and their artifacts.

pub mod commands;
pub mod config;
pub mod density;
pub mod models;

pub use config::{ExperimentConfig, Method};

/// Exit status for data, configuration and usage errors.
pub const EXIT_DATA_ERROR: u8 = 2;
/// Exit status when the metric is undefined for every language.
pub const EXIT_UNDEFINED: u8 = 3;
