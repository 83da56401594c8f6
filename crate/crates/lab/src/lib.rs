//! Experiment runner for quantum virtual paths: configuration, execution,
//! reports and the acceptance suite.

pub mod acceptance;
pub mod config;
pub mod error;
pub mod report;
pub mod runner;

pub use config::ExperimentConfig;
pub use error::{LabError, Result};
pub use report::RunReport;
