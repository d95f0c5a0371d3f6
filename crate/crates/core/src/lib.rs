//! Monte Carlo simulation of adaptive platform trials with a shared control
//! arm, staggered arm entry and exit, and an ANCOVA analysis per comparison.

pub mod allocation;
pub mod analysis;
pub mod engine;
pub mod error;
pub mod model;
pub mod ocs;
pub mod outcome;
pub mod report;
pub mod runner;
pub mod scenario;
pub mod stats;

pub use error::{AnalysisError, ConfigError, Error, Result};
pub use model::ScenarioConfig;
