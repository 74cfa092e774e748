//! Seeded, parallel Monte Carlo experiments over the broadcast process.
//!
//! Every experiment reads an [`ExperimentConfig`], runs its trials through
//! [`engine::par_map`] with per-trial seeds, and returns a [`Report`] of CSV
//! rows plus named pass/fail/inconclusive checks. Output bytes depend only on
//! the configuration, never on the worker count.

pub mod config;
pub mod engine;
pub mod error;
pub mod experiments;
pub mod output;
pub mod population;
pub mod stats;

pub use config::{load_config, ExperimentConfig};
pub use engine::TrialRecord;
pub use error::{HarnessError, Result};
pub use experiments::{run_experiment, RunOptions};
pub use output::{Check, Report, Row};
pub use stats::{MeanCi, Status};
