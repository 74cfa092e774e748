//! Experiment drivers. Each returns a report of CSV rows and named checks.

mod bp_exactness;
mod contraction;
mod inequality_grid;
mod ks_threshold;
mod lowerbound_tv;
mod moment_checks;
mod psi_bound;
mod semirandom;
mod series;
mod spread;

pub use inequality_grid::{derivative_kernel, small1_holds, small3_holds, small3_radius};
pub use moment_checks::{variance_formula, variance_formula_alt};

use treecast_core::TreeShape;

use crate::config::{Engine, ExperimentConfig};
use crate::engine::TREE_ENGINE_MAX_LEAVES;
use crate::error::{HarnessError, Result};
use crate::output::{Point, Report};

#[derive(Debug, Clone, Copy)]
pub struct RunOptions {
    pub workers: usize,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions { workers: 1 }
    }
}

pub fn run_experiment(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<Report> {
    let workers = opts.workers.max(1);
    match cfg.id.as_str() {
        "bp_exactness" => bp_exactness::run(cfg, workers),
        "ks_threshold" => ks_threshold::run(cfg, workers),
        "contraction" => contraction::run(cfg, workers),
        "moment_checks" => moment_checks::run(cfg, workers),
        "lowerbound_tv" => lowerbound_tv::run(cfg, workers),
        "semirandom_robustness" => semirandom::run(cfg, workers),
        "spread_robustness" => spread::run(cfg, workers),
        "inequality_grid" => inequality_grid::run(cfg, workers),
        "psi_bound" => psi_bound::run(cfg, workers),
        other => Err(HarnessError::config("experiment.id", format!("unknown experiment {other:?}"))),
    }
}

pub(crate) fn point(cfg: &ExperimentConfig, b: usize, t: usize, epsilon: f64, budget: &str, strategy: &str) -> Point {
    Point {
        experiment: cfg.id.clone(),
        b,
        t,
        epsilon,
        rho_or_budget: budget.to_string(),
        strategy: strategy.to_string(),
        seed: cfg.seed,
    }
}

pub(crate) fn shape(b: usize, t: usize) -> Result<TreeShape> {
    Ok(TreeShape::new(b, t)?)
}

/// Whether a series over `depths` at arity `b` runs on the population engine.
pub(crate) fn use_population(cfg: &ExperimentConfig, b: usize, depths: &[usize]) -> Result<bool> {
    let too_big = depths.iter().any(|&t| {
        TreeShape::new(b, t).map_or(true, |s| s.leaf_count() > TREE_ENGINE_MAX_LEAVES)
    });
    match cfg.engine {
        Engine::Population => Ok(true),
        Engine::Auto => Ok(too_big),
        Engine::Tree if too_big => Err(HarnessError::config(
            "run.engine",
            format!("tree engine limited to {TREE_ENGINE_MAX_LEAVES} leaves"),
        )),
        Engine::Tree => Ok(false),
    }
}

/// Compact label for a real parameter in check names.
pub(crate) fn label(x: f64) -> String {
    format!("{x}")
}
