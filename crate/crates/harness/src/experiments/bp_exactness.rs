use rand::Rng;

use treecast_core::inference::bp_root;
use treecast_core::oracle::{posterior_oracle, MAX_NODES};
use treecast_core::rng::{stream, Purpose};
use treecast_core::{LeafChannel, Spin, SpinVector, TreeShape};

use super::point;
use crate::config::{ExperimentConfig, PsiSetting};
use crate::engine::{par_map, trial_seed};
use crate::error::{HarnessError, Result};
use crate::output::{Check, Report};
use crate::stats::{MeanCi, Status};

pub const TOLERANCE: f64 = 1e-12;

struct Instance {
    b: usize,
    t: usize,
    error: f64,
}

pub fn run(cfg: &ExperimentConfig, workers: usize) -> Result<Report> {
    let arities = if cfg.arity.is_empty() { vec![2, 3] } else { cfg.arity.clone() };
    let depths = if cfg.depth.is_empty() { vec![1, 2, 3] } else { cfg.depth.clone() };
    let shapes: Vec<TreeShape> = arities
        .iter()
        .flat_map(|&b| depths.iter().map(move |&t| (b, t)))
        .filter_map(|(b, t)| TreeShape::new(b, t).ok())
        .filter(|s| s.node_count() <= MAX_NODES)
        .collect();
    if shapes.is_empty() {
        return Err(HarnessError::config("tree.depth", format!("no shape has at most {MAX_NODES} nodes")));
    }
    let results = par_map(workers, cfg.trials, |i| {
        let seed = trial_seed(cfg.seed, &cfg.id, &[], i as u64);
        let mut rng = stream(seed, Purpose::Instance, 0);
        let shape = shapes[rng.random_range(0..shapes.len())];
        let eps = if cfg.epsilon.is_empty() {
            rng.random::<f64>()
        } else {
            cfg.epsilon[rng.random_range(0..cfg.epsilon.len())]
        };
        let psi = match cfg.psi {
            PsiSetting::Fixed(p) => p,
            PsiSetting::Random => 1.0 - rng.random::<f64>(),
        };
        let leaves = SpinVector::from_spins((0..shape.leaf_count()).map(|_| Spin::from_bit(rng.random())));
        let ch = LeafChannel::new(psi)?;
        let bp = bp_root(&shape, &leaves, eps, ch)?;
        let exact = posterior_oracle(&shape, &leaves, eps, ch)?;
        Ok(Instance {
            b: shape.arity(),
            t: shape.depth(),
            error: (bp.bias() - exact.bias()).abs(),
        })
    })?;

    let mut report = Report::default();
    for s in &shapes {
        let errs: Vec<f64> = results
            .iter()
            .filter(|r| r.b == s.arity() && r.t == s.depth())
            .map(|r| r.error)
            .collect();
        if errs.is_empty() {
            continue;
        }
        let p = point(cfg, s.arity(), s.depth(), f64::NAN, "none", "none");
        report.rows.push(p.exact("max_abs_error", errs.iter().cloned().fold(0.0, f64::max)));
        report.rows.push(p.row("mean_abs_error", MeanCi::from_samples(&errs)));
    }
    let max = results.iter().map(|r| r.error).fold(0.0, f64::max);
    report.checks.push(Check::new(
        "oracle_equivalence",
        Status::from_bool(max <= TOLERANCE),
        format!("max |bp - oracle| = {max:e} over {} instances, tolerance {TOLERANCE:e}", results.len()),
    ));
    Ok(report)
}
