use rand::seq::index::sample;
use rand::Rng;

use treecast_core::robust::{posterior_ratio_bound_check, psi_for};
use treecast_core::rng::{stream, Purpose};
use treecast_core::{Spin, SpinVector, TreeShape};

use super::point;
use crate::config::ExperimentConfig;
use crate::engine::{par_map, trial_seed};
use crate::error::{HarnessError, Result};
use crate::output::{Check, Report};
use crate::stats::Status;

/// Leaf count up to which model posteriors are enumerated.
pub const MAX_LEAVES: usize = 16;
/// Rounding slack on the squared-channel interval, which is tight.
pub const TIE_RTOL: f64 = 1e-12;

struct Instance {
    within: bool,
    below: bool,
    within_squared: bool,
    upper_use: f64,
    lower_use: f64,
    c: usize,
}

pub fn run(cfg: &ExperimentConfig, workers: usize) -> Result<Report> {
    let arities = if cfg.arity.is_empty() { vec![2, 3] } else { cfg.arity.clone() };
    let depths = if cfg.depth.is_empty() { vec![1, 2, 3] } else { cfg.depth.clone() };
    let shapes: Vec<TreeShape> = arities
        .iter()
        .flat_map(|&b| depths.iter().map(move |&t| (b, t)))
        .filter_map(|(b, t)| TreeShape::new(b, t).ok())
        .filter(|s| s.leaf_count() <= MAX_LEAVES && s.node_count() <= treecast_core::oracle::MAX_NODES)
        .collect();
    if shapes.is_empty() {
        return Err(HarnessError::config("tree.depth", format!("no shape has at most {MAX_LEAVES} leaves")));
    }
    let results = par_map(workers, cfg.trials, |i| {
        let seed = trial_seed(cfg.seed, &cfg.id, &[], i as u64);
        let mut rng = stream(seed, Purpose::Instance, 0);
        let shape = shapes[rng.random_range(0..shapes.len())];
        let c = cfg.c.unwrap_or_else(|| rng.random_range(1..=2));
        let delta = cfg.delta.unwrap_or_else(|| 1.0 - rng.random::<f64>());
        let eps = if cfg.epsilon.is_empty() {
            rng.random::<f64>()
        } else {
            cfg.epsilon[rng.random_range(0..cfg.epsilon.len())]
        };
        let n = shape.leaf_count();
        let leaves = SpinVector::from_spins((0..n).map(|_| Spin::from_bit(rng.random())));
        let count = rng.random_range(0..=c.min(n));
        let flips = sample(&mut rng, n, count).into_vec();
        let psi = psi_for(c, delta);
        let r = posterior_ratio_bound_check(&shape, &leaves, &flips, c, eps, psi)?;
        let q = ((1.0 + psi) / (1.0 - psi)).powi(2 * c as i32);
        Ok(Instance {
            within: r.within(),
            below: r.ratio < r.lower,
            within_squared: (1.0 / q) * (1.0 - TIE_RTOL) <= r.ratio && r.ratio <= q * (1.0 + TIE_RTOL),
            upper_use: r.ratio.ln() / (4.0 * psi * c as f64),
            lower_use: (1.0 - r.ratio) / (2.0 * psi * c as f64),
            c,
        })
    })?;
    let mut report = Report::default();
    for c in 1..=2 {
        let sel: Vec<&Instance> = results.iter().filter(|r| r.c == c).collect();
        if sel.is_empty() {
            continue;
        }
        let p = point(cfg, 0, 0, f64::NAN, &format!("cflip:{c}"), "random_flips");
        report.rows.push(p.exact("instances", sel.len() as f64));
        report.rows.push(p.exact("violations", sel.iter().filter(|r| !r.within).count() as f64));
        report.rows.push(p.exact("violations_below", sel.iter().filter(|r| r.below).count() as f64));
        report.rows.push(p.exact("violations_squared_channel", sel.iter().filter(|r| !r.within_squared).count() as f64));
        report.rows.push(p.exact("max_upper_bound_use", sel.iter().map(|r| r.upper_use).fold(f64::MIN, f64::max)));
        report.rows.push(p.exact("max_lower_bound_use", sel.iter().map(|r| r.lower_use).fold(f64::MIN, f64::max)));
    }
    let violations = results.iter().filter(|r| !r.within).count();
    report.checks.push(Check::new(
        "psi_ratio_bound",
        Status::from_bool(violations == 0),
        format!(
            "{violations} violations over {} instances ({} below 1 - 2 psi c)",
            results.len(),
            results.iter().filter(|r| r.below).count()
        ),
    ));
    let squared = results.iter().filter(|r| !r.within_squared).count();
    report.checks.push(Check::new(
        "psi_ratio_squared_channel",
        Status::from_bool(squared == 0),
        format!("{squared} instances outside [q^-2c, q^2c], q = (1 + psi)/(1 - psi)"),
    ));
    Ok(report)
}
