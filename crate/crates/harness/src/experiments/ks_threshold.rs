use super::series::{run_series, SeriesSpec};
use super::{label, point};
use crate::config::{ExperimentConfig, Target};
use crate::engine::Strategy;
use crate::error::Result;
use crate::output::{Check, Report};
use crate::stats::{step_decreasing, step_not_decreasing, trend, Status};

pub fn run(cfg: &ExperimentConfig, workers: usize) -> Result<Report> {
    let mut report = Report::default();
    let depths = cfg.require_depth()?;
    for &b in cfg.require_arity()? {
        for &eps in cfg.require_epsilon()? {
            let spec = SeriesSpec {
                b,
                epsilon: eps,
                rho: 0.0,
                strategy: Strategy::None,
                target: Target::Against,
            };
            let series = run_series(cfg, spec, depths, workers)?;
            let snr = b as f64 * eps * eps;
            for s in &series {
                let p = point(cfg, b, s.t, eps, "none", "none");
                report.rows.push(p.exact("b_eps_sq", snr));
                report.rows.push(p.row("abs_root_bias", s.abs_bias));
            }
            let means: Vec<_> = series.iter().map(|s| s.abs_bias).collect();
            let name = format!("ks_b{b}_eps{}", label(eps));
            let engine = series.first().map_or("tree", |s| s.engine);
            let check = if eps == 0.0 {
                let zero = means.iter().all(|m| m.mean == 0.0);
                Check::new(&name, Status::from_bool(zero), "no information at zero bias")
            } else if snr > 1.0 {
                Check::new(
                    &name,
                    trend(&means, step_not_decreasing),
                    format!("above threshold (b eps^2 = {snr}); E|X_root| must not drop with depth; {engine} engine"),
                )
            } else {
                Check::new(
                    &name,
                    trend(&means, step_decreasing),
                    format!("below threshold (b eps^2 = {snr}); E|X_root| must decrease with depth; {engine} engine"),
                )
            };
            report.checks.push(check);
        }
    }
    Ok(report)
}
