use treecast_core::broadcast::sample_leaves_with;
use treecast_core::oracle::{leaf_law, MAX_NODES};
use treecast_core::rng::{stream, Purpose};
use treecast_core::Spin;

use super::series::{run_series, SeriesSpec};
use super::{label, point, shape};
use crate::config::{ExperimentConfig, Target};
use crate::engine::{par_map, trial_seed, Strategy, TREE_ENGINE_MAX_LEAVES};
use crate::error::{HarnessError, Result};
use crate::output::{Check, Report};
use crate::stats::{mean, pairwise_sum, MeanCi, Status};

/// Relative tolerance for exact-versus-formula comparisons.
pub const EXACT_TOLERANCE: f64 = 1e-12;
/// Monte Carlo agreement radius in standard errors.
pub const MC_SIGMAS: f64 = 3.0;
/// Lower bound reported for `E[X_root | +]`.
pub const ROOT_BIAS_FLOOR: f64 = 0.75;

fn geometric(q: f64, r: usize) -> f64 {
    if (q - 1.0).abs() < 1e-12 {
        r as f64
    } else {
        (q.powi(r as i32) - 1.0) / (q - 1.0)
    }
}

/// `Var[S_r | +] = (1 - eps^2) d^r ((eps^2 d)^r - 1)/(eps^2 d - 1)`.
pub fn variance_formula(d: usize, eps: f64, r: usize) -> f64 {
    (1.0 - eps * eps) * (d as f64).powi(r as i32) * geometric(eps * eps * d as f64, r)
}

/// The same expression with the factor `(1 - eps)^2`.
pub fn variance_formula_alt(d: usize, eps: f64, r: usize) -> f64 {
    (1.0 - eps).powi(2) * (d as f64).powi(r as i32) * geometric(eps * eps * d as f64, r)
}

pub fn run(cfg: &ExperimentConfig, workers: usize) -> Result<Report> {
    match cfg.mode.as_deref().unwrap_or("variance") {
        "variance" => variance(cfg, workers),
        "root_bias" => root_bias(cfg, workers),
        other => Err(HarnessError::config("run.mode", format!("{other:?} is not one of variance, root_bias"))),
    }
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= EXACT_TOLERANCE * a.abs().max(b.abs()).max(1.0)
}

fn variance(cfg: &ExperimentConfig, workers: usize) -> Result<Report> {
    let mut report = Report::default();
    for &b in cfg.require_arity()? {
        for &eps in cfg.require_epsilon()? {
            for &r in cfg.require_depth()? {
                let s = shape(b, r)?;
                let p = point(cfg, b, r, eps, "none", "none");
                let adjudicated = variance_formula(b, eps, r);
                let alt = variance_formula_alt(b, eps, r);
                report.rows.push(p.exact("var_formula_1_minus_eps2", adjudicated));
                report.rows.push(p.exact("var_formula_1_minus_eps_all_sq", alt));
                report.rows.push(p.exact("mean_formula", (eps * b as f64).powi(r as i32)));
                let tag = format!("b{b}_eps{}_r{r}", label(eps));
                if s.node_count() <= MAX_NODES {
                    let law = leaf_law(&s, eps, Spin::Plus)?;
                    let n = s.leaf_count();
                    let sums: Vec<f64> = (0..law.len())
                        .map(|code| 2.0 * (code as u64).count_ones() as f64 - n as f64)
                        .collect();
                    let m = pairwise_sum(&law.iter().zip(&sums).map(|(p, s)| p * s).collect::<Vec<_>>());
                    let v = pairwise_sum(&law.iter().zip(&sums).map(|(p, s)| p * (s - m).powi(2)).collect::<Vec<_>>());
                    report.rows.push(p.exact("mean_exact", m));
                    report.rows.push(p.exact("var_exact", v));
                    report.checks.push(Check::new(
                        &format!("variance_exact_{tag}"),
                        Status::from_bool(close(v, adjudicated)),
                        format!(
                            "exact {v} vs (1-eps^2) form {adjudicated}: {}; vs (1-eps)^2 form {alt}: {}",
                            if close(v, adjudicated) { "match" } else { "mismatch" },
                            if close(v, alt) { "match" } else { "mismatch" },
                        ),
                    ));
                }
                if s.leaf_count() <= TREE_ENGINE_MAX_LEAVES {
                    let key = [b as u64, r as u64, eps.to_bits()];
                    let sums = par_map(workers, cfg.trials, |i| {
                        let seed = trial_seed(cfg.seed, &cfg.id, &key, i as u64);
                        let leaves = sample_leaves_with(&s, eps, Spin::Plus, &mut stream(seed, Purpose::Tree, 0))?;
                        Ok(leaves.magnetization() as f64)
                    })?;
                    let (v, se) = variance_with_se(&sums);
                    let mc = MeanCi::from_parts(sums.len(), v, se);
                    report.rows.push(p.row("var_mc", mc));
                    report.rows.push(p.row("mean_mc", MeanCi::from_samples(&sums)));
                    let ok = (v - adjudicated).abs() <= MC_SIGMAS * se;
                    report.checks.push(Check::new(
                        &format!("variance_mc_{tag}"),
                        Status::from_bool(ok),
                        format!(
                            "Monte Carlo {v} +- {se} vs (1-eps^2) form {adjudicated} ({:.2} sigma); (1-eps)^2 form {alt} ({:.2} sigma)",
                            (v - adjudicated) / se,
                            (v - alt) / se
                        ),
                    ));
                }
            }
        }
    }
    Ok(report)
}

/// Sample variance and its standard error `sqrt((mu4 - sigma^4)/n)`.
pub fn variance_with_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = mean(xs);
    let c2: Vec<f64> = xs.iter().map(|x| (x - m).powi(2)).collect();
    let c4: Vec<f64> = c2.iter().map(|x| x * x).collect();
    let var = pairwise_sum(&c2) / (n - 1.0);
    let mu4 = pairwise_sum(&c4) / n;
    let s2 = pairwise_sum(&c2) / n;
    (var, ((mu4 - s2 * s2) / n).max(0.0).sqrt())
}

fn root_bias(cfg: &ExperimentConfig, workers: usize) -> Result<Report> {
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
            for s in run_series(cfg, spec, depths, workers)? {
                let p = point(cfg, b, s.t, eps, "none", "none");
                report.rows.push(p.row("root_bias_given_plus", s.signed_bias));
                report.rows.push(p.exact("root_bias_target", 7.0 / 8.0));
                let m = s.signed_bias;
                let status = if m.ci_low >= ROOT_BIAS_FLOOR {
                    Status::Pass
                } else if m.ci_high < ROOT_BIAS_FLOOR {
                    Status::Fail
                } else {
                    Status::Inconclusive
                };
                report.checks.push(Check::new(
                    &format!("root_bias_b{b}_eps{}_t{}", label(eps), s.t),
                    status,
                    format!(
                        "E[X_root|+] = {} [{}, {}] vs floor {ROOT_BIAS_FLOOR} and target 7/8; {} engine",
                        m.mean, m.ci_low, m.ci_high, s.engine
                    ),
                ));
            }
        }
    }
    Ok(report)
}
