use treecast_core::broadcast::sample_leaves_with;
use treecast_core::coupling::{couple_once, fraction_adversary_from, CouplingParams};
use treecast_core::oracle::{leaf_law, tv_distance};
use treecast_core::rng::{stream, Purpose};
use treecast_core::Spin;

use super::{label, point, shape};
use crate::config::ExperimentConfig;
use crate::engine::{par_map, trial_seed};
use crate::error::{HarnessError, Result};
use crate::output::{Check, Report};
use crate::stats::{step_non_increasing, trend, MeanCi, Status};

/// Leaf count up to which the exact mode enumerates leaf laws.
pub const EXACT_MAX_LEAVES: usize = 16;
/// Allowed L1 distance in units of the summed binomial standard errors.
pub const L1_SIGMAS: f64 = 3.0;

struct Outcome {
    code: u64,
    coupled: bool,
    flip_fraction: f64,
    check_failed: bool,
}

fn trials(cfg: &ExperimentConfig, b: usize, t: usize, eps: f64, rho: f64, workers: usize) -> Result<Vec<Outcome>> {
    let s = shape(b, t)?;
    let key = [b as u64, t as u64, eps.to_bits()];
    par_map(workers, cfg.trials, |i| {
        let seed = trial_seed(cfg.seed, &cfg.id, &key, i as u64);
        let params = CouplingParams::new(s, eps, seed)?;
        let x = sample_leaves_with(&s, params.broadcast_epsilon(), Spin::Plus, &mut stream(seed, Purpose::Tree, 0))?;
        let out = couple_once(&params, &x)?;
        let check_failed = out.check(&s).is_err();
        let f = fraction_adversary_from(&out, rho)?;
        Ok(Outcome {
            code: if s.leaf_count() <= 64 { f.leaves.to_code() } else { 0 },
            coupled: f.coupled,
            flip_fraction: f.flip_count as f64 / s.leaf_count() as f64,
            check_failed,
        })
    })
}

pub fn run(cfg: &ExperimentConfig, workers: usize) -> Result<Report> {
    let exact = match cfg.mode.as_deref().unwrap_or("exact") {
        "exact" => true,
        "failure_rate" => false,
        other => {
            return Err(HarnessError::config(
                "run.mode",
                format!("{other:?} is not one of exact, failure_rate"),
            ))
        }
    };
    let mut report = Report::default();
    for &b in cfg.require_arity()? {
        for &eps in cfg.require_coupling_epsilon()? {
            for &rho in cfg.require_rho()? {
                let mut rates = Vec::new();
                for &t in cfg.require_depth()? {
                    let outs = trials(cfg, b, t, eps, rho, workers)?;
                    let params = CouplingParams::new(shape(b, t)?, eps, cfg.seed)?;
                    let p = point(cfg, b, t, eps, &format!("fraction:{rho}"), "coupling");
                    let n = outs.len();
                    let failures = outs.iter().filter(|o| o.check_failed).count();
                    let coupled = outs.iter().filter(|o| o.coupled).count();
                    let failure = MeanCi::proportion((n - coupled) as f64, n);
                    report.rows.push(p.row("coupling_failure_rate", failure));
                    report.rows.push(p.row(
                        "flip_fraction",
                        MeanCi::from_samples(&outs.iter().map(|o| o.flip_fraction).collect::<Vec<_>>()),
                    ));
                    report.rows.push(p.exact("xi_pow_t", params.xi().powi(t as i32)));
                    report.rows.push(p.exact("rho_pow_t", rho.powi(t as i32)));
                    report.rows.push(p.exact(
                        "analysis_threshold_fraction",
                        params.analysis_threshold() / params.shape.leaf_count() as f64,
                    ));
                    report.rows.push(p.exact("check_violations", failures as f64));
                    let tag = format!("b{b}_t{t}_eps{}_rho{}", label(eps), label(rho));
                    report.checks.push(Check::new(
                        &format!("coupling_invariants_{tag}"),
                        Status::from_bool(failures == 0),
                        format!("{failures} trials violated leaf consistency or mark logic"),
                    ));
                    rates.push(failure);
                    if exact {
                        exact_rows(&mut report, &p, &params, &outs, rho, &tag)?;
                    }
                }
                if !exact && rates.len() > 1 {
                    report.checks.push(Check::new(
                        &format!("failure_trend_b{b}_eps{}_rho{}", label(eps), label(rho)),
                        trend(&rates, step_non_increasing),
                        format!(
                            "failure rates by depth: {}",
                            rates
                                .iter()
                                .map(|r| format!("{:.4} [{:.4}, {:.4}]", r.mean, r.ci_low, r.ci_high))
                                .collect::<Vec<_>>()
                                .join(", ")
                        ),
                    ));
                }
            }
        }
    }
    Ok(report)
}

fn exact_rows(
    report: &mut Report,
    p: &crate::output::Point,
    params: &CouplingParams,
    outs: &[Outcome],
    rho: f64,
    tag: &str,
) -> Result<()> {
    let s = params.shape;
    if s.leaf_count() > EXACT_MAX_LEAVES {
        return Err(HarnessError::config(
            "tree.depth",
            format!("exact mode needs at most {EXACT_MAX_LEAVES} leaves"),
        ));
    }
    let beps = params.broadcast_epsilon();
    let minus = leaf_law(&s, beps, Spin::Minus)?;
    let plus = leaf_law(&s, beps, Spin::Plus)?;
    let n = outs.len();
    let mut counts = vec![0usize; minus.len()];
    for o in outs {
        counts[o.code as usize] += 1;
    }
    let emp: Vec<f64> = counts.iter().map(|&c| c as f64 / n as f64).collect();
    let l1: f64 = emp.iter().zip(&minus).map(|(a, b)| (a - b).abs()).sum();
    let bound: f64 = minus.iter().map(|&q| (q * (1.0 - q) / n as f64).sqrt()).sum();
    let clean = tv_distance(&plus, &minus);
    report.rows.push(p.exact("tv_estimate", 0.5 * l1));
    report.rows.push(p.exact("tv_sampling_bound", 0.5 * bound));
    report.rows.push(p.exact("tv_clean_exact", clean));
    if rho >= 1.0 {
        report.checks.push(Check::new(
            &format!("coupling_law_{tag}"),
            Status::from_bool(l1 <= L1_SIGMAS * bound),
            format!("L1 {l1:.5} vs {L1_SIGMAS} x sampling bound {bound:.5}"),
        ));
    } else if rho == 0.0 {
        // with no budget the output is x itself; its distance to the minus law
        // is the clean distance, up to sampling error
        let l1_plus: f64 = emp.iter().zip(&plus).map(|(a, b)| (a - b).abs()).sum();
        let bound_plus: f64 = plus.iter().map(|&q| (q * (1.0 - q) / n as f64).sqrt()).sum();
        let ok = l1_plus <= L1_SIGMAS * bound_plus && (0.5 * l1 - clean).abs() <= 0.5 * L1_SIGMAS * bound_plus;
        report.checks.push(Check::new(
            &format!("zero_budget_law_{tag}"),
            Status::from_bool(ok),
            format!("TV estimate {:.5} vs exact clean TV {clean:.5}", 0.5 * l1),
        ));
    }
    Ok(())
}
