use rand::Rng;

use treecast_core::adversary::{attack_spread_signpush, validate_attack, AdversaryBudget};
use treecast_core::broadcast::sample_leaves_with;
use treecast_core::inference::{bp_root, tv_from_biases};
use treecast_core::rng::{stream, Purpose};
use treecast_core::robust::{spread_alg, RobustParams};
use treecast_core::{LeafChannel, Spin};

use super::{label, point, shape};
use crate::config::ExperimentConfig;
use crate::engine::{par_map, trial_seed};
use crate::error::Result;
use crate::output::{Check, Report};
use crate::stats::{MeanCi, Status};

pub fn run(cfg: &ExperimentConfig, workers: usize) -> Result<Report> {
    let mut report = Report::default();
    let c = cfg.require_c()?;
    let delta = cfg.require_delta()?;
    for &b in cfg.require_arity()? {
        for &t in cfg.require_depth()? {
            for &eps in cfg.require_epsilon()? {
                let s = shape(b, t)?;
                let params = RobustParams::new(s, eps, c, delta, cfg.k)?;
                let budget = AdversaryBudget::SpreadCK { c, k: params.k };
                let key = [b as u64, t as u64, eps.to_bits()];
                let outs = par_map(workers, cfg.trials, |i| {
                    let seed = trial_seed(cfg.seed, &cfg.id, &key, i as u64);
                    let root = Spin::from_bit(stream(seed, Purpose::Trial, 0).random());
                    let leaves = sample_leaves_with(&s, eps, root, &mut stream(seed, Purpose::Tree, 0))?;
                    let attack = attack_spread_signpush(&s, &leaves, c, params.k, cfg.target.spin(root))?;
                    let valid = validate_attack(&attack, &budget, None, &s).is_ok();
                    let truth = bp_root(&s, &leaves, eps, LeafChannel::CLEAN)?;
                    let plain = bp_root(&s, &attack.leaves, eps, LeafChannel::CLEAN)?;
                    let robust = spread_alg(&attack.leaves, &params, seed)?;
                    Ok((tv_from_biases(truth, robust), tv_from_biases(truth, plain), valid))
                })?;
                let col = |f: fn(&(f64, f64, bool)) -> f64| MeanCi::from_samples(&outs.iter().map(f).collect::<Vec<_>>());
                let tv_spread = col(|o| o.0);
                let tv_plain = col(|o| o.1);
                let gap = col(|o| o.1 - o.0);
                let p = point(cfg, b, t, eps, &budget.to_string(), "spread_signpush");
                report.rows.push(p.row("tv_spread_alg", tv_spread));
                report.rows.push(p.row("tv_plain_bp", tv_plain));
                report.rows.push(p.row("tv_gap_plain_minus_spread", gap));
                report.rows.push(p.exact("psi", params.psi()));
                report.rows.push(p.exact("k", params.k as f64));
                let tag = format!("b{b}_t{t}_eps{}", label(eps));
                let status = if gap.ci_low > 0.0 {
                    Status::Pass
                } else if gap.ci_high < 0.0 {
                    Status::Fail
                } else {
                    Status::Inconclusive
                };
                report.checks.push(Check::new(
                    &format!("spread_beats_plain_{tag}"),
                    status,
                    format!(
                        "spread {:.5} vs plain {:.5}; paired gap {:.5} [{:.5}, {:.5}]",
                        tv_spread.mean, tv_plain.mean, gap.mean, gap.ci_low, gap.ci_high
                    ),
                ));
                let invalid = outs.iter().filter(|o| !o.2).count();
                report.checks.push(Check::new(
                    &format!("spread_budget_{tag}"),
                    Status::from_bool(invalid == 0),
                    format!("{invalid} attacks outside the spread budget"),
                ));
            }
        }
    }
    Ok(report)
}
