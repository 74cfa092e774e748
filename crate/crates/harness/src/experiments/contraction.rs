use treecast_core::adversary::{attack_bruteforce, attack_greedy, sample_mask, Objective, MAX_BRUTEFORCE};
use treecast_core::broadcast::sample_leaves_with;
use treecast_core::inference::bp_paired_chain;
use treecast_core::rng::{stream, Purpose};
use treecast_core::{LeafChannel, Spin};

use rand::Rng;

use super::series::{run_series, SeriesSpec};
use super::{label, point, shape};
use crate::config::ExperimentConfig;
use crate::engine::{par_map, trial_seed, Strategy};
use crate::error::{HarnessError, Result};
use crate::output::{Check, Report};
use crate::stats::{step_non_increasing, trend, MeanCi, Status};

pub fn run(cfg: &ExperimentConfig, workers: usize) -> Result<Report> {
    let strategy = Strategy::parse(&cfg.strategy_or("signpush"))?;
    let mut report = Report::default();
    for &b in cfg.require_arity()? {
        for &t in cfg.require_depth()? {
            for &eps in cfg.require_epsilon()? {
                for &rho in cfg.require_rho()? {
                    if strategy == Strategy::Bruteforce {
                        paired_with_greedy(cfg, &mut report, b, t, eps, rho, workers)?;
                        continue;
                    }
                    let spec = SeriesSpec {
                        b,
                        epsilon: eps,
                        rho,
                        strategy,
                        target: cfg.target,
                    };
                    let s = run_series(cfg, spec, &[t], workers)?.remove(0);
                    let p = point(cfg, b, t, eps, &format!("semirandom:{rho}"), strategy.name());
                    push_profile(&mut report, &p, &s.level_damage);
                    let name = format!("contraction_b{b}_t{t}_eps{}_rho{}", label(eps), label(rho));
                    report.checks.push(Check::new(
                        &name,
                        trend(&s.level_damage, step_non_increasing),
                        format!("mean damage by height 1..={t} must not increase; {} engine", s.engine),
                    ));
                }
            }
        }
    }
    Ok(report)
}

fn push_profile(report: &mut Report, p: &crate::output::Point, profile: &[MeanCi]) {
    for (i, m) in profile.iter().enumerate() {
        report.rows.push(p.row(&format!("damage_height_{}", i + 1), *m));
    }
    for (i, w) in profile.windows(2).enumerate() {
        let mut row = p.exact(&format!("damage_ratio_height_{}", i + 2), w[1].mean / w[0].mean);
        row.ci_method = "ratio-of-means".into();
        report.rows.push(row);
    }
}

/// Exact worst case and greedy on the same instances. Bruteforce maximizes
/// the root damage only, so the comparison is made at the root.
fn paired_with_greedy(
    cfg: &ExperimentConfig,
    report: &mut Report,
    b: usize,
    t: usize,
    eps: f64,
    rho: f64,
    workers: usize,
) -> Result<()> {
    let shape = shape(b, t)?;
    let ch = LeafChannel::CLEAN;
    let key = [b as u64, t as u64, eps.to_bits()];
    let per_trial = par_map(workers, cfg.trials, |i| {
        let seed = trial_seed(cfg.seed, &cfg.id, &key, i as u64);
        let root = Spin::from_bit(stream(seed, Purpose::Trial, 0).random());
        let leaves = sample_leaves_with(&shape, eps, root, &mut stream(seed, Purpose::Tree, 0))?;
        let mask = sample_mask(rho, shape.leaf_count(), seed)?;
        if mask.popcount() > MAX_BRUTEFORCE {
            return Err(HarnessError::Runtime(format!(
                "mask permits {} leaves; bruteforce is limited to {MAX_BRUTEFORCE}",
                mask.popcount()
            )));
        }
        let (bf, _) = attack_bruteforce(&shape, &leaves, &mask, eps, ch, Objective::Damage)?;
        let (gr, _) = attack_greedy(&shape, &leaves, &mask, eps, ch, Objective::Damage, shape.leaf_count())?;
        let a = bp_paired_chain(&shape, &leaves, &bf.leaves, eps, ch)?;
        let g = bp_paired_chain(&shape, &leaves, &gr.leaves, eps, ch)?;
        Ok((
            a.iter().map(|p| p.damage()).collect::<Vec<_>>(),
            g.iter().map(|p| p.damage()).collect::<Vec<_>>(),
        ))
    })?;
    let profile = |pick: fn(&(Vec<f64>, Vec<f64>)) -> &Vec<f64>| -> Vec<MeanCi> {
        (1..=t)
            .map(|h| MeanCi::from_samples(&per_trial.iter().map(|x| pick(x)[h]).collect::<Vec<_>>()))
            .collect()
    };
    let bf = profile(|x| &x.0);
    let gr = profile(|x| &x.1);
    let budget = format!("semirandom:{rho}");
    push_profile(report, &point(cfg, b, t, eps, &budget, "bruteforce"), &bf);
    push_profile(report, &point(cfg, b, t, eps, &budget, "greedy"), &gr);
    let violations = per_trial
        .iter()
        .filter(|(a, g)| g[t] > a[t] * (1.0 + 1e-12) + 1e-15)
        .count();
    report.checks.push(Check::new(
        &format!("greedy_below_bruteforce_b{b}_t{t}_eps{}_rho{}", label(eps), label(rho)),
        Status::from_bool(violations == 0),
        format!("{violations} of {} instances with greedy root damage above the exact maximum", cfg.trials),
    ));
    Ok(())
}
