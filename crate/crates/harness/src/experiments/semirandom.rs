use rand::Rng;

use treecast_core::adversary::{sample_mask, validate_attack, AdversaryBudget, Attack};
use treecast_core::broadcast::sample_leaves_with;
use treecast_core::coupling::{semirandom_coupling_adversary, CouplingParams};
use treecast_core::inference::bp_root;
use treecast_core::rng::{stream, Purpose};
use treecast_core::{Belief, LeafChannel, Spin};

use super::series::{run_series, SeriesSpec};
use super::{label, point, shape};
use crate::config::ExperimentConfig;
use crate::engine::{par_map, trial_seed, Strategy};
use crate::error::Result;
use crate::output::{Check, Report};
use crate::stats::{half_or_less, step_decreasing, trend, MeanCi, Status};

pub fn run(cfg: &ExperimentConfig, workers: usize) -> Result<Report> {
    let mut report = Report::default();
    if !cfg.epsilon.is_empty() {
        damage_tables(cfg, &mut report, workers)?;
    }
    if !cfg.coupling_epsilon.is_empty() {
        coupling_rows(cfg, &mut report, workers)?;
    }
    if cfg.epsilon.is_empty() && cfg.coupling_epsilon.is_empty() {
        cfg.require_epsilon()?;
    }
    Ok(report)
}

fn damage_tables(cfg: &ExperimentConfig, report: &mut Report, workers: usize) -> Result<()> {
    let strategy = Strategy::parse(&cfg.strategy_or("signpush"))?;
    let depths = cfg.require_depth()?;
    for &b in cfg.require_arity()? {
        for &eps in cfg.require_epsilon()? {
            let rhos = if cfg.rho.is_empty() { vec![eps / 4.0] } else { cfg.rho.clone() };
            for rho in rhos {
                let budget = cfg
                    .budget_for(rho)?
                    .map_or_else(|| "none".to_string(), |b| b.to_string());
                let spec = SeriesSpec {
                    b,
                    epsilon: eps,
                    rho,
                    strategy,
                    target: cfg.target,
                };
                let series = run_series(cfg, spec, depths, workers)?;
                for s in &series {
                    let p = point(cfg, b, s.t, eps, &budget, strategy.name());
                    report.rows.push(p.row("root_tv_damage", s.root_tv));
                    if let Some(f) = s.flips {
                        report.rows.push(p.row("flip_count", f));
                    }
                }
                let tvs: Vec<MeanCi> = series.iter().map(|s| s.root_tv).collect();
                let tag = format!("b{b}_eps{}_rho{}", label(eps), label(rho));
                let engine = series.first().map_or("tree", |s| s.engine);
                if rho == 0.0 || strategy == Strategy::None {
                    report.checks.push(Check::new(
                        &format!("zero_budget_damage_{tag}"),
                        Status::from_bool(tvs.iter().all(|m| m.mean == 0.0)),
                        "no corruption means no damage",
                    ));
                } else if tvs.len() > 1 {
                    let (first, last) = (&tvs[0], &tvs[tvs.len() - 1]);
                    report.checks.push(Check::new(
                        &format!("damage_trend_{tag}"),
                        trend(&tvs, step_decreasing),
                        format!("root TV damage must decrease with depth; {engine} engine"),
                    ));
                    report.checks.push(Check::new(
                        &format!("damage_halving_{tag}"),
                        half_or_less(first, last),
                        format!(
                            "t={}: {:e} [{:e}, {:e}]; t={}: {:e} [{:e}, {:e}]; {engine} engine",
                            series[0].t,
                            first.mean,
                            first.ci_low,
                            first.ci_high,
                            series[series.len() - 1].t,
                            last.mean,
                            last.ci_low,
                            last.ci_high
                        ),
                    ));
                }
            }
        }
    }
    Ok(())
}

fn correct(belief: Belief, root: Spin) -> f64 {
    match belief.map_spin() {
        Some(s) if s == root => 1.0,
        Some(_) => 0.0,
        None => 0.5,
    }
}

/// Coupling adversary at rate `xi`: under a `+` root it replaces the leaves
/// by the coupled configuration, under a `-` root it leaves them alone, so
/// both roots yield leaves with the `-` law.
fn coupling_rows(cfg: &ExperimentConfig, report: &mut Report, workers: usize) -> Result<()> {
    for &b in cfg.require_arity()? {
        for &t in cfg.require_depth()? {
            for &eps in cfg.require_coupling_epsilon()? {
                let s = shape(b, t)?;
                let xi = treecast_core::coupling::xi(eps);
                let key = [b as u64, t as u64, eps.to_bits(), 1];
                let budget = AdversaryBudget::SemirandomRho(xi);
                let outs = par_map(workers, cfg.trials, |i| {
                    let seed = trial_seed(cfg.seed, &cfg.id, &key, i as u64);
                    let params = CouplingParams::new(s, eps, seed)?;
                    let beps = params.broadcast_epsilon();
                    let root = Spin::from_bit(stream(seed, Purpose::Trial, 0).random());
                    let x = sample_leaves_with(&s, beps, root, &mut stream(seed, Purpose::Tree, 0))?;
                    let mask = sample_mask(xi, s.leaf_count(), seed)?;
                    let attacked = if root.is_plus() {
                        semirandom_coupling_adversary(&params, &mask, &x)?.output
                    } else {
                        x.clone()
                    };
                    let attack = Attack::between(&x, &attacked);
                    let valid = validate_attack(&attack, &budget, Some(&mask), &s).is_ok();
                    let clean = bp_root(&s, &x, beps, LeafChannel::CLEAN)?;
                    let z = bp_root(&s, &attacked, beps, LeafChannel::CLEAN)?;
                    Ok((correct(clean, root), correct(z, root), valid, attack.flip_count() as f64))
                })?;
                let n = outs.len();
                let acc = MeanCi::proportion(outs.iter().map(|o| o.1).sum(), n);
                let clean = MeanCi::proportion(outs.iter().map(|o| o.0).sum(), n);
                let invalid = outs.iter().filter(|o| !o.2).count();
                let p = point(cfg, b, t, eps, &budget.to_string(), "coupling");
                report.rows.push(p.row("coupling_accuracy", acc));
                report.rows.push(p.row("clean_accuracy", clean));
                report.rows.push(p.row(
                    "flip_count",
                    MeanCi::from_samples(&outs.iter().map(|o| o.3).collect::<Vec<_>>()),
                ));
                report.rows.push(p.exact("xi", xi));
                let tag = format!("b{b}_t{t}_eps{}", label(eps));
                report.checks.push(Check::new(
                    &format!("coupling_chance_{tag}"),
                    Status::from_bool(acc.contains(0.5)),
                    format!(
                        "attacked accuracy {:.4} [{:.4}, {:.4}], clean accuracy {:.4}",
                        acc.mean, acc.ci_low, acc.ci_high, clean.mean
                    ),
                ));
                report.checks.push(Check::new(
                    &format!("coupling_budget_{tag}"),
                    Status::from_bool(invalid == 0),
                    format!("{invalid} attacks outside the semirandom budget"),
                ));
            }
        }
    }
    Ok(())
}
