//! Attacked-root statistics over a depth sweep, on either engine.

use crate::config::{ExperimentConfig, Target};
use crate::engine::{par_map, trial_seed, Strategy, TreeTrial};
use crate::error::{HarnessError, Result};
use crate::population::{run_population, PopulationParams};
use crate::stats::MeanCi;

use super::{shape, use_population};

#[derive(Debug, Clone)]
pub struct SeriesPoint {
    pub t: usize,
    /// Root `d_TV` between clean and attacked posteriors.
    pub root_tv: MeanCi,
    pub abs_bias: MeanCi,
    /// `E[sigma_root * X_root]`.
    pub signed_bias: MeanCi,
    pub flips: Option<MeanCi>,
    /// Mean `|X - Z|` by height `1..=t`.
    pub level_damage: Vec<MeanCi>,
    pub engine: &'static str,
}

#[derive(Debug, Clone, Copy)]
pub struct SeriesSpec {
    pub b: usize,
    pub epsilon: f64,
    pub rho: f64,
    pub strategy: Strategy,
    pub target: Target,
}

pub fn run_series(cfg: &ExperimentConfig, spec: SeriesSpec, depths: &[usize], workers: usize) -> Result<Vec<SeriesPoint>> {
    let population = use_population(cfg, spec.b, depths)?;
    depths
        .iter()
        .map(|&t| {
            if population {
                population_point(cfg, spec, t, workers)
            } else {
                tree_point(cfg, spec, t, workers)
            }
        })
        .collect()
}

fn tree_point(cfg: &ExperimentConfig, spec: SeriesSpec, t: usize, workers: usize) -> Result<SeriesPoint> {
    let trial = TreeTrial {
        shape: shape(spec.b, t)?,
        epsilon: spec.epsilon,
        rho: spec.rho,
        strategy: spec.strategy,
        target: spec.target,
    };
    let key = [spec.b as u64, t as u64, spec.epsilon.to_bits()];
    let recs = par_map(workers, cfg.trials, |i| trial.run(i as u64, trial_seed(cfg.seed, &cfg.id, &key, i as u64)))?;
    let col = |f: &dyn Fn(&crate::engine::TrialRecord) -> f64| MeanCi::from_samples(&recs.iter().map(f).collect::<Vec<_>>());
    Ok(SeriesPoint {
        t,
        root_tv: col(&|r| r.root_tv()),
        abs_bias: col(&|r| r.clean.bias().abs()),
        signed_bias: col(&|r| r.root.sign() * r.clean.bias()),
        flips: Some(col(&|r| r.flips as f64)),
        level_damage: (1..=t).map(|h| col(&|r| r.level_damage[h])).collect(),
        engine: "tree",
    })
}

fn population_point(cfg: &ExperimentConfig, spec: SeriesSpec, t: usize, workers: usize) -> Result<SeriesPoint> {
    if !matches!(spec.strategy, Strategy::Signpush | Strategy::None) {
        return Err(HarnessError::config(
            "adversary.strategy",
            "the population engine supports only signpush and none",
        ));
    }
    let key = [spec.b as u64, t as u64, spec.epsilon.to_bits(), spec.rho.to_bits()];
    let params = PopulationParams {
        arity: spec.b,
        depth: t,
        epsilon: spec.epsilon,
        rho: if spec.strategy == Strategy::None { 0.0 } else { spec.rho },
        target: spec.target.spin(treecast_core::Spin::Plus),
        population: cfg
            .population
            .unwrap_or_else(|| PopulationParams::default_population(spec.b, cfg.trials)),
        root_samples: cfg.trials,
        seed: trial_seed(cfg.seed, &cfg.id, &key, 0),
    };
    let out = run_population(&params, workers)?;
    let col = |f: &dyn Fn(&treecast_core::PairedBelief) -> f64| {
        MeanCi::from_samples(&out.root.iter().map(f).collect::<Vec<_>>())
    };
    let mut level_damage: Vec<MeanCi> = out.levels.iter().map(|l| l.damage).collect();
    level_damage.push(col(&|p| p.damage()));
    Ok(SeriesPoint {
        t,
        root_tv: col(&|p| 0.5 * p.damage()),
        abs_bias: col(&|p| p.clean().bias().abs()),
        signed_bias: col(&|p| p.clean().bias()),
        flips: None,
        level_damage,
        engine: "population",
    })
}
