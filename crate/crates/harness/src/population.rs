//! Population dynamics for trees too large to materialize.
//!
//! For every height `r` and spin `s`, keeps a sample of `(L, delta)` pairs
//! distributed as the paired belief of a height-`r` node with spin `s`. A node
//! at height `r + 1` draws its `b` children's spins from the copy channel and
//! their pairs from the height-`r` sample. Leaves are exact: each leaf flips
//! toward the target spin when its permission coin comes up heads.
//! Everything is conditioned on a `+` root.

use rand::Rng;

use treecast_core::inference::{Kernel, PairedBelief};
use treecast_core::rng::{stream, Purpose};
use treecast_core::{LeafChannel, Spin};

use crate::engine::par_map;
use crate::error::{HarnessError, Result};
use crate::stats::{mean, variance, MeanCi};

const CHUNK: usize = 4096;

#[derive(Debug, Clone, Copy)]
pub struct PopulationParams {
    pub arity: usize,
    pub depth: usize,
    pub epsilon: f64,
    pub rho: f64,
    /// Spin permitted leaves are pushed to.
    pub target: Spin,
    pub population: usize,
    pub root_samples: usize,
    pub seed: u64,
}

impl PopulationParams {
    pub fn default_population(arity: usize, trials: usize) -> usize {
        200_000.max(2 * trials * arity)
    }
}

#[derive(Debug, Clone)]
pub struct LevelStats {
    pub height: usize,
    /// Mean damage `|X - Z|` of a height-`height` node under a `+` root.
    pub damage: MeanCi,
    /// Mean clean bias `X` of such a node.
    pub bias: MeanCi,
}

#[derive(Debug, Clone)]
pub struct PopulationOutcome {
    /// Heights `1..depth`; the root level comes from `root`.
    pub levels: Vec<LevelStats>,
    pub root: Vec<PairedBelief>,
}

fn chunk_stream(seed: u64, height: usize, spin: Spin, chunk: usize) -> impl Rng {
    let index = ((height as u64) << 40) | ((spin.is_plus() as u64) << 39) | chunk as u64;
    stream(seed, Purpose::Population, index)
}

struct Sampler<'a> {
    p: &'a PopulationParams,
    kernel: Kernel,
    coef: f64,
    copy: f64,
}

impl Sampler<'_> {
    fn child_spin<R: Rng>(&self, parent: Spin, rng: &mut R) -> Spin {
        if rng.random::<f64>() < self.copy {
            parent
        } else {
            -parent
        }
    }

    fn height_one<R: Rng>(&self, s: Spin, rng: &mut R) -> PairedBelief {
        let (mut l, mut d) = (0.0, 0.0);
        for _ in 0..self.p.arity {
            let leaf = self.child_spin(s, rng);
            let permitted = rng.random::<f64>() < self.p.rho;
            l += if leaf.is_plus() { self.coef } else { -self.coef };
            if permitted && leaf != self.p.target {
                d += if self.p.target.is_plus() { 2.0 * self.coef } else { -2.0 * self.coef };
            }
        }
        PairedBelief { log_ratio: l, delta: d }
    }

    fn from_below<R: Rng>(&self, s: Spin, below: &[Vec<PairedBelief>; 2], rng: &mut R) -> PairedBelief {
        let (mut l, mut d) = (0.0, 0.0);
        for _ in 0..self.p.arity {
            let c = self.child_spin(s, rng);
            let pool = &below[c.is_plus() as usize];
            let k = pool[rng.random_range(0..pool.len())];
            l += self.kernel.term(k.log_ratio);
            d += self.kernel.term_diff(k.log_ratio, k.delta);
        }
        PairedBelief { log_ratio: l, delta: d }
    }

    fn level(
        &self,
        height: usize,
        s: Spin,
        n: usize,
        below: Option<&[Vec<PairedBelief>; 2]>,
        workers: usize,
    ) -> Result<Vec<PairedBelief>> {
        let chunks = n.div_ceil(CHUNK);
        let parts = par_map(workers, chunks, |c| {
            let mut rng = chunk_stream(self.p.seed, height, s, c);
            let len = CHUNK.min(n - c * CHUNK);
            Ok((0..len)
                .map(|_| match below {
                    None => self.height_one(s, &mut rng),
                    Some(b) => self.from_below(s, b, &mut rng),
                })
                .collect::<Vec<_>>())
        })?;
        Ok(parts.concat())
    }
}

fn summarize(height: usize, weight_plus: f64, pools: &[Vec<PairedBelief>; 2]) -> LevelStats {
    let part = |f: &dyn Fn(&PairedBelief) -> f64| {
        let mut m = 0.0;
        let mut v = 0.0;
        let mut n = usize::MAX;
        for (spin, w) in [(1usize, weight_plus), (0, 1.0 - weight_plus)] {
            let xs: Vec<f64> = pools[spin].iter().map(f).collect();
            m += w * mean(&xs);
            v += w * w * variance(&xs) / xs.len() as f64;
            n = n.min(xs.len());
        }
        MeanCi::from_parts(n, m, v.sqrt())
    };
    LevelStats {
        height,
        damage: part(&|p: &PairedBelief| p.damage()),
        bias: part(&|p: &PairedBelief| p.clean().bias()),
    }
}

pub fn run_population(p: &PopulationParams, workers: usize) -> Result<PopulationOutcome> {
    if p.depth == 0 || p.arity == 0 || p.population == 0 || p.root_samples == 0 {
        return Err(HarnessError::Runtime(
            "population engine needs positive arity, depth and sizes".into(),
        ));
    }
    let kernel = Kernel::new(p.epsilon)?;
    let sampler = Sampler {
        p,
        kernel,
        coef: kernel.leaf_coefficient(LeafChannel::CLEAN),
        copy: 0.5 * (1.0 + p.epsilon),
    };
    let mut levels = Vec::new();
    let mut below: Option<[Vec<PairedBelief>; 2]> = None;
    for height in 1..p.depth {
        let minus = sampler.level(height, Spin::Minus, p.population, below.as_ref(), workers)?;
        let plus = sampler.level(height, Spin::Plus, p.population, below.as_ref(), workers)?;
        let pools = [minus, plus];
        let w = 0.5 * (1.0 + p.epsilon.powi((p.depth - height) as i32));
        levels.push(summarize(height, w, &pools));
        below = Some(pools);
    }
    let root = sampler.level(p.depth, Spin::Plus, p.root_samples, below.as_ref(), workers)?;
    Ok(PopulationOutcome { levels, root })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(depth: usize) -> PopulationParams {
        PopulationParams {
            arity: 4,
            depth,
            epsilon: 0.6,
            rho: 0.2,
            target: Spin::Minus,
            population: 5000,
            root_samples: 3000,
            seed: 4,
        }
    }

    #[test]
    fn deterministic_across_workers() {
        let a = run_population(&params(3), 1).unwrap();
        let b = run_population(&params(3), 3).unwrap();
        assert_eq!(a.root, b.root);
        assert_eq!(a.levels.len(), 2);
    }

    #[test]
    fn zero_rate_means_zero_damage() {
        let mut p = params(2);
        p.rho = 0.0;
        let out = run_population(&p, 1).unwrap();
        assert!(out.root.iter().all(|r| r.delta == 0.0));
    }
}
