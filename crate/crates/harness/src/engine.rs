//! Seeded trial execution on explicit trees.

use rand::Rng;
use rayon::prelude::*;

use treecast_core::adversary::{attack_bruteforce, attack_greedy, attack_signpush, sample_mask, Attack, Objective};
use treecast_core::broadcast::sample_leaves_with;
use treecast_core::inference::{bp_paired_chain, PairedBelief};
use treecast_core::rng::{derive_seed, fnv1a, stream, Purpose};
use treecast_core::{Belief, LeafChannel, Spin, TreeShape};

use crate::config::Target;
use crate::error::{HarnessError, Result};

/// Largest leaf count the `auto` engine runs on explicit trees.
pub const TREE_ENGINE_MAX_LEAVES: usize = 1 << 18;

/// Seed of one trial; independent of worker count and of the corruption rate,
/// so sweeps over budgets attack the same trees.
pub fn trial_seed(master: u64, experiment: &str, point: &[u64], trial: u64) -> u64 {
    let mut parts = vec![fnv1a(experiment)];
    parts.extend_from_slice(point);
    parts.push(trial);
    derive_seed(master, &parts)
}

/// Maps `f` over `0..n` on a pool of `workers` threads, in index order.
pub fn par_map<T, F>(workers: usize, n: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    if workers <= 1 {
        return (0..n).map(f).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| HarnessError::Runtime(format!("thread pool: {e}")))?;
    pool.install(|| (0..n).into_par_iter().map(f).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    None,
    Signpush,
    Greedy,
    Bruteforce,
}

impl Strategy {
    pub fn parse(name: &str) -> Result<Self> {
        Ok(match name {
            "none" => Strategy::None,
            "signpush" => Strategy::Signpush,
            "greedy" => Strategy::Greedy,
            "bruteforce" => Strategy::Bruteforce,
            other => {
                return Err(HarnessError::config(
                    "adversary.strategy",
                    format!("{other:?} is not usable here"),
                ))
            }
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Strategy::None => "none",
            Strategy::Signpush => "signpush",
            Strategy::Greedy => "greedy",
            Strategy::Bruteforce => "bruteforce",
        }
    }
}

/// Outputs of one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub trial: u64,
    pub root: Spin,
    pub clean: Belief,
    pub attacked: Belief,
    /// `|X - Z|` along the first-child chain, by height; the last entry is the root.
    pub level_damage: Vec<f64>,
    pub flips: usize,
    /// Branch taken by adversaries that may decline to attack.
    pub coupled: Option<bool>,
}

impl TrialRecord {
    pub fn root_tv(&self) -> f64 {
        0.5 * self.level_damage.last().copied().unwrap_or(0.0)
    }

    /// Record from an attacked pair of leaf vectors.
    pub fn from_chain(trial: u64, root: Spin, chain: &[PairedBelief], flips: usize) -> Self {
        let top = chain.last().expect("non-empty chain");
        TrialRecord {
            trial,
            root,
            clean: top.clean(),
            attacked: top.attacked(),
            level_damage: chain.iter().map(PairedBelief::damage).collect(),
            flips,
            coupled: None,
        }
    }
}

/// Semirandom attack on one explicit tree.
#[derive(Debug, Clone, Copy)]
pub struct TreeTrial {
    pub shape: TreeShape,
    pub epsilon: f64,
    pub rho: f64,
    pub strategy: Strategy,
    pub target: Target,
}

impl TreeTrial {
    pub fn run(&self, trial: u64, seed: u64) -> Result<TrialRecord> {
        let root = Spin::from_bit(stream(seed, Purpose::Trial, 0).random());
        let mut rng = stream(seed, Purpose::Tree, 0);
        let leaves = sample_leaves_with(&self.shape, self.epsilon, root, &mut rng)?;
        let n = self.shape.leaf_count();
        let attack = if self.strategy == Strategy::None || self.rho == 0.0 {
            Attack::none(&leaves)
        } else {
            let mask = sample_mask(self.rho, n, seed)?;
            let ch = LeafChannel::CLEAN;
            match self.strategy {
                Strategy::Signpush => attack_signpush(&leaves, &mask, self.target.spin(root)),
                Strategy::Greedy => attack_greedy(&self.shape, &leaves, &mask, self.epsilon, ch, Objective::Damage, n)?.0,
                Strategy::Bruteforce => {
                    attack_bruteforce(&self.shape, &leaves, &mask, self.epsilon, ch, Objective::Damage)?.0
                }
                Strategy::None => unreachable!(),
            }
        };
        let chain = bp_paired_chain(&self.shape, &leaves, &attack.leaves, self.epsilon, LeafChannel::CLEAN)?;
        Ok(TrialRecord::from_chain(trial, root, &chain, attack.flip_count()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn par_map_is_order_preserving() {
        let a = par_map(1, 100, |i| Ok(i * i)).unwrap();
        let b = par_map(4, 100, |i| Ok(i * i)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a[7], 49);
    }

    #[test]
    fn zero_rate_has_no_damage() {
        let t = TreeTrial {
            shape: TreeShape::new(3, 3).unwrap(),
            epsilon: 0.6,
            rho: 0.0,
            strategy: Strategy::Signpush,
            target: Target::Against,
        };
        let r = t.run(0, 11).unwrap();
        assert_eq!(r.flips, 0);
        assert!(r.level_damage.iter().all(|&d| d == 0.0));
        assert_eq!(r.clean, r.attacked);
    }

    #[test]
    fn trial_seeds_differ_by_point() {
        assert_ne!(trial_seed(1, "a", &[2], 0), trial_seed(1, "a", &[3], 0));
        assert_ne!(trial_seed(1, "a", &[2], 0), trial_seed(1, "b", &[2], 0));
        assert_eq!(trial_seed(1, "a", &[2], 5), trial_seed(1, "a", &[2], 5));
    }
}
