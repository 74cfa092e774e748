//! Sampling the broadcast process and its conditional laws.

use rand::distr::{Bernoulli, Distribution};
use rand::Rng;

use crate::error::{Error, Result};
use crate::inference::{check_epsilon, Kernel, LeafChannel};
use crate::rng::{stream, Purpose};
use crate::tree::{Spin, SpinVector, TreeShape};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BroadcastParams {
    pub shape: TreeShape,
    epsilon: f64,
    pub seed: u64,
}

impl BroadcastParams {
    pub fn new(shape: TreeShape, epsilon: f64, seed: u64) -> Result<Self> {
        check_epsilon(epsilon)?;
        Ok(BroadcastParams {
            shape,
            epsilon,
            seed,
        })
    }

    #[inline]
    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// Probability that a child copies its parent.
    pub fn agreement(&self) -> f64 {
        0.5 * (1.0 + self.epsilon)
    }
}

/// A spin for every node, in breadth-first order.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledTree {
    pub spins: SpinVector,
    pub shape: TreeShape,
}

impl LabeledTree {
    pub fn root(&self) -> Spin {
        self.spins.get(0)
    }

    pub fn leaves(&self) -> SpinVector {
        self.spins
            .slice(self.shape.leaf_start()..self.shape.node_count())
    }

    pub fn spin(&self, id: usize) -> Spin {
        self.spins.get(id)
    }
}

fn copy_coin(epsilon: f64) -> Bernoulli {
    Bernoulli::new(0.5 * (1.0 + epsilon)).expect("probability in [1/2, 1)")
}

/// Broadcast sample driven by a caller-supplied generator.
pub fn sample_tree_with<R: Rng + ?Sized>(
    shape: &TreeShape,
    epsilon: f64,
    root: Option<Spin>,
    rng: &mut R,
) -> Result<LabeledTree> {
    check_epsilon(epsilon)?;
    let coin = copy_coin(epsilon);
    let root = root.unwrap_or_else(|| Spin::from_bit(rng.random()));
    let mut spins = SpinVector::filled(shape.node_count(), root);
    for id in 1..shape.node_count() {
        let parent = spins.get((id - 1) / shape.arity());
        let s = if coin.sample(rng) { parent } else { -parent };
        spins.set(id, s);
    }
    Ok(LabeledTree {
        spins,
        shape: *shape,
    })
}

/// Broadcast sample using the tree stream of `params.seed`.
pub fn sample_tree(params: &BroadcastParams, root: Option<Spin>) -> LabeledTree {
    let mut rng = stream(params.seed, Purpose::Tree, 0);
    sample_tree_with(&params.shape, params.epsilon, root, &mut rng).expect("validated params")
}

/// Leaves only, without materializing internal spins beyond one level at a time.
pub fn sample_leaves_with<R: Rng + ?Sized>(
    shape: &TreeShape,
    epsilon: f64,
    root: Spin,
    rng: &mut R,
) -> Result<SpinVector> {
    check_epsilon(epsilon)?;
    let coin = copy_coin(epsilon);
    let mut level = vec![root];
    for _ in 0..shape.depth() {
        let mut next = Vec::with_capacity(level.len() * shape.arity());
        for &p in &level {
            for _ in 0..shape.arity() {
                next.push(if coin.sample(rng) { p } else { -p });
            }
        }
        level = next;
    }
    Ok(SpinVector::from_spins(level))
}

/// For every internal node, `ln(P(leaves below | -)/P(leaves below | +))`,
/// indexed by node id. Leaves are given through `channel`.
pub(crate) fn upward_log_ratios(
    shape: &TreeShape,
    leaves: &SpinVector,
    kernel: &Kernel,
    channel: LeafChannel,
) -> Vec<f64> {
    let internal = shape.internal_count();
    let b = shape.arity();
    let mut l = vec![0.0; internal];
    let coef = kernel.leaf_coefficient(channel);
    let leaf_start = shape.leaf_start();
    for id in (0..internal).rev() {
        let kids = b * id + 1..b * id + 1 + b;
        l[id] = if kids.start >= leaf_start {
            kids.map(|k| {
                if leaves.get(k - leaf_start).is_plus() {
                    coef
                } else {
                    -coef
                }
            })
            .sum()
        } else {
            kids.map(|k| kernel.term(l[k])).sum()
        };
    }
    l
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Exact draw of the internal spins given the root and the leaves, by an
/// upward likelihood pass followed by top-down sampling.
pub fn sample_internal_given_leaves_with<R: Rng + ?Sized>(
    shape: &TreeShape,
    epsilon: f64,
    leaves: &SpinVector,
    root: Spin,
    rng: &mut R,
) -> Result<LabeledTree> {
    if leaves.len() != shape.leaf_count() {
        return Err(Error::LengthMismatch {
            what: "leaf vector",
            got: leaves.len(),
            expected: shape.leaf_count(),
        });
    }
    let kernel = Kernel::new(epsilon)?;
    let c = kernel.edge_log_ratio();
    let l = upward_log_ratios(shape, leaves, &kernel, LeafChannel::CLEAN);
    let leaf_start = shape.leaf_start();
    let mut spins = SpinVector::filled(shape.node_count(), root);
    for id in 1..leaf_start {
        let parent = spins.get((id - 1) / shape.arity());
        let p_plus = sigmoid(-l[id] - parent.sign() * c);
        spins.set(id, Spin::from_bit(rng.random::<f64>() < p_plus));
    }
    for (i, s) in leaves.iter().enumerate() {
        spins.set(leaf_start + i, s);
    }
    if shape.depth() == 0 {
        spins.set(0, root);
    }
    Ok(LabeledTree {
        spins,
        shape: *shape,
    })
}

pub fn sample_internal_given_leaves(
    params: &BroadcastParams,
    leaves: &SpinVector,
    root: Spin,
    seed: u64,
) -> Result<LabeledTree> {
    let mut rng = stream(seed, Purpose::Resample, 0);
    sample_internal_given_leaves_with(&params.shape, params.epsilon, leaves, root, &mut rng)
}

/// XORs independent flips with probability `(1 - psi)/2` into `leaves`.
pub fn apply_channel_with<R: Rng + ?Sized>(
    leaves: &SpinVector,
    channel: LeafChannel,
    rng: &mut R,
) -> SpinVector {
    let p = channel.flip_probability();
    let mut out = leaves.clone();
    if p > 0.0 {
        let coin = Bernoulli::new(p).expect("probability in [0, 1/2)");
        for i in 0..out.len() {
            if coin.sample(rng) {
                out.flip(i);
            }
        }
    }
    out
}

/// Broadcast sample whose leaves are then observed through a channel of
/// fidelity `psi`. Returns the root and the noisy leaves.
pub fn sample_model_n(params: &BroadcastParams, psi: f64) -> Result<(Spin, SpinVector)> {
    let channel = LeafChannel::new(psi)?;
    let tree = sample_tree(params, None);
    let mut noise = stream(params.seed, Purpose::Noise, 0);
    Ok((tree.root(), apply_channel_with(&tree.leaves(), channel, &mut noise)))
}
