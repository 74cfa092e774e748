//! Noise-injection inference: robust to a bounded number of flips per block.

use rand::Rng;

use crate::broadcast::apply_channel_with;
use crate::error::{Error, Result};
use crate::inference::{bp_root, check_epsilon, Belief, Kernel, LeafChannel};
use crate::oracle::posterior_oracle;
use crate::rng::{stream, Purpose};
use crate::tree::{SpinVector, TreeShape};

/// `min(delta/(8c), ln(1 + delta/4)/(4c))`.
pub fn psi_for(c: usize, delta: f64) -> f64 {
    let c = c as f64;
    (delta / (8.0 * c)).min((delta / 4.0).ln_1p() / (4.0 * c))
}

/// Default block height for a per-block budget of `c` flips.
pub fn default_k(c: usize) -> usize {
    ((c + 1) as f64).log2().ceil() as usize + 2
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RobustParams {
    pub shape: TreeShape,
    epsilon: f64,
    c: usize,
    delta: f64,
    pub k: usize,
}

impl RobustParams {
    /// `k = None` selects [`default_k`].
    pub fn new(shape: TreeShape, epsilon: f64, c: usize, delta: f64, k: Option<usize>) -> Result<Self> {
        check_epsilon(epsilon)?;
        if c == 0 {
            return Err(Error::invalid("c", "flip budget must be at least 1"));
        }
        if !(delta > 0.0 && delta <= 1.0) {
            return Err(Error::invalid("delta", format!("{delta} is outside (0, 1]")));
        }
        let k = k.unwrap_or_else(|| default_k(c));
        if k == 0 {
            return Err(Error::invalid("k", "block height must be at least 1"));
        }
        let p = RobustParams {
            shape,
            epsilon,
            c,
            delta,
            k,
        };
        let psi = p.psi();
        let cf = c as f64;
        assert!(4.0 * psi * cf <= (delta / 4.0).ln_1p() * (1.0 + 1e-15));
        assert!(2.0 * psi * cf <= delta / 4.0 * (1.0 + 1e-15));
        Ok(p)
    }

    pub fn psi(&self) -> f64 {
        psi_for(self.c, self.delta)
    }

    pub fn channel(&self) -> LeafChannel {
        LeafChannel::new(self.psi()).expect("psi in (0, 1]")
    }

    #[inline]
    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    #[inline]
    pub fn c(&self) -> usize {
        self.c
    }

    #[inline]
    pub fn delta(&self) -> f64 {
        self.delta
    }
}

/// Injects fresh channel noise into the leaves and returns the exact
/// posterior under the noisy-leaf model.
pub fn noisy_posterior_an_with<R: Rng + ?Sized>(
    shape: &TreeShape,
    leaves: &SpinVector,
    epsilon: f64,
    psi: f64,
    rng: &mut R,
) -> Result<Belief> {
    let channel = LeafChannel::new(psi)?;
    let noisy = apply_channel_with(leaves, channel, rng);
    bp_root(shape, &noisy, epsilon, channel)
}

pub fn noisy_posterior_an(shape: &TreeShape, leaves: &SpinVector, epsilon: f64, psi: f64, seed: u64) -> Result<Belief> {
    noisy_posterior_an_with(shape, leaves, epsilon, psi, &mut stream(seed, Purpose::Noise, 0))
}

/// Mean bias over `m` independent noise draws (stream indices `0..m`).
pub fn noisy_posterior_an_averaged(
    shape: &TreeShape,
    leaves: &SpinVector,
    epsilon: f64,
    psi: f64,
    seed: u64,
    m: usize,
) -> Result<Belief> {
    if m == 0 {
        return Err(Error::invalid("averaging count", "must be at least 1"));
    }
    let mut total = 0.0;
    for i in 0..m as u64 {
        total += noisy_posterior_an_with(shape, leaves, epsilon, psi, &mut stream(seed, Purpose::Noise, i))?.bias();
    }
    Ok(Belief::from_bias((total / m as f64).clamp(-1.0, 1.0)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatioCheck {
    pub ratio: f64,
    pub lower: f64,
    pub upper: f64,
}

impl RatioCheck {
    pub fn within(&self) -> bool {
        self.lower <= self.ratio && self.ratio <= self.upper
    }
}

/// Exact `P(root = + | x with flips)/P(root = + | x)` under the noisy-leaf
/// model, against the interval `[1 - 2 psi c, e^(4 psi c)]`.
pub fn posterior_ratio_bound_check(
    shape: &TreeShape,
    leaves: &SpinVector,
    flips: &[usize],
    c: usize,
    epsilon: f64,
    psi: f64,
) -> Result<RatioCheck> {
    if flips.len() > c {
        return Err(Error::invalid("flips", format!("{} flips exceed c = {c}", flips.len())));
    }
    if shape.leaf_count() > 16 {
        return Err(Error::Capacity {
            what: "leaf count",
            size: shape.leaf_count(),
            limit: 16,
        });
    }
    let channel = LeafChannel::new(psi)?;
    let mut flipped = leaves.clone();
    for &i in flips {
        if i >= leaves.len() {
            return Err(Error::OutOfRange {
                what: "flip index",
                value: i,
                limit: leaves.len(),
            });
        }
        flipped.flip(i);
    }
    let before = posterior_oracle(shape, leaves, epsilon, channel)?.prob_plus();
    let after = posterior_oracle(shape, &flipped, epsilon, channel)?.prob_plus();
    let cf = c as f64;
    Ok(RatioCheck {
        ratio: after / before,
        lower: 1.0 - 2.0 * psi * cf,
        upper: (4.0 * psi * cf).exp(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpreadOutput {
    pub root: Belief,
    /// Noise-injected beliefs of the nodes at height `k`, left to right.
    pub blocks: Vec<Belief>,
}

/// Two-stage estimator: noise-injected posteriors on every height-`k` block,
/// then plain BP above. Block `i` draws its noise from `block_rng(i)`.
pub fn spread_alg_with<R: Rng>(
    shape: &TreeShape,
    leaves: &SpinVector,
    epsilon: f64,
    psi: f64,
    k: usize,
    mut block_rng: impl FnMut(usize) -> R,
) -> Result<SpreadOutput> {
    if k == 0 || k > shape.depth() {
        return Err(Error::invalid(
            "k",
            format!("block height {k} needs 1 <= k <= depth {}", shape.depth()),
        ));
    }
    if leaves.len() != shape.leaf_count() {
        return Err(Error::LengthMismatch {
            what: "leaf vector",
            got: leaves.len(),
            expected: shape.leaf_count(),
        });
    }
    let kernel = Kernel::new(epsilon)?;
    let block_shape = TreeShape::new(shape.arity(), k)?;
    let blocks = shape
        .height_k_blocks(k)?
        .into_iter()
        .enumerate()
        .map(|(i, range)| noisy_posterior_an_with(&block_shape, &leaves.slice(range), epsilon, psi, &mut block_rng(i)))
        .collect::<Result<Vec<_>>>()?;
    let mut level: Vec<f64> = blocks.iter().map(Belief::log_ratio).collect();
    while level.len() > 1 {
        level = level
            .chunks_exact(shape.arity())
            .map(|kids| kids.iter().map(|&l| kernel.term(l)).sum())
            .collect();
    }
    Ok(SpreadOutput {
        root: Belief::from_log_ratio(level[0]),
        blocks,
    })
}

pub fn spread_alg_with_psi(
    shape: &TreeShape,
    leaves: &SpinVector,
    epsilon: f64,
    psi: f64,
    k: usize,
    seed: u64,
) -> Result<SpreadOutput> {
    spread_alg_with(shape, leaves, epsilon, psi, k, |i| stream(seed, Purpose::Noise, i as u64))
}

pub fn spread_alg(corrupted: &SpinVector, params: &RobustParams, seed: u64) -> Result<Belief> {
    Ok(spread_alg_with_psi(&params.shape, corrupted, params.epsilon, params.psi(), params.k, seed)?.root)
}
