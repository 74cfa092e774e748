//! Brute-force enumeration over labelings of tiny trees.
//!
//! Nothing here shares code with belief propagation: every quantity is a
//! direct sum of products of edge weights `(1 + eps*s_parent*s_child)/2`.

use crate::error::{Error, Result};
use crate::inference::{check_epsilon, Belief, LeafChannel};
use crate::tree::{Spin, SpinVector, TreeShape};

/// Largest tree the oracles will enumerate.
pub const MAX_NODES: usize = 25;

fn guard(shape: &TreeShape) -> Result<()> {
    if shape.node_count() > MAX_NODES {
        return Err(Error::Capacity {
            what: "node count",
            size: shape.node_count(),
            limit: MAX_NODES,
        });
    }
    Ok(())
}

#[inline]
fn bit(code: u64, i: usize) -> bool {
    (code >> i) & 1 == 1
}

/// Weight of a full labeling (bit `id` of `code` is node `id`, 1 = `+`),
/// excluding the root prior.
fn edge_weight(shape: &TreeShape, epsilon: f64, code: u64) -> f64 {
    let agree = 0.5 * (1.0 + epsilon);
    let disagree = 0.5 * (1.0 - epsilon);
    (1..shape.node_count())
        .map(|id| {
            let p = (id - 1) / shape.arity();
            if bit(code, id) == bit(code, p) {
                agree
            } else {
                disagree
            }
        })
        .product()
}

fn leaf_code_of(shape: &TreeShape, code: u64) -> u64 {
    code >> shape.leaf_start()
}

/// Exact law of the internal non-root spins given root and leaves, as pairs
/// of (labeling of nodes `1..leaf_start`, probability) in code order.
pub fn enumerate_conditional(
    shape: &TreeShape,
    epsilon: f64,
    leaves: &SpinVector,
    root: Spin,
) -> Result<Vec<(SpinVector, f64)>> {
    guard(shape)?;
    check_epsilon(epsilon)?;
    if leaves.len() != shape.leaf_count() {
        return Err(Error::LengthMismatch {
            what: "leaf vector",
            got: leaves.len(),
            expected: shape.leaf_count(),
        });
    }
    let hidden = shape.leaf_start().saturating_sub(1);
    let fixed = (leaves.to_code() << shape.leaf_start()) | u64::from(root.is_plus());
    let weights: Vec<f64> = (0..1u64 << hidden)
        .map(|h| edge_weight(shape, epsilon, fixed | (h << 1)))
        .collect();
    let z: f64 = weights.iter().sum();
    Ok(weights
        .into_iter()
        .enumerate()
        .map(|(h, w)| (SpinVector::from_code(h as u64, hidden), w / z))
        .collect())
}

/// Exact root posterior given observed leaves seen through `channel`, with a
/// uniform root prior. When `psi < 1` the true leaf spins are summed over too.
pub fn posterior_oracle(
    shape: &TreeShape,
    leaves: &SpinVector,
    epsilon: f64,
    channel: LeafChannel,
) -> Result<Belief> {
    guard(shape)?;
    check_epsilon(epsilon)?;
    let psi = channel.psi();
    let n = shape.node_count();
    let leaf_start = shape.leaf_start();
    let observed = leaves.to_code();
    let noisy = psi < 1.0;
    let free = if noisy { n } else { leaf_start };
    let base = if noisy { 0 } else { observed << leaf_start };
    let same = 0.5 * (1.0 + psi);
    let diff = 0.5 * (1.0 - psi);
    let mut mass = [0.0f64; 2];
    for h in 0..1u64 << free {
        let code = base | h;
        let mut w = edge_weight(shape, epsilon, code);
        if noisy {
            let truth = leaf_code_of(shape, code);
            for i in 0..shape.leaf_count() {
                w *= if bit(truth, i) == bit(observed, i) { same } else { diff };
            }
        }
        mass[usize::from(bit(code, 0))] += w;
    }
    Ok(Belief::from_bias((mass[1] - mass[0]) / (mass[1] + mass[0])))
}

/// Exact law of the leaves given the root, indexed by leaf code.
pub fn leaf_law(shape: &TreeShape, epsilon: f64, root: Spin) -> Result<Vec<f64>> {
    guard(shape)?;
    check_epsilon(epsilon)?;
    let n = shape.node_count();
    let mut law = vec![0.0; 1 << shape.leaf_count()];
    for h in 0..1u64 << (n - 1) {
        let code = (h << 1) | u64::from(root.is_plus());
        law[leaf_code_of(shape, code) as usize] += edge_weight(shape, epsilon, code);
    }
    Ok(law)
}

/// Total variation between two laws on the same finite space.
pub fn tv_distance(p: &[f64], q: &[f64]) -> f64 {
    assert_eq!(p.len(), q.len());
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// Posterior bias of the noise-injection estimator averaged over its noise:
/// the sum over every noise pattern of its probability times the exact
/// posterior of the re-noised leaves.
pub fn noise_averaged_posterior(
    shape: &TreeShape,
    leaves: &SpinVector,
    epsilon: f64,
    channel: LeafChannel,
) -> Result<f64> {
    guard(shape)?;
    let m = shape.leaf_count();
    let p = channel.flip_probability();
    let mut total = 0.0;
    for noise in 0..1u64 << m {
        let k = noise.count_ones() as i32;
        let prob = p.powi(k) * (1.0 - p).powi(m as i32 - k);
        if prob == 0.0 {
            continue;
        }
        let noisy = SpinVector::from_code(leaves.to_code() ^ noise, m);
        total += prob * posterior_oracle(shape, &noisy, epsilon, channel)?.bias();
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_edge_has_empty_labeling() {
        let shape = TreeShape::new(1, 1).unwrap();
        let out = enumerate_conditional(&shape, 0.3, &"+".parse().unwrap(), Spin::Plus).unwrap();
        assert_eq!(out.len(), 1);
        assert!(out[0].0.is_empty());
        assert_eq!(out[0].1, 1.0);
    }

    #[test]
    fn uniform_at_zero_bias() {
        let shape = TreeShape::new(2, 2).unwrap();
        let out = enumerate_conditional(&shape, 0.0, &"+-++".parse().unwrap(), Spin::Plus).unwrap();
        assert_eq!(out.len(), 4);
        assert!(out.iter().all(|(_, p)| (p - 0.25).abs() < 1e-15));
    }

    #[test]
    fn conditional_regression_constant() {
        let shape = TreeShape::new(2, 2).unwrap();
        let out = enumerate_conditional(&shape, 0.5, &"++++".parse().unwrap(), Spin::Plus).unwrap();
        let w_pp = 0.75f64.powi(6);
        let w_pm = 0.75 * 0.75 * 0.75 * 0.25 * 0.25 * 0.25;
        let w_mm = 0.25f64.powi(6);
        let z = w_pp + 2.0 * w_pm + w_mm;
        let both_plus = out.iter().find(|(l, _)| l.to_string() == "++").unwrap().1;
        assert!((both_plus - w_pp / z).abs() < 1e-15);
        assert!((both_plus - 0.929_846_938_775_510_2).abs() < 1e-12);
        let total: f64 = out.iter().map(|(_, p)| p).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn posterior_zero_bias_is_flat() {
        let shape = TreeShape::new(2, 2).unwrap();
        for code in 0..16 {
            let leaves = SpinVector::from_code(code, 4);
            let b = posterior_oracle(&shape, &leaves, 0.0, LeafChannel::CLEAN).unwrap();
            assert_eq!(b.bias(), 0.0);
        }
    }

    #[test]
    fn posterior_regression_constant() {
        let shape = TreeShape::new(2, 2).unwrap();
        let b = posterior_oracle(&shape, &"+++-".parse().unwrap(), 0.5, LeafChannel::CLEAN).unwrap();
        assert!((b.bias() - 0.4).abs() < 1e-12, "{}", b.bias());
    }

    #[test]
    fn depth_one_closed_form() {
        let shape = TreeShape::new(3, 1).unwrap();
        let b = posterior_oracle(&shape, &"++-".parse().unwrap(), 0.3, LeafChannel::CLEAN).unwrap();
        assert!((b.bias() - 0.3).abs() < 1e-14);
    }

    #[test]
    fn leaf_law_sums_to_one_and_flips() {
        let shape = TreeShape::new(2, 2).unwrap();
        let plus = leaf_law(&shape, 0.3, Spin::Plus).unwrap();
        let minus = leaf_law(&shape, 0.3, Spin::Minus).unwrap();
        assert!((plus.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        for code in 0..16 {
            assert!((plus[code] - minus[15 - code]).abs() < 1e-15);
        }
        assert!(tv_distance(&plus, &minus) > 0.0);
    }

    #[test]
    fn guards_large_trees() {
        let shape = TreeShape::new(3, 3).unwrap();
        let leaves = SpinVector::filled(27, Spin::Plus);
        assert!(matches!(
            posterior_oracle(&shape, &leaves, 0.3, LeafChannel::CLEAN),
            Err(Error::Capacity { .. })
        ));
    }
}
