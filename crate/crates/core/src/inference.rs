//! Exact root posteriors by belief propagation.
//!
//! A belief is carried in two forms: the bias `X` with `P(+) = (1 + X)/2`, and
//! the log-ratio `L = ln((1 - X)/(1 + X)) = ln(P(-)/P(+))`. Combining children
//! adds their per-child terms `ln((1 - eps*X_i)/(1 + eps*X_i))`, which are
//! evaluated from `L_i` rather than from `X_i` so that saturated beliefs keep
//! full precision.

use std::f64::consts::LN_2;

use crate::error::{Error, Result};
use crate::tree::{Spin, SpinVector, TreeShape};

/// Validates a copy bias: `0 <= eps < 1`.
pub fn check_epsilon(epsilon: f64) -> Result<f64> {
    if (0.0..1.0).contains(&epsilon) {
        Ok(epsilon)
    } else {
        Err(Error::invalid("epsilon", format!("{epsilon} is outside [0, 1)")))
    }
}

fn check_leaves(shape: &TreeShape, leaves: &SpinVector) -> Result<()> {
    if leaves.len() != shape.leaf_count() {
        return Err(Error::LengthMismatch {
            what: "leaf vector",
            got: leaves.len(),
            expected: shape.leaf_count(),
        });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Belief {
    bias: f64,
    log_ratio: f64,
}

impl Belief {
    pub const NEUTRAL: Belief = Belief {
        bias: 0.0,
        log_ratio: 0.0,
    };

    /// Panics unless `-1 <= bias <= 1`.
    pub fn from_bias(bias: f64) -> Self {
        assert!((-1.0..=1.0).contains(&bias), "bias {bias} outside [-1, 1]");
        Belief {
            bias,
            log_ratio: (-bias).ln_1p() - bias.ln_1p(),
        }
    }

    pub fn from_log_ratio(log_ratio: f64) -> Self {
        assert!(!log_ratio.is_nan(), "NaN log-ratio");
        Belief {
            bias: -(0.5 * log_ratio).tanh(),
            log_ratio,
        }
    }

    #[inline]
    pub fn bias(&self) -> f64 {
        self.bias
    }

    #[inline]
    pub fn log_ratio(&self) -> f64 {
        self.log_ratio
    }

    pub fn prob_plus(&self) -> f64 {
        0.5 * (1.0 + self.bias)
    }

    /// Maximum a posteriori spin; `None` on an exact tie.
    pub fn map_spin(&self) -> Option<Spin> {
        if self.log_ratio < 0.0 {
            Some(Spin::Plus)
        } else if self.log_ratio > 0.0 {
            Some(Spin::Minus)
        } else {
            None
        }
    }

    pub fn negated(&self) -> Self {
        Belief {
            bias: -self.bias,
            log_ratio: -self.log_ratio,
        }
    }
}

/// Binary symmetric channel between a leaf's true spin and its observation;
/// `psi = 1` is a perfectly observed leaf.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LeafChannel {
    psi: f64,
}

impl LeafChannel {
    pub const CLEAN: LeafChannel = LeafChannel { psi: 1.0 };

    pub fn new(psi: f64) -> Result<Self> {
        if psi > 0.0 && psi <= 1.0 {
            Ok(LeafChannel { psi })
        } else {
            Err(Error::invalid("psi", format!("{psi} is outside (0, 1]")))
        }
    }

    #[inline]
    pub fn psi(&self) -> f64 {
        self.psi
    }

    /// Flip probability of the channel.
    pub fn flip_probability(&self) -> f64 {
        0.5 * (1.0 - self.psi)
    }

    /// Posterior belief of a leaf's true spin given its observation.
    pub fn leaf_belief(&self, observed: Spin) -> Belief {
        Belief::from_bias(self.psi * observed.sign())
    }
}

/// Per-edge arithmetic for a fixed copy bias.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Kernel {
    epsilon: f64,
    /// `ln((1 - eps)/(1 + eps))`
    c: f64,
    /// `(1 + eps)/(1 - eps)`
    a: f64,
}

impl Kernel {
    pub fn new(epsilon: f64) -> Result<Self> {
        check_epsilon(epsilon)?;
        Ok(Kernel {
            epsilon,
            c: (-epsilon).ln_1p() - epsilon.ln_1p(),
            a: (1.0 + epsilon) / (1.0 - epsilon),
        })
    }

    #[inline]
    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// `ln((1 - eps)/(1 + eps))`, the term of a perfectly observed `+` child.
    #[inline]
    pub fn edge_log_ratio(&self) -> f64 {
        self.c
    }

    /// Term contributed by an observed `+` leaf behind a channel of fidelity
    /// `psi`; a `-` leaf contributes its negation.
    pub fn leaf_coefficient(&self, channel: LeafChannel) -> f64 {
        let x = self.epsilon * channel.psi();
        (-x).ln_1p() - x.ln_1p()
    }

    /// `ln((1 - eps*X)/(1 + eps*X))` for the child belief with log-ratio `l`.
    pub fn term(&self, l: f64) -> f64 {
        if l > 0.0 {
            return -self.term(-l);
        }
        if l > -1.0 {
            let m = l.exp_m1();
            (0.5 * (1.0 + self.epsilon) * m).ln_1p() - (0.5 * (1.0 - self.epsilon) * m).ln_1p()
        } else {
            let u = l.exp();
            self.c + (self.a * u).ln_1p() - (u / self.a).ln_1p()
        }
    }

    /// `term(l + delta) - term(l)` without cancellation when `delta` is tiny.
    pub fn term_diff(&self, l: f64, delta: f64) -> f64 {
        if delta == 0.0 {
            return 0.0;
        }
        let l2 = l + delta;
        if l <= 0.0 && l2 <= 0.0 {
            self.term_diff_nonpositive(l, delta)
        } else if l >= 0.0 && l2 >= 0.0 {
            -self.term_diff_nonpositive(-l, -delta)
        } else {
            self.term(l2) - self.term(l)
        }
    }

    fn term_diff_nonpositive(&self, l: f64, delta: f64) -> f64 {
        // ln(1 + v e^delta) - ln(1 + v) = ln_1p(v expm1(delta) / (1 + v))
        let u = l.exp();
        if u == 0.0 {
            return 0.0;
        }
        let e = delta.exp_m1();
        let up = self.a * u;
        let down = u / self.a;
        (up * e / (1.0 + up)).ln_1p() - (down * e / (1.0 + down)).ln_1p()
    }
}

/// Combines child beliefs into the parent's posterior, in child order.
pub fn bp_combine(children: &[Belief], epsilon: f64) -> Result<Belief> {
    let kernel = Kernel::new(epsilon)?;
    Ok(combine_with(&kernel, children))
}

pub(crate) fn combine_with(kernel: &Kernel, children: &[Belief]) -> Belief {
    let l = children.iter().map(|b| kernel.term(b.log_ratio)).sum();
    Belief::from_log_ratio(l)
}

/// Level sweep from the leaves; `visit(height, log_ratios)` sees every level
/// from height 1 upward. Returns the root log-ratio.
fn sweep(
    shape: &TreeShape,
    leaves: &SpinVector,
    kernel: &Kernel,
    channel: LeafChannel,
    mut visit: impl FnMut(usize, &[f64]),
) -> f64 {
    let b = shape.arity();
    if shape.depth() == 0 {
        return channel.leaf_belief(leaves.get(0)).log_ratio;
    }
    let coef = kernel.leaf_coefficient(channel);
    let mut level: Vec<f64> = (0..shape.leaf_count() / b)
        .map(|j| {
            (b * j..b * j + b)
                .map(|i| if leaves.get(i).is_plus() { coef } else { -coef })
                .sum()
        })
        .collect();
    visit(1, &level);
    for height in 2..=shape.depth() {
        level = level
            .chunks_exact(b)
            .map(|kids| kids.iter().map(|&l| kernel.term(l)).sum())
            .collect();
        visit(height, &level);
    }
    level[0]
}

pub fn bp_root(
    shape: &TreeShape,
    leaves: &SpinVector,
    epsilon: f64,
    channel: LeafChannel,
) -> Result<Belief> {
    check_leaves(shape, leaves)?;
    let kernel = Kernel::new(epsilon)?;
    Ok(Belief::from_log_ratio(sweep(shape, leaves, &kernel, channel, |_, _| {})))
}

/// Beliefs of every node, indexed by height: entry 0 holds the leaf
/// initializations and entry `depth` holds the root alone.
pub fn bp_all_levels(
    shape: &TreeShape,
    leaves: &SpinVector,
    epsilon: f64,
    channel: LeafChannel,
) -> Result<Vec<Vec<Belief>>> {
    check_leaves(shape, leaves)?;
    let kernel = Kernel::new(epsilon)?;
    let mut out = vec![leaves.iter().map(|s| channel.leaf_belief(s)).collect()];
    sweep(shape, leaves, &kernel, channel, |_, level| {
        out.push(level.iter().map(|&l| Belief::from_log_ratio(l)).collect());
    });
    Ok(out)
}

/// Total variation between the ±1 laws with the two biases.
pub fn tv_from_biases(x: Belief, z: Belief) -> f64 {
    let (lx, lz) = (x.log_ratio, z.log_ratio);
    if lx.is_finite() && lz.is_finite() {
        0.5 * bias_gap(lx, lz - lx)
    } else {
        0.5 * (x.bias - z.bias).abs()
    }
}

fn ln_cosh(x: f64) -> f64 {
    let x = x.abs();
    x + (-2.0 * x).exp().ln_1p() - LN_2
}

fn ln_abs_sinh(y: f64) -> f64 {
    let y = y.abs();
    if y < 1.0 {
        y.sinh().ln()
    } else {
        y + (-(-2.0 * y).exp()).ln_1p() - LN_2
    }
}

/// `|X - Z|` for beliefs with log-ratios `l` and `l + delta`, accurate even
/// when the gap is far below the resolution of the biases themselves.
pub fn bias_gap(l: f64, delta: f64) -> f64 {
    if delta == 0.0 {
        return 0.0;
    }
    let l2 = shifted(l, delta);
    if !(l.is_finite() && delta.is_finite() && l2.is_finite()) {
        let x = Belief::from_log_ratio(l).bias;
        let z = if delta.is_nan() { x } else { Belief::from_log_ratio(l2).bias };
        return (x - z).abs();
    }
    (ln_abs_sinh(0.5 * delta) - ln_cosh(0.5 * l) - ln_cosh(0.5 * l2)).exp()
}

/// `l + delta`, where a perfectly observed leaf flipped from `-inf` to `+inf`
/// carries an infinite shift.
fn shifted(l: f64, delta: f64) -> f64 {
    let l2 = l + delta;
    if l2.is_nan() && delta.is_infinite() {
        delta
    } else {
        l2
    }
}

/// A clean belief together with the exact log-ratio shift caused by an attack.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairedBelief {
    pub log_ratio: f64,
    pub delta: f64,
}

impl PairedBelief {
    pub fn clean(&self) -> Belief {
        Belief::from_log_ratio(self.log_ratio)
    }

    pub fn attacked(&self) -> Belief {
        Belief::from_log_ratio(shifted(self.log_ratio, self.delta))
    }

    /// `|X - Z|`.
    pub fn damage(&self) -> f64 {
        bias_gap(self.log_ratio, self.delta)
    }
}

/// Runs BP on clean and attacked leaves at once, tracking the difference of
/// log-ratios directly. Returns the first-child chain indexed by height:
/// entry `r` is the node at offset 0 of height `r`, entry `depth` the root.
pub fn bp_paired_chain(
    shape: &TreeShape,
    clean: &SpinVector,
    attacked: &SpinVector,
    epsilon: f64,
    channel: LeafChannel,
) -> Result<Vec<PairedBelief>> {
    check_leaves(shape, clean)?;
    check_leaves(shape, attacked)?;
    let kernel = Kernel::new(epsilon)?;
    let b = shape.arity();
    let first = |s: &SpinVector| channel.leaf_belief(s.get(0)).log_ratio;
    let l0 = first(clean);
    let mut chain = vec![PairedBelief {
        log_ratio: l0,
        delta: if clean.get(0) == attacked.get(0) {
            0.0
        } else {
            first(attacked) - l0
        },
    }];
    if shape.depth() == 0 {
        return Ok(chain);
    }
    let coef = kernel.leaf_coefficient(channel);
    let mut level: Vec<PairedBelief> = (0..shape.leaf_count() / b)
        .map(|j| {
            let mut l = 0.0;
            let mut d = 0.0;
            for i in b * j..b * j + b {
                let s = clean.get(i);
                l += if s.is_plus() { coef } else { -coef };
                let s2 = attacked.get(i);
                if s2 != s {
                    d += if s2.is_plus() { 2.0 * coef } else { -2.0 * coef };
                }
            }
            PairedBelief { log_ratio: l, delta: d }
        })
        .collect();
    chain.push(level[0]);
    for _ in 2..=shape.depth() {
        level = level
            .chunks_exact(b)
            .map(|kids| combine_paired(&kernel, kids))
            .collect();
        chain.push(level[0]);
    }
    Ok(chain)
}

pub(crate) fn combine_paired(kernel: &Kernel, kids: &[PairedBelief]) -> PairedBelief {
    let mut l = 0.0;
    let mut d = 0.0;
    for k in kids {
        l += kernel.term(k.log_ratio);
        d += kernel.term_diff(k.log_ratio, k.delta);
    }
    PairedBelief { log_ratio: l, delta: d }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn naive(children: &[f64], eps: f64) -> f64 {
        let p: f64 = children.iter().map(|x| 1.0 + eps * x).product();
        let m: f64 = children.iter().map(|x| 1.0 - eps * x).product();
        (p - m) / (p + m)
    }

    fn beliefs(xs: &[f64]) -> Vec<Belief> {
        xs.iter().map(|&x| Belief::from_bias(x)).collect()
    }

    #[test]
    fn combine_examples() {
        assert_eq!(bp_combine(&beliefs(&[0.0, 0.0, 0.0]), 0.7).unwrap().bias(), 0.0);
        for &(x, eps) in &[(0.3, 0.9), (-1.0, 0.5), (0.999, 0.1)] {
            let got = bp_combine(&beliefs(&[x]), eps).unwrap().bias();
            assert!((got - eps * x).abs() < 1e-14, "{got} vs {}", eps * x);
        }
        let got = bp_combine(&beliefs(&[1.0, 1.0]), 0.5).unwrap().bias();
        assert!((got - 0.8).abs() < 1e-14);
        assert!(bp_combine(&[], 1.0).is_err());
    }

    #[test]
    fn root_example() {
        let shape = TreeShape::new(3, 1).unwrap();
        let leaves: SpinVector = "++-".parse().unwrap();
        let x = bp_root(&shape, &leaves, 0.3, LeafChannel::CLEAN).unwrap();
        assert!((x.bias() - 0.3).abs() < 1e-14);
        let neg = bp_root(&shape, &leaves.negated(), 0.3, LeafChannel::CLEAN).unwrap();
        assert_eq!(neg.bias(), -x.bias());
    }

    #[test]
    fn all_levels_match_root_and_scalar_recursion() {
        let shape = TreeShape::new(3, 4).unwrap();
        let leaves = SpinVector::filled(shape.leaf_count(), Spin::Plus);
        let eps = 0.45;
        let levels = bp_all_levels(&shape, &leaves, eps, LeafChannel::CLEAN).unwrap();
        assert!(levels[0].iter().all(|b| b.bias() == 1.0));
        let root = bp_root(&shape, &leaves, eps, LeafChannel::CLEAN).unwrap();
        assert_eq!(levels[4][0], root);
        let mut x = 1.0;
        for level in levels.iter().skip(1) {
            x = naive(&[x, x, x], eps);
            for b in level {
                assert!((b.bias() - x).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn noisy_leaf_level_is_scaled() {
        let shape = TreeShape::new(2, 2).unwrap();
        let leaves: SpinVector = "+-++".parse().unwrap();
        let ch = LeafChannel::new(0.4).unwrap();
        let levels = bp_all_levels(&shape, &leaves, 0.6, ch).unwrap();
        let got: Vec<f64> = levels[0].iter().map(Belief::bias).collect();
        assert_eq!(got, vec![0.4, -0.4, 0.4, 0.4]);
        assert!(LeafChannel::new(0.0).is_err());
        assert!(LeafChannel::new(1.1).is_err());
    }

    #[test]
    fn tv_examples() {
        let b = Belief::from_bias;
        assert_eq!(tv_from_biases(b(0.8), b(0.8)), 0.0);
        assert_eq!(tv_from_biases(b(1.0), b(-1.0)), 1.0);
        assert!((tv_from_biases(b(0.5), b(0.1)) - 0.2).abs() < 1e-15);
    }

    #[test]
    fn wide_nodes_stay_finite() {
        let xs = vec![Belief::from_bias(0.999_999); 10_000];
        let out = bp_combine(&xs, 0.999).unwrap();
        assert!(out.log_ratio().is_finite() && out.bias() == 1.0);
        let shape = TreeShape::new(10_000, 1).unwrap();
        let leaves = SpinVector::filled(10_000, Spin::Minus);
        let root = bp_root(&shape, &leaves, 0.999, LeafChannel::CLEAN).unwrap();
        assert!(root.log_ratio().is_finite() && root.bias() == -1.0);
    }

    #[test]
    fn term_diff_resolves_tiny_shifts() {
        let k = Kernel::new(0.5).unwrap();
        for &l in &[-40.0, -3.0, -0.5, 0.0, 0.7, 5.0, 60.0] {
            let d = 1e-9;
            let coarse = k.term(l + d) - k.term(l);
            let fine = k.term_diff(l, d);
            assert!((fine - coarse).abs() <= 1e-6 * fine.abs().max(1e-300) + 1e-15, "{l}");
            let tiny = 1e-30;
            let slope = k.term_diff(l, tiny) / tiny;
            let (e, u) = (0.5f64, f64::exp(-l.abs()));
            let exact = (1.0 + e) * u / ((1.0 - e) + (1.0 + e) * u) - (1.0 - e) * u / ((1.0 + e) + (1.0 - e) * u);
            assert!((slope - exact).abs() < 1e-9 * exact.abs(), "{l}: {slope} {exact}");
        }
    }

    #[test]
    fn bias_gap_matches_direct_difference() {
        for &(l, d) in &[(0.3, 0.2), (-5.0, 1.5), (10.0, -12.0), (0.0, 1e-3)] {
            let direct = (Belief::from_log_ratio(l).bias() - Belief::from_log_ratio(l + d).bias()).abs();
            assert!((bias_gap(l, d) - direct).abs() < 1e-14);
        }
        // at this saturation the biases themselves are both exactly 1.0
        let g = bias_gap(-80.0, 1e-6);
        let expect = 2.0 * (-80.0f64).exp() * 1e-6;
        assert!((g / expect - 1.0).abs() < 1e-5);
        assert_eq!(bias_gap(f64::NEG_INFINITY, f64::INFINITY), 2.0);
    }

    #[test]
    fn paired_chain_matches_two_sweeps() {
        let shape = TreeShape::new(3, 3).unwrap();
        let clean: SpinVector = "+-++-+++-+-++-+--++++-+++-+".parse().unwrap();
        let mut attacked = clean.clone();
        attacked.flip(0);
        attacked.flip(13);
        let ch = LeafChannel::new(0.8).unwrap();
        let chain = bp_paired_chain(&shape, &clean, &attacked, 0.6, ch).unwrap();
        let x = bp_all_levels(&shape, &clean, 0.6, ch).unwrap();
        let z = bp_all_levels(&shape, &attacked, 0.6, ch).unwrap();
        for r in 0..=3 {
            let want = (x[r][0].bias() - z[r][0].bias()).abs();
            assert!((chain[r].damage() - want).abs() < 1e-13, "height {r}");
            assert!((chain[r].clean().bias() - x[r][0].bias()).abs() < 1e-13);
        }
    }

    proptest! {
        #[test]
        fn combine_matches_product_form(xs in proptest::collection::vec(-1.0f64..=1.0, 1..8), eps in 0.0f64..0.99) {
            let got = bp_combine(&beliefs(&xs), eps).unwrap().bias();
            prop_assert!((got - naive(&xs, eps)).abs() < 1e-12);
            prop_assert!((-1.0..=1.0).contains(&got));
        }

        #[test]
        fn combine_is_monotone(xs in proptest::collection::vec(-1.0f64..=1.0, 1..6), i in any::<usize>(), up in 0.0f64..1.0, eps in 0.0f64..0.99) {
            let i = i % xs.len();
            let mut raised = xs.clone();
            raised[i] = (raised[i] + up).min(1.0);
            let lo = bp_combine(&beliefs(&xs), eps).unwrap().bias();
            let hi = bp_combine(&beliefs(&raised), eps).unwrap().bias();
            prop_assert!(hi >= lo - 1e-15);
        }

        #[test]
        fn combine_is_symmetric_and_odd(xs in proptest::collection::vec(-1.0f64..=1.0, 1..6), eps in 0.0f64..0.99) {
            let base = bp_combine(&beliefs(&xs), eps).unwrap().bias();
            let mut rev = xs.clone();
            rev.reverse();
            let r = bp_combine(&beliefs(&rev), eps).unwrap().bias();
            prop_assert!((r - base).abs() < 1e-14);
            let neg: Vec<f64> = xs.iter().map(|x| -x).collect();
            let n = bp_combine(&beliefs(&neg), eps).unwrap().bias();
            prop_assert!((n + base).abs() < 1e-15);
        }

        #[test]
        fn bias_and_log_ratio_agree(l in -700.0f64..700.0) {
            let b = Belief::from_log_ratio(l);
            let via = 2.0 / (1.0 + l.exp()) - 1.0;
            prop_assert!((b.bias() - via).abs() < 1e-9 || b.bias().abs() >= 1.0 - 1e-12);
        }
    }
}
