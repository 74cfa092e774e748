//! The marking coupling that maps leaves drawn under a `+` root to leaves
//! distributed as under a `-` root while flipping few of them.
//!
//! Here `epsilon` is a half-bias: a child agrees with its parent with
//! probability `1/2 + epsilon`, so the coupled broadcast process has copy bias
//! `2*epsilon`. The per-node survival probability is
//! `xi = 4*epsilon/(1 + 2*epsilon)`, which is below 1 only for `epsilon < 1/2`.

use rand::Rng;

use crate::adversary::fraction_limit;
use crate::broadcast::sample_internal_given_leaves_with;
use crate::error::{Error, Result};
use crate::rng::{stream, Purpose};
use crate::tree::{CorruptionMask, Spin, SpinVector, TreeShape};

/// Tolerance on the mask density required by the coin-coupled adversary.
pub const DENSITY_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CouplingParams {
    pub shape: TreeShape,
    epsilon: f64,
    pub seed: u64,
}

impl CouplingParams {
    pub fn new(shape: TreeShape, epsilon: f64, seed: u64) -> Result<Self> {
        if !(0.0..0.5).contains(&epsilon) {
            return Err(Error::invalid(
                "coupling epsilon",
                format!("{epsilon} is outside [0, 1/2); the survival probability would reach 1"),
            ));
        }
        Ok(CouplingParams {
            shape,
            epsilon,
            seed,
        })
    }

    #[inline]
    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn xi(&self) -> f64 {
        xi(self.epsilon)
    }

    /// Copy bias of the broadcast process being coupled.
    pub fn broadcast_epsilon(&self) -> f64 {
        2.0 * self.epsilon
    }

    /// Flip-count scale `(4 e eps)^t * leaves` used in the analysis.
    pub fn analysis_threshold(&self) -> f64 {
        (4.0 * std::f64::consts::E * self.epsilon).powi(self.shape.depth() as i32) * self.shape.leaf_count() as f64
    }
}

pub fn xi(epsilon: f64) -> f64 {
    4.0 * epsilon / (1.0 + 2.0 * epsilon)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CouplingOutcome {
    pub input: SpinVector,
    pub output: SpinVector,
    /// Leaves where `output` differs from `input`, ascending.
    pub flipped: Vec<usize>,
    /// The resampled labeling `y`, all nodes.
    pub y: SpinVector,
    /// The coupled labeling `y'`, all nodes.
    pub y_prime: SpinVector,
    pub marked: Vec<bool>,
}

impl CouplingOutcome {
    /// Checks that `y` extends the input and that every flipped leaf has an
    /// unmarked ancestor chain; returns a description of the first failure.
    pub fn check(&self, shape: &TreeShape) -> std::result::Result<(), String> {
        let leaf_start = shape.leaf_start();
        for i in 0..shape.leaf_count() {
            if self.y.get(leaf_start + i) != self.input.get(i) {
                return Err(format!("resampled labeling disagrees with input at leaf {i}"));
            }
            if self.y_prime.get(leaf_start + i) != self.output.get(i) {
                return Err(format!("output disagrees with coupled labeling at leaf {i}"));
            }
        }
        if self.input.differences(&self.output) != self.flipped {
            return Err("flip set is not the symmetric difference".into());
        }
        for &leaf in &self.flipped {
            let mut id = leaf_start + leaf;
            loop {
                if self.marked[id] {
                    return Err(format!("flipped leaf {leaf} has marked ancestor {id}"));
                }
                match shape.parent_of(id) {
                    Some(p) if p > 0 => id = p,
                    _ => break,
                }
            }
        }
        Ok(())
    }
}

/// One run of the coupling. Internal survival coins come from `coins`; leaf
/// coins come from `leaf_coins` when given (heads iff permitted).
pub fn couple_with<R: Rng + ?Sized, C: Rng + ?Sized>(
    shape: &TreeShape,
    epsilon: f64,
    x: &SpinVector,
    resample: &mut R,
    coins: &mut C,
    leaf_coins: Option<&CorruptionMask>,
) -> Result<CouplingOutcome> {
    CouplingParams::new(*shape, epsilon, 0)?;
    if let Some(m) = leaf_coins {
        if m.len() != shape.leaf_count() {
            return Err(Error::LengthMismatch {
                what: "mask",
                got: m.len(),
                expected: shape.leaf_count(),
            });
        }
    }
    let xi = xi(epsilon);
    let y = sample_internal_given_leaves_with(shape, 2.0 * epsilon, x, Spin::Plus, resample)?.spins;
    let n = shape.node_count();
    let leaf_start = shape.leaf_start();
    let mut y_prime = y.clone();
    let mut marked = vec![false; n];
    y_prime.set(0, Spin::Minus);
    for id in 1..n {
        let parent = (id - 1) / shape.arity();
        if marked[parent] {
            marked[id] = true;
            continue;
        }
        if y.get(id) == Spin::Minus {
            marked[id] = true;
            continue;
        }
        let heads = match leaf_coins {
            Some(mask) if id >= leaf_start => mask.is_permitted(id - leaf_start),
            _ => coins.random::<f64>() < xi,
        };
        if heads {
            y_prime.set(id, Spin::Minus);
        } else {
            marked[id] = true;
        }
    }
    let output = y_prime.slice(leaf_start..n);
    Ok(CouplingOutcome {
        flipped: x.differences(&output),
        input: x.clone(),
        output,
        y,
        y_prime,
        marked,
    })
}

/// Coupling driven by the streams of `params.seed` at `index`.
pub fn couple_once(params: &CouplingParams, x: &SpinVector) -> Result<CouplingOutcome> {
    couple_indexed(params, x, 0)
}

pub fn couple_indexed(params: &CouplingParams, x: &SpinVector, index: u64) -> Result<CouplingOutcome> {
    let mut resample = stream(params.seed, Purpose::Resample, index);
    let mut coins = stream(params.seed, Purpose::Coupling, index);
    couple_with(&params.shape, params.epsilon, x, &mut resample, &mut coins, None)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FractionOutcome {
    pub leaves: SpinVector,
    /// Whether the coupled leaves were within budget and returned.
    pub coupled: bool,
    pub flip_count: usize,
    pub limit: usize,
}

/// Returns the coupled leaves if they flip at most `rho * leaves` entries,
/// otherwise `x` unchanged.
pub fn fraction_adversary_from(outcome: &CouplingOutcome, rho: f64) -> Result<FractionOutcome> {
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::invalid("rho", format!("{rho} is outside [0, 1]")));
    }
    let limit = fraction_limit(rho, outcome.input.len());
    let flip_count = outcome.flipped.len();
    let coupled = flip_count <= limit;
    Ok(FractionOutcome {
        leaves: if coupled {
            outcome.output.clone()
        } else {
            outcome.input.clone()
        },
        coupled,
        flip_count,
        limit,
    })
}

pub fn fraction_adversary(params: &CouplingParams, rho: f64, x: &SpinVector) -> Result<FractionOutcome> {
    fraction_adversary_from(&couple_once(params, x)?, rho)
}

/// Coupling whose leaf-level survival coins are the permission bits of a
/// mask of density `xi`, so every flip lands on a permitted leaf.
pub fn semirandom_coupling_adversary(
    params: &CouplingParams,
    mask: &CorruptionMask,
    x: &SpinVector,
) -> Result<CouplingOutcome> {
    if (mask.density() - params.xi()).abs() > DENSITY_TOLERANCE {
        return Err(Error::invalid(
            "mask density",
            format!("{} differs from xi = {}", mask.density(), params.xi()),
        ));
    }
    let mut resample = stream(params.seed, Purpose::Resample, 0);
    let mut coins = stream(params.seed, Purpose::Coupling, 0);
    couple_with(&params.shape, params.epsilon, x, &mut resample, &mut coins, Some(mask))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adversary::{sample_mask, validate_attack, AdversaryBudget, Attack};
    use crate::broadcast::sample_leaves_with;

    #[test]
    fn rejects_large_epsilon() {
        let shape = TreeShape::new(2, 2).unwrap();
        assert!(CouplingParams::new(shape, 0.5, 0).is_err());
        let p = CouplingParams::new(shape, 0.25, 0).unwrap();
        assert!((p.xi() - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(p.broadcast_epsilon(), 0.5);
    }

    #[test]
    fn invariants_hold_per_trial() {
        let shape = TreeShape::new(3, 3).unwrap();
        let params = CouplingParams::new(shape, 0.3, 11).unwrap();
        let mut rng = stream(1, Purpose::Tree, 0);
        for i in 0..500 {
            let x = sample_leaves_with(&shape, 0.6, Spin::Plus, &mut rng).unwrap();
            let out = couple_indexed(&params, &x, i).unwrap();
            out.check(&shape).unwrap();
        }
    }

    #[test]
    fn zero_epsilon_marks_everything() {
        let shape = TreeShape::new(2, 4).unwrap();
        let params = CouplingParams::new(shape, 0.0, 2).unwrap();
        let x = SpinVector::filled(16, Spin::Plus);
        for i in 0..100 {
            assert!(couple_indexed(&params, &x, i).unwrap().flipped.is_empty());
        }
    }

    #[test]
    fn fraction_extremes() {
        let shape = TreeShape::new(2, 3).unwrap();
        let params = CouplingParams::new(shape, 0.3, 5).unwrap();
        let x = SpinVector::filled(8, Spin::Plus);
        let none = fraction_adversary(&params, 0.0, &x).unwrap();
        assert_eq!(none.leaves, x);
        let all = fraction_adversary(&params, 1.0, &x).unwrap();
        assert!(all.coupled);
        assert_eq!(all.leaves, couple_once(&params, &x).unwrap().output);
    }

    #[test]
    fn leaf_coins_follow_mask() {
        let shape = TreeShape::new(3, 3).unwrap();
        let mut rng = stream(2, Purpose::Tree, 0);
        for i in 0..200u64 {
            let x = sample_leaves_with(&shape, 0.4, Spin::Plus, &mut rng).unwrap();
            let mut r1 = stream(i, Purpose::Resample, 0);
            let mut c1 = stream(i, Purpose::Coupling, 0);
            let none = couple_with(&shape, 0.2, &x, &mut r1, &mut c1, Some(&CorruptionMask::none(27))).unwrap();
            assert!(none.flipped.is_empty());
            let mut r2 = stream(i, Purpose::Resample, 0);
            let mut c2 = stream(i, Purpose::Coupling, 0);
            let all = couple_with(&shape, 0.2, &x, &mut r2, &mut c2, Some(&CorruptionMask::all(27))).unwrap();
            assert_eq!(none.marked[..shape.leaf_start()], all.marked[..shape.leaf_start()]);
        }
    }

    #[test]
    fn semirandom_variant_stays_in_mask() {
        let shape = TreeShape::new(3, 3).unwrap();
        let params = CouplingParams::new(shape, 0.2, 9).unwrap();
        let budget = AdversaryBudget::SemirandomRho(params.xi());
        let mut rng = stream(4, Purpose::Tree, 0);
        for i in 0..10_000u64 {
            let x = sample_leaves_with(&shape, 0.4, Spin::Plus, &mut rng).unwrap();
            let mask = sample_mask(params.xi(), 27, i).unwrap();
            let out = semirandom_coupling_adversary(&params, &mask, &x).unwrap();
            let attack = Attack::between(&x, &out.output);
            assert_eq!(validate_attack(&attack, &budget, Some(&mask), &shape), Ok(()));
        }
        let wrong = sample_mask(0.5, 27, 0).unwrap();
        let x = SpinVector::filled(27, Spin::Plus);
        assert!(semirandom_coupling_adversary(&params, &wrong, &x).is_err());
    }
}
