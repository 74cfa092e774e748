//! Leaf-corrupting adversaries: budgets, validation and attack strategies.

use std::cmp::Ordering;
use std::fmt;

use rand::Rng;

use crate::broadcast::upward_log_ratios;
use crate::error::{Error, Result};
use crate::inference::{bias_gap, Belief, Kernel, LeafChannel};
use crate::rng::{stream, Purpose};
use crate::tree::{CorruptionMask, Spin, SpinVector, TreeShape};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AdversaryBudget {
    /// Flips restricted to leaves whose permission coin came up heads.
    SemirandomRho(f64),
    /// Any `floor(rho * leaves)` flips.
    FractionRho(f64),
    /// Any `c` flips.
    CFlip(usize),
    /// At most `c` flips inside every height-`k` block.
    SpreadCK { c: usize, k: usize },
}

impl AdversaryBudget {
    pub fn validate(&self, shape: &TreeShape) -> Result<()> {
        match *self {
            AdversaryBudget::SemirandomRho(rho) if !(0.0..1.0).contains(&rho) => {
                Err(Error::invalid("rho", format!("{rho} is outside [0, 1)")))
            }
            AdversaryBudget::FractionRho(rho) if !(0.0..=1.0).contains(&rho) => {
                Err(Error::invalid("rho", format!("{rho} is outside [0, 1]")))
            }
            AdversaryBudget::SpreadCK { k, .. } if k == 0 || k > shape.depth() => Err(Error::OutOfRange {
                what: "block height k",
                value: k,
                limit: shape.depth() + 1,
            }),
            _ => Ok(()),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            AdversaryBudget::SemirandomRho(_) => "semirandom",
            AdversaryBudget::FractionRho(_) => "fraction",
            AdversaryBudget::CFlip(_) => "cflip",
            AdversaryBudget::SpreadCK { .. } => "spread",
        }
    }
}

impl fmt::Display for AdversaryBudget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AdversaryBudget::SemirandomRho(r) => write!(f, "semirandom:{r}"),
            AdversaryBudget::FractionRho(r) => write!(f, "fraction:{r}"),
            AdversaryBudget::CFlip(c) => write!(f, "cflip:{c}"),
            AdversaryBudget::SpreadCK { c, k } => write!(f, "spread:{c}:{k}"),
        }
    }
}

/// A set of flipped leaves and the leaves that result.
#[derive(Debug, Clone, PartialEq)]
pub struct Attack {
    pub flipped: Vec<usize>,
    pub leaves: SpinVector,
}

impl Attack {
    pub fn none(leaves: &SpinVector) -> Self {
        Attack {
            flipped: Vec::new(),
            leaves: leaves.clone(),
        }
    }

    /// Panics if an index is out of range.
    pub fn from_flips(leaves: &SpinVector, flips: impl IntoIterator<Item = usize>) -> Self {
        let mut flipped: Vec<usize> = flips.into_iter().collect();
        flipped.sort_unstable();
        flipped.dedup();
        let mut out = leaves.clone();
        for &i in &flipped {
            out.flip(i);
        }
        Attack {
            flipped,
            leaves: out,
        }
    }

    /// The attack turning `before` into `after`.
    pub fn between(before: &SpinVector, after: &SpinVector) -> Self {
        Attack {
            flipped: before.differences(after),
            leaves: after.clone(),
        }
    }

    pub fn flip_count(&self) -> usize {
        self.flipped.len()
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Violation {
    #[error("flipped index {leaf} is not a leaf (leaf count {leaf_count})")]
    OutOfRange { leaf: usize, leaf_count: usize },
    #[error("leaf {leaf} is flipped more than once")]
    Duplicate { leaf: usize },
    #[error("semirandom budget needs a mask")]
    MissingMask,
    #[error("mask has length {got}, expected {expected}")]
    MaskLength { got: usize, expected: usize },
    #[error("leaf {leaf} is flipped but not permitted by the mask")]
    NotPermitted { leaf: usize },
    #[error("{count} flips exceed the budget of {limit}")]
    TooManyFlips { count: usize, limit: usize },
    #[error("block {block} (leaves {start}..{end}) has {count} flips, budget {limit}")]
    BlockOverBudget {
        block: usize,
        start: usize,
        end: usize,
        count: usize,
        limit: usize,
    },
    #[error("invalid budget: {0}")]
    Budget(String),
}

/// Largest flip count allowed by a fraction budget.
pub fn fraction_limit(rho: f64, leaf_count: usize) -> usize {
    (rho * leaf_count as f64 + 1e-9).floor() as usize
}

/// Checks an attack against a budget, reporting the first violated constraint.
pub fn validate_attack(
    attack: &Attack,
    budget: &AdversaryBudget,
    mask: Option<&CorruptionMask>,
    shape: &TreeShape,
) -> std::result::Result<(), Violation> {
    budget
        .validate(shape)
        .map_err(|e| Violation::Budget(e.to_string()))?;
    let n = shape.leaf_count();
    let mut seen: Vec<usize> = Vec::with_capacity(attack.flipped.len());
    for &leaf in &attack.flipped {
        if leaf >= n {
            return Err(Violation::OutOfRange {
                leaf,
                leaf_count: n,
            });
        }
        seen.push(leaf);
    }
    seen.sort_unstable();
    if let Some(w) = seen.windows(2).find(|w| w[0] == w[1]) {
        return Err(Violation::Duplicate { leaf: w[0] });
    }
    match *budget {
        AdversaryBudget::SemirandomRho(_) => {
            let mask = mask.ok_or(Violation::MissingMask)?;
            if mask.len() != n {
                return Err(Violation::MaskLength {
                    got: mask.len(),
                    expected: n,
                });
            }
            if let Some(&leaf) = attack.flipped.iter().find(|&&l| !mask.is_permitted(l)) {
                return Err(Violation::NotPermitted { leaf });
            }
        }
        AdversaryBudget::FractionRho(rho) => {
            let limit = fraction_limit(rho, n);
            if seen.len() > limit {
                return Err(Violation::TooManyFlips {
                    count: seen.len(),
                    limit,
                });
            }
        }
        AdversaryBudget::CFlip(c) => {
            if seen.len() > c {
                return Err(Violation::TooManyFlips {
                    count: seen.len(),
                    limit: c,
                });
            }
        }
        AdversaryBudget::SpreadCK { c, k } => {
            let blocks = shape.height_k_blocks(k).expect("validated k");
            for (block, range) in blocks.into_iter().enumerate() {
                let count = seen.iter().filter(|&&l| range.contains(&l)).count();
                if count > c {
                    return Err(Violation::BlockOverBudget {
                        block,
                        start: range.start,
                        end: range.end,
                        count,
                        limit: c,
                    });
                }
            }
        }
    }
    Ok(())
}

/// Independent Bernoulli(`rho`) permissions from thresholded uniforms, so
/// masks drawn from one generator state are nested as `rho` grows.
pub fn sample_mask_with<R: Rng + ?Sized>(rho: f64, leaf_count: usize, rng: &mut R) -> Result<CorruptionMask> {
    if !(0.0..1.0).contains(&rho) {
        return Err(Error::invalid("rho", format!("{rho} is outside [0, 1)")));
    }
    let bits: Vec<bool> = (0..leaf_count).map(|_| rng.random::<f64>() < rho).collect();
    Ok(CorruptionMask::from_bools(&bits, rho))
}

pub fn sample_mask(rho: f64, leaf_count: usize, seed: u64) -> Result<CorruptionMask> {
    sample_mask_with(rho, leaf_count, &mut stream(seed, Purpose::Mask, 0))
}

/// What an optimizing adversary maximizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Objective {
    /// `|Z_root - X_root|`.
    Damage,
    /// `s * (Z_root - X_root)`: moving the root belief toward spin `s`.
    Push(Spin),
}

impl Objective {
    fn value(&self, clean: f64, attacked: f64) -> f64 {
        match self {
            Objective::Damage => bias_gap(clean, attacked - clean),
            Objective::Push(s) => {
                let x = Belief::from_log_ratio(clean).bias();
                let z = Belief::from_log_ratio(attacked).bias();
                s.sign() * (z - x)
            }
        }
    }
}

/// Root belief maintained under single-leaf flips by recomputing only the
/// path to the root. Values agree bit-for-bit with a fresh sweep.
#[derive(Debug, Clone)]
pub struct IncrementalBp {
    shape: TreeShape,
    kernel: Kernel,
    coef: f64,
    leaves: SpinVector,
    log_ratios: Vec<f64>,
}

impl IncrementalBp {
    pub fn new(shape: &TreeShape, leaves: &SpinVector, epsilon: f64, channel: LeafChannel) -> Result<Self> {
        if leaves.len() != shape.leaf_count() {
            return Err(Error::LengthMismatch {
                what: "leaf vector",
                got: leaves.len(),
                expected: shape.leaf_count(),
            });
        }
        let kernel = Kernel::new(epsilon)?;
        Ok(IncrementalBp {
            shape: *shape,
            kernel,
            coef: kernel.leaf_coefficient(channel),
            leaves: leaves.clone(),
            log_ratios: upward_log_ratios(shape, leaves, &kernel, channel),
        })
    }

    pub fn leaves(&self) -> &SpinVector {
        &self.leaves
    }

    /// Log-ratio of the root posterior.
    pub fn root_log_ratio(&self) -> f64 {
        match self.log_ratios.first() {
            Some(&l) => l,
            None => {
                if self.leaves.get(0).is_plus() {
                    f64::NEG_INFINITY
                } else {
                    f64::INFINITY
                }
            }
        }
    }

    pub fn root(&self) -> Belief {
        Belief::from_log_ratio(self.root_log_ratio())
    }

    /// Log-ratio of internal node `id`.
    pub fn log_ratio(&self, id: usize) -> f64 {
        self.log_ratios[id]
    }

    pub fn flip(&mut self, leaf: usize) {
        self.leaves.flip(leaf);
        if self.shape.depth() == 0 {
            return;
        }
        let b = self.shape.arity();
        let leaf_start = self.shape.leaf_start();
        let mut id = (leaf_start + leaf - 1) / b;
        let first = b * id + 1 - leaf_start;
        self.log_ratios[id] = (first..first + b)
            .map(|i| if self.leaves.get(i).is_plus() { self.coef } else { -self.coef })
            .sum();
        while id > 0 {
            id = (id - 1) / b;
            let kids = b * id + 1..b * id + 1 + b;
            self.log_ratios[id] = kids.map(|k| self.kernel.term(self.log_ratios[k])).sum();
        }
    }
}

/// Largest permitted set `attack_bruteforce` will enumerate.
pub const MAX_BRUTEFORCE: usize = 22;

/// `a < b` for flip sets given as bitmasks over the same ascending index list,
/// ordered lexicographically as sorted sequences.
fn lex_less(a: u64, b: u64) -> bool {
    if a == b {
        return false;
    }
    let j = (a ^ b).trailing_zeros();
    let above = |m: u64| j < 63 && (m >> (j + 1)) != 0;
    if (a >> j) & 1 == 1 {
        above(b)
    } else {
        !above(a)
    }
}

/// Exact maximizer of the objective over every subset of permitted leaves.
/// Ties go to the lexicographically smallest flip set.
pub fn attack_bruteforce(
    shape: &TreeShape,
    leaves: &SpinVector,
    mask: &CorruptionMask,
    epsilon: f64,
    channel: LeafChannel,
    objective: Objective,
) -> Result<(Attack, f64)> {
    let permitted: Vec<usize> = mask.permitted().collect();
    if permitted.len() > MAX_BRUTEFORCE {
        return Err(Error::Capacity {
            what: "permitted leaf count",
            size: permitted.len(),
            limit: MAX_BRUTEFORCE,
        });
    }
    let mut bp = IncrementalBp::new(shape, leaves, epsilon, channel)?;
    let clean = bp.root_log_ratio();
    let mut best = (0u64, objective.value(clean, clean));
    let mut gray = 0u64;
    for step in 1u64..1 << permitted.len() {
        let pos = step.trailing_zeros() as usize;
        gray ^= 1 << pos;
        bp.flip(permitted[pos]);
        let v = objective.value(clean, bp.root_log_ratio());
        match v.partial_cmp(&best.1) {
            Some(Ordering::Greater) => best = (gray, v),
            Some(Ordering::Equal) if lex_less(gray, best.0) => best = (gray, v),
            _ => {}
        }
    }
    let flips = (0..permitted.len())
        .filter(|&i| (best.0 >> i) & 1 == 1)
        .map(|i| permitted[i]);
    Ok((Attack::from_flips(leaves, flips), best.1))
}

/// Coordinate ascent over single toggles of permitted leaves; the lowest index
/// wins ties. Stops when no toggle strictly improves or after `max_rounds`.
pub fn attack_greedy(
    shape: &TreeShape,
    leaves: &SpinVector,
    mask: &CorruptionMask,
    epsilon: f64,
    channel: LeafChannel,
    objective: Objective,
    max_rounds: usize,
) -> Result<(Attack, f64)> {
    let permitted: Vec<usize> = mask.permitted().collect();
    let mut bp = IncrementalBp::new(shape, leaves, epsilon, channel)?;
    let clean = bp.root_log_ratio();
    let mut current = objective.value(clean, clean);
    for _ in 0..max_rounds {
        let mut best: Option<(usize, f64)> = None;
        for &leaf in &permitted {
            bp.flip(leaf);
            let v = objective.value(clean, bp.root_log_ratio());
            bp.flip(leaf);
            if v > best.map_or(current, |b| b.1) {
                best = Some((leaf, v));
            }
        }
        match best {
            Some((leaf, v)) => {
                bp.flip(leaf);
                current = v;
            }
            None => break,
        }
    }
    Ok((Attack::between(leaves, bp.leaves()), current))
}

/// Flips every permitted leaf that disagrees with `target`.
pub fn attack_signpush(leaves: &SpinVector, mask: &CorruptionMask, target: Spin) -> Attack {
    assert_eq!(leaves.len(), mask.len(), "mask length");
    Attack::from_flips(leaves, mask.permitted().filter(|&i| leaves.get(i) != target))
}

/// Within each height-`k` block, flips the first `c` leaves that disagree
/// with `target`.
pub fn attack_spread_signpush(
    shape: &TreeShape,
    leaves: &SpinVector,
    c: usize,
    k: usize,
    target: Spin,
) -> Result<Attack> {
    let blocks = shape.height_k_blocks(k)?;
    let flips = blocks
        .into_iter()
        .flat_map(|r| r.filter(|&i| leaves.get(i) != target).take(c));
    Ok(Attack::from_flips(leaves, flips))
}

/// Flips the first `c` leaves that disagree with `target`.
pub fn attack_cflip_signpush(leaves: &SpinVector, c: usize, target: Spin) -> Attack {
    Attack::from_flips(leaves, (0..leaves.len()).filter(|&i| leaves.get(i) != target).take(c))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inference::bp_root;
    use rand::Rng;
    use proptest::prelude::*;

    fn random_instance(seed: u64, b: usize, t: usize, rho: f64) -> (TreeShape, SpinVector, CorruptionMask) {
        let shape = TreeShape::new(b, t).unwrap();
        let mut rng = stream(seed, Purpose::Instance, 0);
        let leaves = SpinVector::from_spins((0..shape.leaf_count()).map(|_| Spin::from_bit(rng.random())));
        let mask = sample_mask(rho, shape.leaf_count(), seed).unwrap();
        (shape, leaves, mask)
    }

    #[test]
    fn mask_extremes() {
        assert_eq!(sample_mask(0.0, 1000, 1).unwrap().popcount(), 0);
        assert_eq!(sample_mask(1.0 - 1e-15, 1000, 1).unwrap().popcount(), 1000);
        assert!(sample_mask(1.0, 10, 1).is_err());
    }

    #[test]
    fn mask_popcount_concentrates() {
        let m = sample_mask(0.25, 1_000_000, 5).unwrap();
        let sd = 187_500f64.sqrt();
        assert!((m.popcount() as f64 - 250_000.0).abs() < 4.0 * sd);
    }

    #[test]
    fn masks_are_nested_in_rho() {
        let lo = sample_mask(0.1, 5000, 3).unwrap();
        let hi = sample_mask(0.3, 5000, 3).unwrap();
        assert!(lo.permitted().all(|i| hi.is_permitted(i)));
    }

    #[test]
    fn validate_examples() {
        let shape = TreeShape::new(2, 2).unwrap();
        let leaves: SpinVector = "----".parse().unwrap();
        let empty = Attack::none(&leaves);
        let mask = CorruptionMask::none(4);
        for budget in [
            AdversaryBudget::SemirandomRho(0.2),
            AdversaryBudget::FractionRho(0.0),
            AdversaryBudget::CFlip(0),
            AdversaryBudget::SpreadCK { c: 0, k: 1 },
        ] {
            assert_eq!(validate_attack(&empty, &budget, Some(&mask), &shape), Ok(()));
        }
        let three = Attack::from_flips(&leaves, [0, 1, 2]);
        assert_eq!(
            validate_attack(&three, &AdversaryBudget::CFlip(2), None, &shape),
            Err(Violation::TooManyFlips { count: 3, limit: 2 })
        );
        let same_block = Attack::from_flips(&leaves, [0, 1]);
        let spread = AdversaryBudget::SpreadCK { c: 1, k: 1 };
        assert!(matches!(
            validate_attack(&same_block, &spread, None, &shape),
            Err(Violation::BlockOverBudget { block: 0, .. })
        ));
        let split = Attack::from_flips(&leaves, [0, 2]);
        assert_eq!(validate_attack(&split, &spread, None, &shape), Ok(()));
        assert_eq!(
            validate_attack(&split, &AdversaryBudget::SemirandomRho(0.5), None, &shape),
            Err(Violation::MissingMask)
        );
        let m = CorruptionMask::from_permitted(4, &[0], 0.5).unwrap();
        assert_eq!(
            validate_attack(&split, &AdversaryBudget::SemirandomRho(0.5), Some(&m), &shape),
            Err(Violation::NotPermitted { leaf: 2 })
        );
    }

    #[test]
    fn bruteforce_hand_example() {
        let shape = TreeShape::new(3, 1).unwrap();
        let leaves: SpinVector = "+++".parse().unwrap();
        let mask = CorruptionMask::from_permitted(3, &[0], 0.3).unwrap();
        let (attack, v) = attack_bruteforce(&shape, &leaves, &mask, 0.5, LeafChannel::CLEAN, Objective::Damage).unwrap();
        assert_eq!(attack.flipped, vec![0]);
        let bp = |xs: &[f64]| {
            let p: f64 = xs.iter().map(|x| 1.0 + 0.5 * x).product();
            let m: f64 = xs.iter().map(|x| 1.0 - 0.5 * x).product();
            (p - m) / (p + m)
        };
        let want = (bp(&[-1.0, 1.0, 1.0]) - bp(&[1.0, 1.0, 1.0])).abs();
        assert!((v - want).abs() < 1e-14, "{v} {want}");
        let empty = CorruptionMask::none(3);
        let (a, v0) = attack_bruteforce(&shape, &leaves, &empty, 0.5, LeafChannel::CLEAN, Objective::Damage).unwrap();
        assert!(a.flipped.is_empty() && v0 == 0.0);
    }

    #[test]
    fn bruteforce_guard() {
        let shape = TreeShape::new(2, 5).unwrap();
        let leaves = SpinVector::filled(32, Spin::Plus);
        let mask = CorruptionMask::all(32);
        assert!(matches!(
            attack_bruteforce(&shape, &leaves, &mask, 0.5, LeafChannel::CLEAN, Objective::Damage),
            Err(Error::Capacity { .. })
        ));
    }

    #[test]
    fn lexicographic_order() {
        // bit i stands for the i-th permitted index
        assert!(lex_less(0b000, 0b001));
        assert!(lex_less(0b101, 0b010));
        assert!(lex_less(0b001, 0b011));
        assert!(!lex_less(0b011, 0b001));
        assert!(lex_less(0b011, 0b101));
    }

    #[test]
    fn incremental_matches_fresh_sweep() {
        let (shape, leaves, _) = random_instance(4, 3, 4, 0.0);
        let ch = LeafChannel::new(0.7).unwrap();
        let mut inc = IncrementalBp::new(&shape, &leaves, 0.45, ch).unwrap();
        let mut cur = leaves.clone();
        for &leaf in &[0usize, 80, 17, 0, 44] {
            inc.flip(leaf);
            cur.flip(leaf);
            let fresh = bp_root(&shape, &cur, 0.45, ch).unwrap();
            assert_eq!(inc.root(), fresh);
        }
    }

    #[test]
    fn signpush_examples() {
        let leaves: SpinVector = "++++".parse().unwrap();
        assert!(attack_signpush(&leaves, &CorruptionMask::all(4), Spin::Plus).flipped.is_empty());
        let mixed: SpinVector = "+-+-".parse().unwrap();
        let a = attack_signpush(&mixed, &CorruptionMask::all(4), Spin::Minus);
        assert_eq!(a.leaves.to_string(), "----");
    }

    #[test]
    fn signpush_flip_rate() {
        let (_, leaves, mask) = random_instance(8, 2, 18, 0.3);
        let a = attack_signpush(&leaves, &mask, Spin::Plus);
        let rate = a.flip_count() as f64 / leaves.len() as f64;
        assert!((rate - 0.15).abs() < 0.003, "{rate}");
    }

    #[test]
    fn spread_signpush_examples() {
        let shape = TreeShape::new(2, 2).unwrap();
        let leaves: SpinVector = "----".parse().unwrap();
        assert!(attack_spread_signpush(&shape, &leaves, 0, 1, Spin::Plus).unwrap().flipped.is_empty());
        let a = attack_spread_signpush(&shape, &leaves, 1, 1, Spin::Plus).unwrap();
        assert_eq!(a.flipped, vec![0, 2]);
        let mixed: SpinVector = "-+--".parse().unwrap();
        let wide = attack_spread_signpush(&shape, &mixed, 4, 1, Spin::Plus).unwrap();
        assert_eq!(wide, attack_signpush(&mixed, &CorruptionMask::all(4), Spin::Plus));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn no_strategy_beats_bruteforce(seed in any::<u64>(), b in 2usize..4, t in 1usize..4, eps in 0.05f64..0.95, rho in 0.0f64..0.6) {
            let (shape, leaves, mask) = random_instance(seed, b, t, rho);
            prop_assume!(mask.popcount() <= 12);
            let ch = LeafChannel::CLEAN;
            let (bf, best) = attack_bruteforce(&shape, &leaves, &mask, eps, ch, Objective::Damage).unwrap();
            let budget = AdversaryBudget::SemirandomRho(rho);
            prop_assert_eq!(validate_attack(&bf, &budget, Some(&mask), &shape), Ok(()));
            let (g, gv) = attack_greedy(&shape, &leaves, &mask, eps, ch, Objective::Damage, 64).unwrap();
            prop_assert_eq!(validate_attack(&g, &budget, Some(&mask), &shape), Ok(()));
            prop_assert!(gv >= 0.0 && gv <= best);
            let x = bp_root(&shape, &leaves, eps, ch).unwrap();
            for target in [Spin::Plus, Spin::Minus] {
                let s = attack_signpush(&leaves, &mask, target);
                prop_assert_eq!(validate_attack(&s, &budget, Some(&mask), &shape), Ok(()));
                let z = bp_root(&shape, &s.leaves, eps, ch).unwrap();
                prop_assert!((z.bias() - x.bias()).abs() <= best * (1.0 + 1e-12) + 1e-15);
            }
            // symmetric instance has the same optimum
            let (_, neg) = attack_bruteforce(&shape, &leaves.negated(), &mask, eps, ch, Objective::Damage).unwrap();
            prop_assert!((neg - best).abs() <= 1e-15 * best.max(1.0));
        }

        #[test]
        fn enlarging_mask_never_hurts(seed in any::<u64>(), eps in 0.05f64..0.95) {
            let shape = TreeShape::new(2, 3).unwrap();
            let mut rng = stream(seed, Purpose::Instance, 1);
            let leaves = SpinVector::from_spins((0..8).map(|_| Spin::from_bit(rng.random())));
            let small = sample_mask(0.3, 8, seed).unwrap();
            let large = sample_mask(0.7, 8, seed).unwrap();
            let ch = LeafChannel::CLEAN;
            let (_, a) = attack_bruteforce(&shape, &leaves, &small, eps, ch, Objective::Damage).unwrap();
            let (_, b) = attack_bruteforce(&shape, &leaves, &large, eps, ch, Objective::Damage).unwrap();
            prop_assert!(b >= a);
        }

        #[test]
        fn spread_attacks_validate(seed in any::<u64>(), b in 2usize..4, t in 1usize..5, c in 0usize..4, kp in any::<usize>()) {
            let (shape, leaves, _) = random_instance(seed, b, t, 0.0);
            let k = 1 + kp % t;
            let a = attack_spread_signpush(&shape, &leaves, c, k, Spin::Minus).unwrap();
            prop_assert_eq!(validate_attack(&a, &AdversaryBudget::SpreadCK { c, k }, None, &shape), Ok(()));
            let cf = attack_cflip_signpush(&leaves, c, Spin::Plus);
            prop_assert_eq!(validate_attack(&cf, &AdversaryBudget::CFlip(c), None, &shape), Ok(()));
        }
    }
}
