//! Complete-tree index arithmetic and packed spin storage.
//!
//! Nodes are numbered breadth-first: the root is 0, level `l` occupies the
//! contiguous id range starting at `(b^l - 1)/(b - 1)`, and the children of
//! node `id` are `b*id + 1 ..= b*id + b`. Leaves of any subtree therefore form
//! a contiguous run, so restricting a leaf vector to a subtree is a slice.

use std::fmt;
use std::ops::{Neg, Range};
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Spin {
    Minus,
    Plus,
}

impl Spin {
    #[inline]
    pub fn from_bit(bit: bool) -> Self {
        if bit {
            Spin::Plus
        } else {
            Spin::Minus
        }
    }

    #[inline]
    pub fn is_plus(self) -> bool {
        self == Spin::Plus
    }

    #[inline]
    pub fn value(self) -> i8 {
        match self {
            Spin::Plus => 1,
            Spin::Minus => -1,
        }
    }

    #[inline]
    pub fn sign(self) -> f64 {
        f64::from(self.value())
    }

    pub fn to_char(self) -> char {
        match self {
            Spin::Plus => '+',
            Spin::Minus => '-',
        }
    }

    pub fn from_char(c: char) -> Option<Self> {
        match c {
            '+' => Some(Spin::Plus),
            '-' => Some(Spin::Minus),
            _ => None,
        }
    }
}

impl Neg for Spin {
    type Output = Spin;

    #[inline]
    fn neg(self) -> Spin {
        match self {
            Spin::Plus => Spin::Minus,
            Spin::Minus => Spin::Plus,
        }
    }
}

impl fmt::Display for Spin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_char())
    }
}

/// Arity and depth of a complete tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TreeShape {
    arity: usize,
    depth: usize,
    leaf_count: usize,
    node_count: usize,
}

impl TreeShape {
    /// Fails if `arity == 0` or the node count does not fit in `usize`.
    pub fn new(arity: usize, depth: usize) -> Result<Self> {
        if arity == 0 {
            return Err(Error::invalid("arity", "must be at least 1"));
        }
        let overflow = || Error::invalid("tree shape", format!("{arity}-ary tree of depth {depth} is too large"));
        let mut leaf_count = 1usize;
        let mut node_count = 1usize;
        for _ in 0..depth {
            leaf_count = leaf_count.checked_mul(arity).ok_or_else(overflow)?;
            node_count = node_count.checked_add(leaf_count).ok_or_else(overflow)?;
        }
        // children_of computes arity*id + arity for the last internal node
        node_count.checked_mul(arity).ok_or_else(overflow)?;
        Ok(TreeShape {
            arity,
            depth,
            leaf_count,
            node_count,
        })
    }

    #[inline]
    pub fn arity(&self) -> usize {
        self.arity
    }

    #[inline]
    pub fn depth(&self) -> usize {
        self.depth
    }

    #[inline]
    pub fn leaf_count(&self) -> usize {
        self.leaf_count
    }

    #[inline]
    pub fn node_count(&self) -> usize {
        self.node_count
    }

    /// Nodes that are not leaves (the root counts, unless depth is 0).
    #[inline]
    pub fn internal_count(&self) -> usize {
        self.node_count - self.leaf_count
    }

    /// Number of nodes at `level` (root is level 0).
    pub fn level_size(&self, level: usize) -> usize {
        debug_assert!(level <= self.depth);
        self.arity.pow(level as u32)
    }

    /// Id of the first node at `level`.
    pub fn level_start(&self, level: usize) -> usize {
        debug_assert!(level <= self.depth + 1);
        if self.arity == 1 {
            level
        } else {
            (self.arity.pow(level as u32) - 1) / (self.arity - 1)
        }
    }

    pub fn level_range(&self, level: usize) -> Range<usize> {
        let start = self.level_start(level);
        start..start + self.level_size(level)
    }

    /// Id of the first leaf.
    #[inline]
    pub fn leaf_start(&self) -> usize {
        self.node_count - self.leaf_count
    }

    pub fn node_index(&self, level: usize, offset: usize) -> Result<usize> {
        if level > self.depth {
            return Err(Error::OutOfRange {
                what: "level",
                value: level,
                limit: self.depth + 1,
            });
        }
        let size = self.level_size(level);
        if offset >= size {
            return Err(Error::OutOfRange {
                what: "offset",
                value: offset,
                limit: size,
            });
        }
        Ok(self.level_start(level) + offset)
    }

    fn check(&self, id: usize) -> Result<()> {
        if id >= self.node_count {
            Err(Error::OutOfRange {
                what: "node id",
                value: id,
                limit: self.node_count,
            })
        } else {
            Ok(())
        }
    }

    /// `(level, offset)` of a node id.
    pub fn position(&self, id: usize) -> Result<(usize, usize)> {
        self.check(id)?;
        let mut level = 0;
        while self.level_start(level + 1) <= id {
            level += 1;
        }
        Ok((level, id - self.level_start(level)))
    }

    pub fn is_leaf(&self, id: usize) -> bool {
        id >= self.leaf_start() && id < self.node_count
    }

    /// Ids of the children of `id`; empty for leaves.
    pub fn children_of(&self, id: usize) -> Result<Range<usize>> {
        self.check(id)?;
        if self.is_leaf(id) {
            let end = id * self.arity + 1;
            return Ok(end..end);
        }
        let first = self.arity * id + 1;
        Ok(first..first + self.arity)
    }

    #[inline]
    pub fn parent_of(&self, id: usize) -> Option<usize> {
        if id == 0 || id >= self.node_count {
            None
        } else {
            Some((id - 1) / self.arity)
        }
    }

    /// Node id of the leaf with leaf index `leaf`.
    #[inline]
    pub fn leaf_node(&self, leaf: usize) -> usize {
        self.leaf_start() + leaf
    }

    /// Half-open range of leaf indices below `id`.
    pub fn subtree_leaf_range(&self, id: usize) -> Result<Range<usize>> {
        let (level, offset) = self.position(id)?;
        let width = self.arity.pow((self.depth - level) as u32);
        Ok(offset * width..(offset + 1) * width)
    }

    /// Leaf ranges of the height-`k` subtrees hanging from level `depth - k`.
    pub fn height_k_blocks(&self, k: usize) -> Result<Vec<Range<usize>>> {
        if k == 0 || k > self.depth {
            return Err(Error::OutOfRange {
                what: "block height k",
                value: k,
                limit: self.depth + 1,
            });
        }
        let width = self.arity.pow(k as u32);
        let blocks = self.leaf_count / width;
        Ok((0..blocks).map(|i| i * width..(i + 1) * width).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
struct Bits {
    words: Vec<u64>,
    len: usize,
}

impl Bits {
    fn filled(len: usize, bit: bool) -> Self {
        let fill = if bit { u64::MAX } else { 0 };
        let mut words = vec![fill; len.div_ceil(64)];
        if bit && len % 64 != 0 {
            if let Some(last) = words.last_mut() {
                *last = (1u64 << (len % 64)) - 1;
            }
        }
        Bits { words, len }
    }

    #[inline]
    fn get(&self, i: usize) -> bool {
        debug_assert!(i < self.len);
        (self.words[i >> 6] >> (i & 63)) & 1 == 1
    }

    #[inline]
    fn set(&mut self, i: usize, bit: bool) {
        debug_assert!(i < self.len);
        let mask = 1u64 << (i & 63);
        if bit {
            self.words[i >> 6] |= mask;
        } else {
            self.words[i >> 6] &= !mask;
        }
    }

    #[inline]
    fn toggle(&mut self, i: usize) {
        debug_assert!(i < self.len);
        self.words[i >> 6] ^= 1u64 << (i & 63);
    }

    fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    fn from_iter<I: IntoIterator<Item = bool>>(iter: I) -> Self {
        let mut bits = Bits::default();
        for bit in iter {
            if bits.len % 64 == 0 {
                bits.words.push(0);
            }
            bits.len += 1;
            bits.set(bits.len - 1, bit);
        }
        bits
    }

    fn ones(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(w, &word)| {
            let mut rest = word;
            std::iter::from_fn(move || {
                if rest == 0 {
                    None
                } else {
                    let b = rest.trailing_zeros() as usize;
                    rest &= rest - 1;
                    Some(w * 64 + b)
                }
            })
        })
    }
}

/// A sequence of ±1 spins packed one bit per entry (1 = `+`).
#[derive(Clone, PartialEq, Eq, Hash, Default)]
pub struct SpinVector {
    bits: Bits,
}

impl SpinVector {
    pub fn filled(len: usize, spin: Spin) -> Self {
        SpinVector {
            bits: Bits::filled(len, spin.is_plus()),
        }
    }

    pub fn from_spins<I: IntoIterator<Item = Spin>>(spins: I) -> Self {
        SpinVector {
            bits: Bits::from_iter(spins.into_iter().map(Spin::is_plus)),
        }
    }

    /// Builds from ±1 integers; anything positive is `+`.
    pub fn from_signs(signs: &[i8]) -> Self {
        Self::from_spins(signs.iter().map(|&s| Spin::from_bit(s > 0)))
    }

    /// The packed words, least significant bit first; bits past `len` are zero.
    pub fn words(&self) -> &[u64] {
        &self.bits.words
    }

    pub fn from_words(words: Vec<u64>, len: usize) -> Result<Self> {
        if words.len() != len.div_ceil(64) {
            return Err(Error::LengthMismatch {
                what: "packed spin words",
                got: words.len(),
                expected: len.div_ceil(64),
            });
        }
        let mut bits = Bits { words, len };
        if len % 64 != 0 {
            if let Some(last) = bits.words.last_mut() {
                *last &= (1u64 << (len % 64)) - 1;
            }
        }
        Ok(SpinVector { bits })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.bits.len
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.bits.len == 0
    }

    #[inline]
    pub fn get(&self, i: usize) -> Spin {
        Spin::from_bit(self.bits.get(i))
    }

    #[inline]
    pub fn set(&mut self, i: usize, spin: Spin) {
        self.bits.set(i, spin.is_plus());
    }

    #[inline]
    pub fn flip(&mut self, i: usize) {
        self.bits.toggle(i);
    }

    pub fn iter(&self) -> impl Iterator<Item = Spin> + '_ {
        (0..self.len()).map(move |i| self.get(i))
    }

    pub fn count_plus(&self) -> usize {
        self.bits.count_ones()
    }

    /// Sum of the spins as integers.
    pub fn magnetization(&self) -> i64 {
        2 * self.count_plus() as i64 - self.len() as i64
    }

    pub fn negated(&self) -> Self {
        let words = self.bits.words.iter().map(|w| !w).collect();
        // from_words clears the padding bits
        Self::from_words(words, self.len()).expect("same length")
    }

    /// Copy of the entries in `range`.
    pub fn slice(&self, range: Range<usize>) -> Self {
        Self::from_spins(range.map(|i| self.get(i)))
    }

    /// Indices where `self` and `other` differ, ascending.
    pub fn differences(&self, other: &SpinVector) -> Vec<usize> {
        assert_eq!(self.len(), other.len(), "spin vectors of different length");
        self.bits
            .words
            .iter()
            .zip(&other.bits.words)
            .enumerate()
            .flat_map(|(w, (a, b))| {
                let mut rest = a ^ b;
                std::iter::from_fn(move || {
                    if rest == 0 {
                        None
                    } else {
                        let bit = rest.trailing_zeros() as usize;
                        rest &= rest - 1;
                        Some(w * 64 + bit)
                    }
                })
            })
            .collect()
    }

    pub fn hamming(&self, other: &SpinVector) -> usize {
        assert_eq!(self.len(), other.len(), "spin vectors of different length");
        self.bits
            .words
            .iter()
            .zip(&other.bits.words)
            .map(|(a, b)| (a ^ b).count_ones() as usize)
            .sum()
    }

    /// Packs the spins into an integer (entry `i` is bit `i`); needs `len <= 64`.
    pub fn to_code(&self) -> u64 {
        assert!(self.len() <= 64);
        self.bits.words.first().copied().unwrap_or(0)
    }

    pub fn from_code(code: u64, len: usize) -> Self {
        assert!(len <= 64);
        Self::from_words(if len == 0 { vec![] } else { vec![code] }, len).expect("one word")
    }
}

impl fmt::Display for SpinVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for s in self.iter() {
            write!(f, "{}", s.to_char())?;
        }
        Ok(())
    }
}

impl fmt::Debug for SpinVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SpinVector({self})")
    }
}

impl FromStr for SpinVector {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        s.chars()
            .map(Spin::from_char)
            .collect::<Option<Vec<_>>>()
            .map(Self::from_spins)
            .ok_or_else(|| Error::SpinLiteral(s.to_string()))
    }
}

/// Per-leaf flip permissions of a semirandom adversary.
#[derive(Clone, PartialEq, Debug)]
pub struct CorruptionMask {
    bits: Bits,
    density: f64,
}

impl CorruptionMask {
    pub fn from_bools(permitted: &[bool], density: f64) -> Self {
        CorruptionMask {
            bits: Bits::from_iter(permitted.iter().copied()),
            density,
        }
    }

    pub fn from_permitted(len: usize, permitted: &[usize], density: f64) -> Result<Self> {
        let mut bits = Bits::filled(len, false);
        for &i in permitted {
            if i >= len {
                return Err(Error::OutOfRange {
                    what: "mask index",
                    value: i,
                    limit: len,
                });
            }
            bits.set(i, true);
        }
        Ok(CorruptionMask { bits, density })
    }

    pub fn none(len: usize) -> Self {
        CorruptionMask {
            bits: Bits::filled(len, false),
            density: 0.0,
        }
    }

    pub fn all(len: usize) -> Self {
        CorruptionMask {
            bits: Bits::filled(len, true),
            density: 1.0,
        }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.bits.len
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.bits.len == 0
    }

    /// The Bernoulli parameter the mask was drawn with.
    #[inline]
    pub fn density(&self) -> f64 {
        self.density
    }

    #[inline]
    pub fn is_permitted(&self, leaf: usize) -> bool {
        self.bits.get(leaf)
    }

    pub fn popcount(&self) -> usize {
        self.bits.count_ones()
    }

    /// Permitted leaf indices, ascending.
    pub fn permitted(&self) -> impl Iterator<Item = usize> + '_ {
        self.bits.ones()
    }

    /// Restriction to a contiguous leaf range, e.g. one subtree.
    pub fn restrict(&self, range: Range<usize>) -> Self {
        CorruptionMask {
            bits: Bits::from_iter(range.map(|i| self.bits.get(i))),
            density: self.density,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn node_index_examples() {
        let shape = TreeShape::new(3, 2).unwrap();
        assert_eq!(shape.node_index(0, 0).unwrap(), 0);
        assert_eq!(shape.node_index(1, 2).unwrap(), 3);
        assert_eq!(shape.children_of(0).unwrap(), 1..4);
        assert_eq!(shape.node_count(), 13);
        assert_eq!(shape.leaf_count(), 9);
    }

    #[test]
    fn node_index_rejects_out_of_range() {
        let shape = TreeShape::new(3, 2).unwrap();
        assert!(matches!(shape.node_index(3, 0), Err(Error::OutOfRange { what: "level", .. })));
        assert!(matches!(shape.node_index(1, 3), Err(Error::OutOfRange { what: "offset", .. })));
        assert!(shape.children_of(13).is_err());
        assert!(shape.subtree_leaf_range(99).is_err());
    }

    #[test]
    fn unary_and_trivial_shapes() {
        let chain = TreeShape::new(1, 4).unwrap();
        assert_eq!(chain.node_count(), 5);
        assert_eq!(chain.leaf_count(), 1);
        assert_eq!(chain.children_of(2).unwrap(), 3..4);
        assert_eq!(chain.parent_of(3), Some(2));
        let single = TreeShape::new(5, 0).unwrap();
        assert_eq!(single.node_count(), 1);
        assert!(single.is_leaf(0));
        assert!(TreeShape::new(0, 3).is_err());
        assert!(TreeShape::new(1 << 20, 8).is_err());
    }

    #[test]
    fn subtree_leaf_ranges() {
        let shape = TreeShape::new(2, 3).unwrap();
        assert_eq!(shape.subtree_leaf_range(0).unwrap(), 0..8);
        let leaf = shape.leaf_node(5);
        assert_eq!(shape.subtree_leaf_range(leaf).unwrap(), 5..6);
        let node = shape.node_index(1, 1).unwrap();
        assert_eq!(shape.subtree_leaf_range(node).unwrap(), 4..8);
    }

    #[test]
    fn height_k_block_examples() {
        let blocks = TreeShape::new(2, 3).unwrap().height_k_blocks(1).unwrap();
        assert_eq!(blocks.len(), 4);
        assert!(blocks.iter().all(|b| b.len() == 2));
        let blocks = TreeShape::new(3, 2).unwrap().height_k_blocks(2).unwrap();
        assert_eq!(blocks, vec![0..9]);
        let blocks = TreeShape::new(2, 4).unwrap().height_k_blocks(2).unwrap();
        assert_eq!(blocks.len(), 4);
        assert!(blocks.iter().all(|b| b.len() == 4));
        assert!(TreeShape::new(2, 4).unwrap().height_k_blocks(0).is_err());
        assert!(TreeShape::new(2, 4).unwrap().height_k_blocks(5).is_err());
    }

    #[test]
    fn spin_literals() {
        let v: SpinVector = "++-".parse().unwrap();
        assert_eq!(v.len(), 3);
        assert_eq!(v.get(2), Spin::Minus);
        assert_eq!(v.to_string(), "++-");
        assert_eq!(v.magnetization(), 1);
        assert!("+x".parse::<SpinVector>().is_err());
        assert_eq!(v.negated().to_string(), "--+");
    }

    #[test]
    fn mask_basics() {
        let m = CorruptionMask::from_permitted(70, &[0, 65, 69], 0.1).unwrap();
        assert_eq!(m.popcount(), 3);
        assert_eq!(m.permitted().collect::<Vec<_>>(), vec![0, 65, 69]);
        assert_eq!(m.restrict(64..70).permitted().collect::<Vec<_>>(), vec![1, 5]);
        assert_eq!(CorruptionMask::all(70).popcount(), 70);
        assert!(CorruptionMask::from_permitted(3, &[3], 0.1).is_err());
    }

    proptest! {
        #[test]
        fn parent_inverts_child(arity in 1usize..6, depth in 0usize..5, pick in any::<usize>()) {
            let shape = TreeShape::new(arity, depth).unwrap();
            let id = pick % shape.node_count();
            for child in shape.children_of(id).unwrap() {
                prop_assert_eq!(shape.parent_of(child), Some(id));
                let (l, _) = shape.position(child).unwrap();
                prop_assert_eq!(l, shape.position(id).unwrap().0 + 1);
            }
            let (level, offset) = shape.position(id).unwrap();
            prop_assert_eq!(shape.node_index(level, offset).unwrap(), id);
        }

        #[test]
        fn blocks_partition_leaves(arity in 1usize..5, depth in 1usize..6, k_pick in any::<usize>()) {
            let shape = TreeShape::new(arity, depth).unwrap();
            let k = 1 + k_pick % depth;
            let blocks = shape.height_k_blocks(k).unwrap();
            prop_assert_eq!(blocks.len(), arity.pow((depth - k) as u32));
            let mut next = 0;
            for b in &blocks {
                prop_assert_eq!(b.start, next);
                prop_assert_eq!(b.len(), arity.pow(k as u32));
                next = b.end;
            }
            prop_assert_eq!(next, shape.leaf_count());
        }

        #[test]
        fn packed_storage_round_trips(signs in proptest::collection::vec(prop_oneof![Just(-1i8), Just(1i8)], 0..300)) {
            let v = SpinVector::from_signs(&signs);
            let back: Vec<i8> = v.iter().map(Spin::value).collect();
            prop_assert_eq!(&back, &signs);
            let again = SpinVector::from_words(v.words().to_vec(), v.len()).unwrap();
            prop_assert_eq!(&again, &v);
            prop_assert_eq!(v.to_string().parse::<SpinVector>().unwrap(), v.clone());
            prop_assert_eq!(v.negated().negated(), v);
        }
    }
}
