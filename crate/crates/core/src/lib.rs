//! Broadcast process on complete trees: sampling, exact belief propagation,
//! leaf-corrupting adversaries, the marking coupling and noise-injected robust
//! inference.

pub mod adversary;
pub mod broadcast;
pub mod coupling;
pub mod error;
pub mod inference;
pub mod oracle;
pub mod rng;
pub mod robust;
pub mod tree;

pub use adversary::{AdversaryBudget, Attack, Objective, Violation};
pub use broadcast::{BroadcastParams, LabeledTree};
pub use coupling::{CouplingOutcome, CouplingParams};
pub use error::{Error, Result};
pub use inference::{Belief, LeafChannel, PairedBelief};
pub use robust::RobustParams;
pub use tree::{CorruptionMask, Spin, SpinVector, TreeShape};
