//! Constant-propagation abstract interpretation.
//!
//! Two entry points mirror the two halves of the lookahead analysis:
//! [`prefix_inference`] runs path-sensitively along an executed prefix, and
//! [`targets_unreachable`] computes a path-insensitive forward fixed point
//! from the resulting state to decide whether any target can still be hit.

mod domain;
mod fixpoint;
mod prefix;
mod transfer;

pub use domain::{join_state, join_value, AbstractState, AbstractValue, CellMap, Origin, Slot, Space};
pub use fixpoint::{suffix_fixpoint, targets_unreachable, SuffixCheckResult, SuffixOptions};
pub use prefix::{prefix_inference, PrefixError, PrefixPost, PrefixWalker};
pub use transfer::{transfer, Successors};
