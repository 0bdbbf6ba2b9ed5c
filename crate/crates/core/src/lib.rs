//! Targeted greybox fuzzing with an online lookahead analysis.
//!
//! The crate is organised bottom-up:
//!
//! * [`minivm`]: a deterministic stack machine with a tracing interpreter.
//! * [`absint`]: a constant-propagation abstract interpreter over that machine.
//! * [`lookahead`]: finds the shortest prefix of an executed path after which
//!   no target location can be reached, and hashes it into a lookahead id.
//! * [`fuzzer`]: the greybox loop whose power schedule is driven by the rarity
//!   of lookahead ids and split points.
//! * [`stats`]: repeated-trial experiments, medians, Mann-Whitney U and A12.
//! * [`cli`]: the `lafuzz` command line.

pub mod minivm;
pub mod absint;
pub mod lookahead;
pub mod fuzzer;
pub mod stats;
pub mod cli;
