//! Lookahead analysis: the shortest no-target-ahead prefix of an executed path.
//!
//! The executed path is scanned in order. At each split point (the first entry
//! into a basic block, within the first `prefix_cap` trace positions) the path
//! leading to that location is run through the abstract interpreter, and a
//! fixed point starting at the split point checks whether any target can still
//! be reached. The first prefix, up to and including a split point, for which
//! no target is reachable is hashed into the lookahead id. If none is found, the whole path
//! is hashed: a finished path trivially has no target ahead.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Serialize, Serializer};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::absint::{suffix_fixpoint, PrefixWalker, SuffixOptions};
use crate::minivm::{execute, ExecTrace, Loc, Program, DEFAULT_STEP_BUDGET};

pub const DEFAULT_PREFIX_CAP: usize = 8192;

/// Environment variable overriding [`DEFAULT_PREFIX_CAP`] in the command line tool.
pub const PREFIX_CAP_ENV: &str = "LOOKAHEAD_PREFIX_CAP";

#[derive(Debug, Error, PartialEq, Eq)]
#[error("target location {0} is outside the program")]
pub struct InvalidTarget(pub Loc);

/// Target locations, validated against a program.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TargetSet {
    locations: BTreeSet<Loc>,
    mask: Vec<bool>,
}

impl TargetSet {
    pub fn new(program: &Program, locations: impl IntoIterator<Item = Loc>) -> Result<Self, InvalidTarget> {
        let locations: BTreeSet<Loc> = locations.into_iter().collect();
        let mut mask = vec![false; program.len()];
        for &loc in &locations {
            if !program.contains(loc) {
                return Err(InvalidTarget(loc));
            }
            mask[loc.index()] = true;
        }
        Ok(TargetSet { locations, mask })
    }

    pub fn empty(program: &Program) -> Self {
        TargetSet { locations: BTreeSet::new(), mask: vec![false; program.len()] }
    }

    pub fn locations(&self) -> &BTreeSet<Loc> {
        &self.locations
    }

    pub fn is_empty(&self) -> bool {
        self.locations.is_empty()
    }

    pub fn contains(&self, loc: Loc) -> bool {
        self.mask.get(loc.index()).copied().unwrap_or(false)
    }

    /// Whether `trace` executes any target.
    pub fn hit_by(&self, trace: &ExecTrace) -> bool {
        !self.locations.is_empty() && trace.visits(&self.mask)
    }
}

/// Lookahead identifier: 64-bit truncation of SHA-256 over a location sequence.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Lid(pub u64);

impl fmt::Display for Lid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:016x}", self.0)
    }
}

impl Serialize for Lid {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

/// Hashes a sequence of locations, each as an 8-byte big-endian index.
pub fn lid_of_prefix(locations: &[Loc]) -> Lid {
    let mut hasher = Sha256::new();
    let mut buf = Vec::with_capacity(locations.len().min(4096) * 8);
    for chunk in locations.chunks(4096) {
        buf.clear();
        for loc in chunk {
            buf.extend_from_slice(&(loc.0 as u64).to_be_bytes());
        }
        hasher.update(&buf);
    }
    let digest = hasher.finalize();
    Lid(u64::from_be_bytes(digest[..8].try_into().expect("digest has 32 bytes")))
}

pub fn lid_of_full_path(trace: &ExecTrace) -> Lid {
    lid_of_prefix(&trace.locations)
}

/// How suffixes are checked.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SuffixCheck {
    /// Forward abstract interpretation from the prefix postcondition.
    AbstractInterpretation,
    /// Never prove anything; every lookahead id covers the whole path.
    AlwaysReachable,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LookaheadConfig {
    pub prefix_cap: usize,
    pub suffix_check: SuffixCheck,
}

impl Default for LookaheadConfig {
    fn default() -> Self {
        LookaheadConfig { prefix_cap: DEFAULT_PREFIX_CAP, suffix_check: SuffixCheck::AbstractInterpretation }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct LookaheadResult {
    pub lid: Lid,
    /// Split points along the returned prefix, in the order they were reached.
    pub split_points: Vec<Loc>,
    pub prefix_len: usize,
    pub proved_at_split: bool,
}

/// Tracks which block leaders a path has already entered.
#[derive(Clone, Debug)]
pub struct SeenBlocks(Vec<bool>);

impl SeenBlocks {
    pub fn new(program: &Program) -> Self {
        SeenBlocks(vec![false; program.len()])
    }
}

/// Whether trace position `i` is a split point: the first entry into a basic
/// block along this trace, within the first `prefix_cap` positions.
pub fn is_split_point(
    i: usize,
    trace: &ExecTrace,
    program: &Program,
    seen_blocks: &mut SeenBlocks,
    prefix_cap: usize,
) -> bool {
    let loc = trace.locations[i];
    if !program.is_leader(loc) {
        return false;
    }
    let first_visit = !std::mem::replace(&mut seen_blocks.0[loc.index()], true);
    first_visit && i < prefix_cap
}

/// Executes `input` and analyzes the resulting path.
pub fn analyze(program: &Program, input: &[u8], targets: &TargetSet) -> LookaheadResult {
    let trace = execute(program, input, DEFAULT_STEP_BUDGET);
    analyze_trace(program, &trace, targets, &LookaheadConfig::default())
}

/// Analyzes an already recorded path.
pub fn analyze_trace(
    program: &Program,
    trace: &ExecTrace,
    targets: &TargetSet,
    config: &LookaheadConfig,
) -> LookaheadResult {
    let len = trace.locations.len();
    let mut seen = SeenBlocks::new(program);
    let mut split_points = Vec::new();
    let mut walker = match config.suffix_check {
        SuffixCheck::AbstractInterpretation => PrefixWalker::new(program, trace).ok(),
        SuffixCheck::AlwaysReachable => None,
    };

    // no split point can occur at or after the cap
    for i in 0..len.min(config.prefix_cap) {
        if is_split_point(i, trace, program, &mut seen, config.prefix_cap) {
            split_points.push(trace.locations[i]);
            if let Some(w) = walker.as_ref() {
                // the fixed point starts at the split point, before its instruction
                let post = w.post();
                let check =
                    suffix_fixpoint(program, &post.continuations, targets.locations(), SuffixOptions::default());
                if check.unreachable {
                    return LookaheadResult {
                        lid: lid_of_prefix(&trace.locations[..=i]),
                        split_points,
                        prefix_len: i + 1,
                        proved_at_split: true,
                    };
                }
            }
        }
        if let Some(w) = walker.as_mut() {
            if w.advance().is_err() {
                // the abstract path diverged from the concrete one; stop proving
                walker = None;
            }
        }
    }

    LookaheadResult { lid: lid_of_full_path(trace), split_points, prefix_len: len, proved_at_split: false }
}
