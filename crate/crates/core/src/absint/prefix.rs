use thiserror::Error;

use crate::minivm::{ExecTrace, Loc, Program, Status};

use super::domain::AbstractState;
use super::transfer::{step, Step, Successors};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PrefixError {
    #[error("trace is empty or does not start at the program entry")]
    BadEntry,
    #[error("prefix length {len} out of range 1..={trace_len}")]
    BadLength { len: usize, trace_len: usize },
    #[error("trace position {index} (location {loc}) does not follow from the previous location")]
    Mismatch { index: usize, loc: Loc },
}

/// Abstract state after a path prefix.
#[derive(Clone, Debug)]
pub struct PrefixPost {
    /// Where execution may continue after the prefix, and in which state.
    ///
    /// One entry (the next traced location) when the trace continues, none when
    /// the trace halted at the end of the prefix, and every abstract successor
    /// when the trace was cut off by its step budget.
    pub continuations: Vec<(Loc, AbstractState)>,
}

impl PrefixPost {
    /// The postcondition and the location following the prefix, when the trace continues.
    pub fn single(&self) -> Option<(&AbstractState, Loc)> {
        match self.continuations.as_slice() {
            [(loc, phi)] => Some((phi, *loc)),
            _ => None,
        }
    }
}

/// Abstract execution restricted to one concrete path.
///
/// Each step applies the transfer function to the traced instruction and keeps
/// only the successor the trace actually took, so branch conditions along the
/// path refine the state. Since the inputs are abstracted to Top, the state
/// after a prefix describes every input whose path starts with that prefix.
pub struct PrefixWalker<'a> {
    program: &'a Program,
    trace: &'a ExecTrace,
    consumed: usize,
    state: AbstractState,
    tail: Vec<(Loc, AbstractState)>,
}

impl<'a> PrefixWalker<'a> {
    pub fn new(program: &'a Program, trace: &'a ExecTrace) -> Result<Self, PrefixError> {
        if trace.locations.first() != Some(&program.entry()) {
            return Err(PrefixError::BadEntry);
        }
        Ok(PrefixWalker { program, trace, consumed: 0, state: AbstractState::initial(), tail: Vec::new() })
    }

    /// Number of trace locations executed so far.
    pub fn consumed(&self) -> usize {
        self.consumed
    }

    pub fn is_done(&self) -> bool {
        self.consumed >= self.trace.locations.len()
    }

    /// Executes the next traced location.
    pub fn advance(&mut self) -> Result<(), PrefixError> {
        let locs = &self.trace.locations;
        let index = self.consumed;
        let loc = *locs.get(index).ok_or(PrefixError::BadLength { len: index + 1, trace_len: locs.len() })?;
        let mut state = std::mem::replace(&mut self.state, AbstractState::bottom());
        let successors: Successors = match step(&mut state, loc, self.program) {
            Step::Next if self.program.contains(loc.next()) => vec![(loc.next(), state)],
            Step::Next | Step::Stuck => Vec::new(),
            Step::Branch(out) => out,
        };
        self.consumed += 1;
        match locs.get(index + 1) {
            Some(&next) => {
                let mut joined: Option<AbstractState> = None;
                for (l, s) in successors {
                    if l == next {
                        joined = Some(match joined {
                            Some(j) => j.join(&s),
                            None => s,
                        });
                    }
                }
                self.state =
                    joined.ok_or(PrefixError::Mismatch { index: index + 1, loc: next })?;
            }
            None => {
                self.state = AbstractState::bottom();
                self.tail = if self.trace.status == Status::OutOfSteps { successors } else { Vec::new() };
            }
        }
        Ok(())
    }

    /// Continuations after the locations consumed so far.
    pub fn post(&self) -> PrefixPost {
        let continuations = match self.trace.locations.get(self.consumed) {
            Some(&next) => vec![(next, self.state.clone())],
            None => self.tail.clone(),
        };
        PrefixPost { continuations }
    }
}

/// Runs the abstract interpreter along the first `prefix_len` locations of `trace`.
pub fn prefix_inference(
    program: &Program,
    trace: &ExecTrace,
    prefix_len: usize,
) -> Result<PrefixPost, PrefixError> {
    if prefix_len == 0 || prefix_len > trace.locations.len() {
        return Err(PrefixError::BadLength { len: prefix_len, trace_len: trace.locations.len() });
    }
    let mut walker = PrefixWalker::new(program, trace)?;
    while walker.consumed() < prefix_len {
        walker.advance()?;
    }
    Ok(walker.post())
}
