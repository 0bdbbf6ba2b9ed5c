use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::minivm::{Instruction, Loc, Program};

use super::domain::AbstractState;
use super::transfer::{step, Step};

/// Outcome of a forward fixed-point run from one or more start states.
#[derive(Clone, Debug, Serialize)]
pub struct SuffixCheckResult {
    pub unreachable: bool,
    /// Joined state at each block entry reached. Partial if the run stopped at the first hit.
    pub visited: BTreeMap<Loc, AbstractState>,
    pub iterations: usize,
}

#[derive(Clone, Copy, Debug)]
pub struct SuffixOptions {
    /// Stop as soon as a target or an external call becomes reachable.
    pub stop_at_first_hit: bool,
}

impl Default for SuffixOptions {
    fn default() -> Self {
        SuffixOptions { stop_at_first_hit: true }
    }
}

fn is_hit(program: &Program, targets: &BTreeSet<Loc>, loc: Loc) -> bool {
    targets.contains(&loc) || program.get(loc) == Some(&Instruction::ExtCall)
}

/// Forward worklist fixed point over joined states.
///
/// States are kept at block leaders and start locations; straight-line code
/// between them is walked in place. Every other location has a single
/// predecessor, so this is the same as keeping one state per location.
///
/// Targets count as unreachable only if neither a target nor any `EXTCALL`
/// acquires a reachable state: calls leave the program, so they may lead
/// anywhere. No widening is needed: values are flat, stacks only shrink on
/// depth conflicts, and maps only grow towards havoc.
pub fn suffix_fixpoint(
    program: &Program,
    starts: &[(Loc, AbstractState)],
    targets: &BTreeSet<Loc>,
    options: SuffixOptions,
) -> SuffixCheckResult {
    let mut states: Vec<Option<AbstractState>> = vec![None; program.len()];
    let mut is_entry: Vec<bool> = (0..program.len()).map(|i| program.is_leader(Loc::from(i))).collect();
    for (loc, _) in starts {
        if program.contains(*loc) {
            is_entry[loc.index()] = true;
        }
    }
    let mut worklist: BTreeSet<Loc> = BTreeSet::new();
    let mut hit = false;
    let mut iterations = 0;

    let add = |states: &mut Vec<Option<AbstractState>>, worklist: &mut BTreeSet<Loc>, loc: Loc, s: AbstractState| {
        if !s.reachable || !program.contains(loc) {
            return false;
        }
        let changed = match &mut states[loc.index()] {
            Some(existing) => existing.join_in_place(&s),
            slot @ None => {
                *slot = Some(s);
                true
            }
        };
        if changed {
            worklist.insert(loc);
        }
        is_hit(program, targets, loc)
    };

    for (loc, s) in starts {
        hit |= add(&mut states, &mut worklist, *loc, s.clone());
    }

    'outer: while !(hit && options.stop_at_first_hit) {
        let Some(entry) = worklist.pop_first() else { break };
        let mut current = states[entry.index()].clone().expect("worklist entries have a state");
        let mut loc = entry;
        loop {
            iterations += 1;
            match step(&mut current, loc, program) {
                Step::Stuck => break,
                Step::Branch(successors) => {
                    for (succ, s) in successors {
                        hit |= add(&mut states, &mut worklist, succ, s);
                    }
                    break;
                }
                Step::Next => {
                    let next = loc.next();
                    if !program.contains(next) {
                        break;
                    }
                    if is_entry[next.index()] {
                        hit |= add(&mut states, &mut worklist, next, current);
                        break;
                    }
                    loc = next;
                    if is_hit(program, targets, loc) {
                        hit = true;
                        if options.stop_at_first_hit {
                            break 'outer;
                        }
                    }
                }
            }
        }
    }

    let visited = states
        .into_iter()
        .enumerate()
        .filter_map(|(i, s)| s.map(|s| (Loc::from(i), s)))
        .collect();
    SuffixCheckResult { unreachable: !hit, visited, iterations }
}

/// Whether every target is unreachable from `loc` in state `phi`.
pub fn targets_unreachable(
    program: &Program,
    loc: Loc,
    phi: &AbstractState,
    targets: &BTreeSet<Loc>,
) -> SuffixCheckResult {
    suffix_fixpoint(program, &[(loc, phi.clone())], targets, SuffixOptions::default())
}
