use crate::minivm::{eval_binary, eval_unary, BinOp, Instruction, Loc, Program, UnOp, Word, MAX_STACK};

use super::domain::{AbstractState, AbstractValue, Origin, Slot, Space};

/// Successor states of one abstract step. Usually one or two entries.
pub type Successors = Vec<(Loc, AbstractState)>;

fn pop(state: &mut AbstractState) -> Option<Slot> {
    match state.stack.pop() {
        Some(s) => Some(s),
        None if state.depth_conflict => Some(Slot::top()),
        None => None,
    }
}

/// Makes sure at least `n` slots are materialised. Under a depth conflict the
/// missing slots below the known part are unknown, so they are filled with Top.
fn ensure_depth(state: &mut AbstractState, n: usize) -> bool {
    let len = state.stack.len();
    if len >= n {
        return true;
    }
    if !state.depth_conflict {
        return false;
    }
    let mut padded = vec![Slot::top(); n - len];
    padded.append(&mut state.stack);
    state.stack = padded;
    true
}

fn push(state: &mut AbstractState, slot: Slot) -> bool {
    if state.stack.len() >= MAX_STACK {
        return false;
    }
    state.stack.push(slot);
    true
}

fn fold_binary(op: BinOp, a: AbstractValue, b: AbstractValue) -> AbstractValue {
    match (a, b) {
        (AbstractValue::Const(x), AbstractValue::Const(y)) => AbstractValue::Const(eval_binary(op, x, y)),
        (AbstractValue::Top, _) | (_, AbstractValue::Top) => AbstractValue::Top,
        _ => AbstractValue::Bottom,
    }
}

fn fold_unary(op: UnOp, a: AbstractValue) -> AbstractValue {
    match a {
        AbstractValue::Const(x) => AbstractValue::Const(eval_unary(op, x)),
        other => other,
    }
}

fn eq_origin(a: Slot, b: Slot) -> Option<Origin> {
    match (a.origin, b.value, b.origin, a.value) {
        (Some(Origin::Cell(s, addr)), AbstractValue::Const(k), _, _) => Some(Origin::CellEq(s, addr, k)),
        (_, _, Some(Origin::Cell(s, addr)), AbstractValue::Const(k)) => Some(Origin::CellEq(s, addr, k)),
        _ => None,
    }
}

fn iszero_origin(a: Slot) -> Option<Origin> {
    match a.origin? {
        Origin::Cell(s, addr) => Some(Origin::CellEq(s, addr, 0)),
        Origin::CellEq(s, addr, k) => Some(Origin::CellNe(s, addr, k)),
        Origin::CellNe(s, addr, k) => Some(Origin::CellEq(s, addr, k)),
    }
}

/// Drops origins that mention `cell` (or any cell of `space` when `cell` is None).
fn forget_origins(state: &mut AbstractState, space: Space, cell: Option<Word>) {
    for slot in &mut state.stack {
        if let Some(origin) = slot.origin {
            let (s, a) = origin.cell();
            if s == space && cell.is_none_or(|c| c == a) {
                slot.origin = None;
            }
        }
    }
}

fn store(state: &mut AbstractState, space: Space, addr: Slot, value: Slot) {
    match addr.value {
        AbstractValue::Const(a) => {
            state.cells_mut(space).set(a, value.value);
            forget_origins(state, space, Some(a));
        }
        _ => {
            state.cells_mut(space).havoc();
            forget_origins(state, space, None);
        }
    }
}

fn load(state: &AbstractState, space: Space, addr: Slot) -> Slot {
    match addr.value {
        AbstractValue::Const(a) => {
            Slot { value: state.cells(space).get(a), origin: Some(Origin::Cell(space, a)) }
        }
        AbstractValue::Bottom => Slot::value(AbstractValue::Bottom),
        AbstractValue::Top => Slot::top(),
    }
}

/// Records `cell == k` in `state`. Returns false if that contradicts the state.
fn assume_equal(state: &mut AbstractState, space: Space, addr: Word, k: Word) -> bool {
    let current = state.cells(space).get(addr);
    if !current.contains(k) {
        return false;
    }
    state.cells_mut(space).set(addr, AbstractValue::Const(k));
    for slot in &mut state.stack {
        if slot.origin == Some(Origin::Cell(space, addr)) {
            slot.value = AbstractValue::Const(k);
        }
    }
    true
}

/// Records `cell != k`. The flat domain can only use this to detect infeasibility.
fn assume_not_equal(state: &AbstractState, space: Space, addr: Word, k: Word) -> bool {
    state.cells(space).get(addr) != AbstractValue::Const(k)
}

/// Refines `state` with the outcome of a branch on `cond`. False means the
/// edge is infeasible.
fn assume(state: &mut AbstractState, cond: Slot, taken: bool) -> bool {
    match cond.value {
        AbstractValue::Bottom => return false,
        AbstractValue::Const(c) => return (c != 0) == taken,
        AbstractValue::Top => {}
    }
    // a plain cell used as condition behaves like `cell != 0`
    let origin = match cond.origin {
        Some(Origin::Cell(s, a)) => Origin::CellNe(s, a, 0),
        Some(o) => o,
        None => return true,
    };
    match (origin, taken) {
        (Origin::CellEq(s, a, k), true) | (Origin::CellNe(s, a, k), false) => assume_equal(state, s, a, k),
        (Origin::CellEq(s, a, k), false) | (Origin::CellNe(s, a, k), true) => {
            assume_not_equal(state, s, a, k)
        }
        (Origin::Cell(..), _) => unreachable!(),
    }
}

fn jump_successors(program: &Program, target: AbstractValue, state: &AbstractState, out: &mut Successors) {
    match target {
        AbstractValue::Const(t) => {
            if t <= u32::MAX as Word && program.is_jumpdest(Loc(t as u32)) {
                out.push((Loc(t as u32), state.clone()));
            }
        }
        AbstractValue::Top => {
            // unresolved jump: any jump destination
            for &d in program.jumpdests() {
                out.push((d, state.clone()));
            }
        }
        AbstractValue::Bottom => {}
    }
}

fn fallthrough(program: &Program, loc: Loc, state: AbstractState, out: &mut Successors) {
    if program.contains(loc.next()) {
        out.push((loc.next(), state));
    }
}

/// Outcome of [`step`].
pub(crate) enum Step {
    /// The state was updated in place and execution falls through.
    Next,
    /// No successor: halt, abstract stack error, or infeasible state.
    Stuck,
    /// Control transfer with explicit successors.
    Branch(Successors),
}

/// Applies the instruction at `loc` to `s` in place.
pub(crate) fn step(s: &mut AbstractState, loc: Loc, program: &Program) -> Step {
    if !s.reachable {
        return Step::Stuck;
    }
    let Some(&insn) = program.get(loc) else {
        return Step::Stuck;
    };
    macro_rules! pop {
        () => {
            match pop(s) {
                Some(v) => v,
                None => return Step::Stuck,
            }
        };
    }
    macro_rules! push {
        ($slot:expr) => {
            if !push(s, $slot) {
                return Step::Stuck;
            }
        };
    }
    match insn {
        Instruction::Push(v) => push!(Slot::constant(v)),
        Instruction::Pop => {
            pop!();
        }
        Instruction::Dup(n) => {
            if !ensure_depth(s, n as usize) {
                return Step::Stuck;
            }
            let slot = s.stack[s.stack.len() - n as usize];
            push!(slot);
        }
        Instruction::Swap(n) => {
            if !ensure_depth(s, n as usize + 1) {
                return Step::Stuck;
            }
            let len = s.stack.len();
            s.stack.swap(len - 1, len - 1 - n as usize);
        }
        Instruction::Bin(op) => {
            let a = pop!();
            let b = pop!();
            let value = fold_binary(op, a.value, b.value);
            let origin = if op == BinOp::Eq { eq_origin(a, b) } else { None };
            push!(Slot { value, origin });
        }
        Instruction::Un(op) => {
            let a = pop!();
            let value = fold_unary(op, a.value);
            let origin = if op == UnOp::IsZero { iszero_origin(a) } else { None };
            push!(Slot { value, origin });
        }
        Instruction::Jump => {
            let target = pop!();
            let mut out = Successors::new();
            jump_successors(program, target.value, s, &mut out);
            return Step::Branch(out);
        }
        Instruction::JumpI => {
            let target = pop!();
            let cond = pop!();
            let mut out = Successors::with_capacity(2);
            let mut taken = s.clone();
            if assume(&mut taken, cond, true) {
                jump_successors(program, target.value, &taken, &mut out);
            }
            let mut fall = std::mem::replace(s, AbstractState::bottom());
            if assume(&mut fall, cond, false) {
                fallthrough(program, loc, fall, &mut out);
            }
            return Step::Branch(out);
        }
        Instruction::JumpDest | Instruction::Targetable => {}
        Instruction::Input => push!(Slot::top()),
        Instruction::MLoad | Instruction::SLoad => {
            let space = if insn == Instruction::MLoad { Space::Memory } else { Space::Storage };
            let addr = pop!();
            let slot = load(s, space, addr);
            push!(slot);
        }
        Instruction::MStore | Instruction::SStore => {
            let space = if insn == Instruction::MStore { Space::Memory } else { Space::Storage };
            let addr = pop!();
            let value = pop!();
            store(s, space, addr, value);
        }
        Instruction::ExtCall => {
            pop!();
            push!(Slot::top());
        }
        Instruction::Stop | Instruction::Fail => return Step::Stuck,
    }
    debug_assert!(!s.stack_overflowed());
    Step::Next
}

/// Abstract semantics of the instruction at `loc`.
///
/// Operations on constants are folded with the concrete semantics; anything
/// involving Top produces Top. Abstract stack underflow or overflow, like a
/// halting instruction, yields no successors.
pub fn transfer(state: &AbstractState, loc: Loc, program: &Program) -> Successors {
    if !state.reachable {
        return Successors::new();
    }
    let mut s = state.clone();
    match step(&mut s, loc, program) {
        Step::Next => {
            let mut out = Successors::with_capacity(1);
            fallthrough(program, loc, s, &mut out);
            out
        }
        Step::Stuck => Successors::new(),
        Step::Branch(out) => out,
    }
}
