use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;

use crate::minivm::{Word, MAX_STACK};

/// Flat constant-propagation lattice: `Bottom ⊑ Const(c) ⊑ Top`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum AbstractValue {
    Bottom,
    Const(Word),
    Top,
}

impl AbstractValue {
    pub fn join(self, other: AbstractValue) -> AbstractValue {
        match (self, other) {
            (AbstractValue::Bottom, v) | (v, AbstractValue::Bottom) => v,
            (AbstractValue::Const(a), AbstractValue::Const(b)) if a == b => self,
            _ => AbstractValue::Top,
        }
    }

    pub fn leq(self, other: AbstractValue) -> bool {
        self.join(other) == other
    }

    pub fn as_const(self) -> Option<Word> {
        match self {
            AbstractValue::Const(c) => Some(c),
            _ => None,
        }
    }

    /// Whether the concrete word `w` is described by this value.
    pub fn contains(self, w: Word) -> bool {
        match self {
            AbstractValue::Bottom => false,
            AbstractValue::Const(c) => c == w,
            AbstractValue::Top => true,
        }
    }
}

impl fmt::Display for AbstractValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AbstractValue::Bottom => f.write_str("⊥"),
            AbstractValue::Const(c) => write!(f, "{c}"),
            AbstractValue::Top => f.write_str("⊤"),
        }
    }
}

/// Join of two abstract values.
pub fn join_value(a: AbstractValue, b: AbstractValue) -> AbstractValue {
    a.join(b)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Space {
    Memory,
    Storage,
}

/// What a stack value is known to equal, in terms of a memory or storage cell.
///
/// Origins let a conditional jump refine the cell its condition was computed
/// from. An origin is dropped as soon as the cell may have been overwritten.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum Origin {
    /// The value is the current content of the cell.
    Cell(Space, Word),
    /// The value is `cell == k` (1 or 0).
    CellEq(Space, Word, Word),
    /// The value is `cell != k` (1 or 0).
    CellNe(Space, Word, Word),
}

impl Origin {
    pub fn cell(&self) -> (Space, Word) {
        match *self {
            Origin::Cell(s, a) | Origin::CellEq(s, a, _) | Origin::CellNe(s, a, _) => (s, a),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct Slot {
    pub value: AbstractValue,
    pub origin: Option<Origin>,
}

impl Slot {
    pub fn top() -> Slot {
        Slot { value: AbstractValue::Top, origin: None }
    }

    pub fn value(value: AbstractValue) -> Slot {
        Slot { value, origin: None }
    }

    pub fn constant(c: Word) -> Slot {
        Slot::value(AbstractValue::Const(c))
    }

    fn join(self, other: Slot) -> Slot {
        Slot {
            value: self.value.join(other.value),
            origin: if self.origin == other.origin { self.origin } else { None },
        }
    }
}

/// Abstract memory or storage. Keys are constant addresses; any address not
/// listed holds `default`, which is `Const(0)` until the map is havocked.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct CellMap {
    entries: BTreeMap<Word, AbstractValue>,
    default: AbstractValue,
}

impl Default for CellMap {
    fn default() -> Self {
        CellMap { entries: BTreeMap::new(), default: AbstractValue::Const(0) }
    }
}

impl CellMap {
    pub fn get(&self, addr: Word) -> AbstractValue {
        self.entries.get(&addr).copied().unwrap_or(self.default)
    }

    pub fn set(&mut self, addr: Word, value: AbstractValue) {
        if value == self.default {
            self.entries.remove(&addr);
        } else {
            self.entries.insert(addr, value);
        }
    }

    /// Forget everything: every cell becomes Top.
    pub fn havoc(&mut self) {
        self.entries.clear();
        self.default = AbstractValue::Top;
    }

    pub fn is_havocked(&self) -> bool {
        self.default == AbstractValue::Top && self.entries.is_empty()
    }

    pub fn default_value(&self) -> AbstractValue {
        self.default
    }

    pub fn entries(&self) -> impl Iterator<Item = (Word, AbstractValue)> + '_ {
        self.entries.iter().map(|(k, v)| (*k, *v))
    }

    fn join(&self, other: &CellMap) -> CellMap {
        let default = self.default.join(other.default);
        let mut out = CellMap { entries: BTreeMap::new(), default };
        for k in self.entries.keys().chain(other.entries.keys()) {
            out.set(*k, self.get(*k).join(other.get(*k)));
        }
        out
    }
}

/// Abstract machine state at one program location.
///
/// `reachable == false` is the bottom state. A state whose stack came from
/// joining paths of different depths carries `depth_conflict`: `stack` then
/// describes only the topmost slots and the true stack may be deeper.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct AbstractState {
    pub reachable: bool,
    pub stack: Vec<Slot>,
    pub depth_conflict: bool,
    pub memory: CellMap,
    pub storage: CellMap,
}

impl AbstractState {
    /// State at program entry: empty stack, zeroed memory and storage.
    pub fn initial() -> AbstractState {
        AbstractState {
            reachable: true,
            stack: Vec::new(),
            depth_conflict: false,
            memory: CellMap::default(),
            storage: CellMap::default(),
        }
    }

    pub fn bottom() -> AbstractState {
        AbstractState { reachable: false, ..AbstractState::initial() }
    }

    pub fn is_bottom(&self) -> bool {
        !self.reachable
    }

    /// Stack values from bottom to top.
    pub fn stack_values(&self) -> Vec<AbstractValue> {
        self.stack.iter().map(|s| s.value).collect()
    }

    pub fn cells(&self, space: Space) -> &CellMap {
        match space {
            Space::Memory => &self.memory,
            Space::Storage => &self.storage,
        }
    }

    pub fn cells_mut(&mut self, space: Space) -> &mut CellMap {
        match space {
            Space::Memory => &mut self.memory,
            Space::Storage => &mut self.storage,
        }
    }

    pub fn join(&self, other: &AbstractState) -> AbstractState {
        if !self.reachable {
            return other.clone();
        }
        if !other.reachable {
            return self.clone();
        }
        // stacks are aligned at the top; a deeper remainder becomes unknown
        let k = self.stack.len().min(other.stack.len());
        let stack = self.stack[self.stack.len() - k..]
            .iter()
            .zip(&other.stack[other.stack.len() - k..])
            .map(|(a, b)| a.join(*b))
            .collect();
        let depth_conflict = self.depth_conflict || other.depth_conflict || self.stack.len() != other.stack.len();
        AbstractState {
            reachable: true,
            stack,
            depth_conflict,
            memory: self.memory.join(&other.memory),
            storage: self.storage.join(&other.storage),
        }
    }

    /// Joins `other` into `self`, returning whether `self` changed.
    pub fn join_in_place(&mut self, other: &AbstractState) -> bool {
        let joined = self.join(other);
        if joined == *self {
            false
        } else {
            *self = joined;
            true
        }
    }

    pub fn leq(&self, other: &AbstractState) -> bool {
        self.join(other) == *other
    }

    pub(crate) fn stack_overflowed(&self) -> bool {
        self.stack.len() > MAX_STACK
    }
}

/// Pointwise join of two abstract states.
pub fn join_state(a: &AbstractState, b: &AbstractState) -> AbstractState {
    a.join(b)
}
