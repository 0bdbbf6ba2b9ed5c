use std::collections::HashMap;

use rand::Rng;
use serde::Serialize;

use crate::lookahead::Lid;
use crate::minivm::{Loc, PathId, Status};

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CorpusEntry {
    #[serde(with = "hex::serde")]
    pub input: Vec<u8>,
    pub pid: PathId,
    /// Present iff the lookahead analysis is enabled.
    pub lid: Option<Lid>,
    pub split_points: Vec<Loc>,
    /// Number of times this entry was picked for fuzzing.
    pub selected: u64,
    pub status: Status,
}

/// Inputs with pairwise distinct path identifiers.
#[derive(Clone, Debug, Default)]
pub struct Corpus {
    entries: Vec<CorpusEntry>,
    by_pid: HashMap<PathId, usize>,
}

impl Corpus {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, pid: PathId) -> bool {
        self.by_pid.contains_key(&pid)
    }

    /// Adds `entry` unless its path is already present. Returns its index if added.
    pub fn add(&mut self, entry: CorpusEntry) -> Option<usize> {
        if self.by_pid.contains_key(&entry.pid) {
            return None;
        }
        let idx = self.entries.len();
        self.by_pid.insert(entry.pid, idx);
        self.entries.push(entry);
        Some(idx)
    }

    pub fn get(&self, idx: usize) -> &CorpusEntry {
        &self.entries[idx]
    }

    pub fn entries(&self) -> &[CorpusEntry] {
        &self.entries
    }

    /// Uniformly random entry; increments its `selected` count.
    pub fn pick_input<R: Rng + ?Sized>(&mut self, rng: &mut R) -> usize {
        assert!(!self.entries.is_empty(), "pick_input on an empty corpus");
        let idx = rng.random_range(0..self.entries.len());
        self.entries[idx].selected += 1;
        idx
    }
}
