use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::lookahead::Lid;
use crate::minivm::Loc;

use super::corpus::CorpusEntry;

pub const DEFAULT_ENERGY_CAP: u64 = 1024;

/// Power schedule variants.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ScheduleMode {
    /// A: cut-off exponential, no lookahead.
    BaselineA,
    /// B: exponential for rare lookahead ids or split points.
    LookaheadB,
    /// C: as B, but suffix checks never succeed.
    ImpreciseC,
    /// D: exponential scaled down by how often the lookahead id was fuzzed.
    LidExponentialD,
}

impl ScheduleMode {
    pub const ALL: [ScheduleMode; 4] =
        [ScheduleMode::BaselineA, ScheduleMode::LookaheadB, ScheduleMode::ImpreciseC, ScheduleMode::LidExponentialD];

    pub fn letter(self) -> char {
        match self {
            ScheduleMode::BaselineA => 'A',
            ScheduleMode::LookaheadB => 'B',
            ScheduleMode::ImpreciseC => 'C',
            ScheduleMode::LidExponentialD => 'D',
        }
    }

    pub fn uses_lookahead(self) -> bool {
        self != ScheduleMode::BaselineA
    }
}

impl fmt::Display for ScheduleMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.letter())
    }
}

impl FromStr for ScheduleMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "A" => Ok(ScheduleMode::BaselineA),
            "B" => Ok(ScheduleMode::LookaheadB),
            "C" => Ok(ScheduleMode::ImpreciseC),
            "D" => Ok(ScheduleMode::LidExponentialD),
            other => Err(format!("unknown configuration `{other}` (expected A, B, C or D)")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduleConfig {
    /// Maximum energy K. Must be a power of two.
    pub energy_cap: u64,
    pub mode: ScheduleMode,
}

impl ScheduleConfig {
    pub fn new(mode: ScheduleMode) -> Self {
        ScheduleConfig { energy_cap: DEFAULT_ENERGY_CAP, mode }
    }
}

/// Fuzz counts that can report their minimum cheaply.
#[derive(Clone, Debug)]
pub struct CountTable<K> {
    counts: HashMap<K, u64>,
    // multiset of the values in `counts`
    histogram: BTreeMap<u64, usize>,
}

impl<K> Default for CountTable<K> {
    fn default() -> Self {
        CountTable { counts: HashMap::new(), histogram: BTreeMap::new() }
    }
}

impl<K: std::hash::Hash + Eq + Copy> CountTable<K> {
    /// Starts tracking `key` at count 0 unless already tracked.
    pub fn track(&mut self, key: K) {
        if let std::collections::hash_map::Entry::Vacant(e) = self.counts.entry(key) {
            e.insert(0);
            *self.histogram.entry(0).or_default() += 1;
        }
    }

    pub fn add(&mut self, key: K, n: u64) {
        self.track(key);
        let c = self.counts.get_mut(&key).expect("tracked above");
        let old = *c;
        *c += n;
        let new = *c;
        if n == 0 {
            return;
        }
        match self.histogram.get_mut(&old) {
            Some(m) if *m > 1 => *m -= 1,
            _ => {
                self.histogram.remove(&old);
            }
        }
        *self.histogram.entry(new).or_default() += 1;
    }

    pub fn get(&self, key: &K) -> Option<u64> {
        self.counts.get(key).copied()
    }

    pub fn min(&self) -> Option<u64> {
        self.histogram.keys().next().copied()
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&K, &u64)> {
        self.counts.iter()
    }
}

/// `fuzz(λ)` and `fuzz(p)`: mutations attributed to each lookahead id and split point.
#[derive(Clone, Debug, Default)]
pub struct RarityStats {
    pub fuzz_by_lid: CountTable<Lid>,
    pub fuzz_by_sp: CountTable<Loc>,
}

impl RarityStats {
    pub fn track_entry(&mut self, entry: &CorpusEntry) {
        if let Some(lid) = entry.lid {
            self.fuzz_by_lid.track(lid);
        }
        for &p in &entry.split_points {
            self.fuzz_by_sp.track(p);
        }
    }

    /// Attributes `n` mutations of `entry` to its lookahead id and split points.
    pub fn record_mutations(&mut self, entry: &CorpusEntry, n: u64) {
        if let Some(lid) = entry.lid {
            self.fuzz_by_lid.add(lid, n);
        }
        for &p in &entry.split_points {
            self.fuzz_by_sp.add(p, n);
        }
    }
}

/// Smallest power of two `2^i` with `2^(i-1) < m <= 2^i`, where `m` is the
/// minimum count clamped to at least 1.
pub fn rarity_cutoff_of_min(min: u64) -> u64 {
    min.max(1).next_power_of_two()
}

/// Rarity cutoff of a non-empty collection of fuzz counts.
pub fn rarity_cutoff<I: IntoIterator<Item = u64>>(counts: I) -> u64 {
    let min = counts.into_iter().min().expect("rarity_cutoff needs at least one count");
    rarity_cutoff_of_min(min)
}

fn is_rare_in<K: std::hash::Hash + Eq + Copy>(table: &CountTable<K>, key: &K) -> bool {
    match (table.get(key), table.min()) {
        (Some(c), Some(min)) => c < rarity_cutoff_of_min(min),
        _ => false,
    }
}

pub fn is_rare_lid(lid: Lid, stats: &RarityStats) -> bool {
    is_rare_in(&stats.fuzz_by_lid, &lid)
}

pub fn is_rare_split_point(p: Loc, stats: &RarityStats) -> bool {
    is_rare_in(&stats.fuzz_by_sp, &p)
}

/// `min(2^selected, cap)`.
pub fn capped_exponential(selected: u64, cap: u64) -> u64 {
    if selected >= 63 {
        cap
    } else {
        (1u64 << selected).min(cap)
    }
}

/// Configs B and C.
pub fn lookahead_assign_energy(entry: &CorpusEntry, stats: &RarityStats, cfg: &ScheduleConfig) -> u64 {
    let rare = entry.lid.is_some_and(|l| is_rare_lid(l, stats))
        || entry.split_points.iter().any(|&p| is_rare_split_point(p, stats));
    if rare {
        capped_exponential(entry.selected, cfg.energy_cap)
    } else {
        1
    }
}

/// Config A.
pub fn baseline_assign_energy(entry: &CorpusEntry, cfg: &ScheduleConfig) -> u64 {
    capped_exponential(entry.selected, cfg.energy_cap)
}

/// Config D.
pub fn lid_exponential_energy(entry: &CorpusEntry, stats: &RarityStats, cfg: &ScheduleConfig) -> u64 {
    let fuzzed = entry.lid.and_then(|l| stats.fuzz_by_lid.get(&l)).unwrap_or(0);
    (capped_exponential(entry.selected, cfg.energy_cap) / fuzzed.saturating_add(1)).max(1)
}

/// Energy under the configured schedule, read before `selected` is incremented.
pub fn assign_energy(entry: &CorpusEntry, stats: &RarityStats, cfg: &ScheduleConfig) -> u64 {
    match cfg.mode {
        ScheduleMode::BaselineA => baseline_assign_energy(entry, cfg),
        ScheduleMode::LookaheadB | ScheduleMode::ImpreciseC => lookahead_assign_energy(entry, stats, cfg),
        ScheduleMode::LidExponentialD => lid_exponential_energy(entry, stats, cfg),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::minivm::{PathId, Status};

    fn entry(lid: u64, sps: &[u32], selected: u64) -> CorpusEntry {
        CorpusEntry {
            input: Vec::new(),
            pid: PathId(0),
            lid: Some(Lid(lid)),
            split_points: sps.iter().map(|&p| Loc(p)).collect(),
            selected,
            status: Status::Stopped,
        }
    }

    #[test]
    fn cutoff_values() {
        assert_eq!(rarity_cutoff([42]), 64);
        assert_eq!(rarity_cutoff([1]), 1);
        assert_eq!(rarity_cutoff([64]), 64);
        assert_eq!(rarity_cutoff([65, 900]), 128);
        assert_eq!(rarity_cutoff([0, 3]), 1);
    }

    #[test]
    fn rare_lids() {
        let mut s = RarityStats::default();
        s.fuzz_by_lid.add(Lid(1), 42);
        s.fuzz_by_lid.add(Lid(2), 10);
        // min 10 gives cutoff 16
        assert!(is_rare_lid(Lid(2), &s));
        assert!(!is_rare_lid(Lid(1), &s));

        let mut s = RarityStats::default();
        s.fuzz_by_lid.add(Lid(1), 42);
        assert!(is_rare_lid(Lid(1), &s));
        s.fuzz_by_lid.add(Lid(1), 22);
        assert!(!is_rare_lid(Lid(1), &s));

        let mut s = RarityStats::default();
        s.fuzz_by_lid.add(Lid(1), 1);
        assert!(!is_rare_lid(Lid(1), &s));
        s.fuzz_by_lid.track(Lid(2));
        assert!(is_rare_lid(Lid(2), &s));
    }

    #[test]
    fn equal_split_point_counts() {
        for c in 2..=8u64 {
            let mut s = RarityStats::default();
            for p in 0..3 {
                s.fuzz_by_sp.add(Loc(p), c);
            }
            let rare = is_rare_split_point(Loc(0), &s);
            assert_eq!(rare, !c.is_power_of_two(), "c = {c}");
        }
    }

    #[test]
    fn energies() {
        let cfg = ScheduleConfig::new(ScheduleMode::LookaheadB);
        let mut s = RarityStats::default();
        s.fuzz_by_lid.track(Lid(7));
        assert_eq!(lookahead_assign_energy(&entry(7, &[], 5), &s, &cfg), 32);

        let mut s = RarityStats::default();
        s.fuzz_by_lid.add(Lid(7), 1);
        s.fuzz_by_sp.track(Loc(3));
        assert_eq!(lookahead_assign_energy(&entry(7, &[3], 20), &s, &cfg), 1024);
        s.fuzz_by_sp.add(Loc(3), 1);
        assert_eq!(lookahead_assign_energy(&entry(7, &[3], 20), &s, &cfg), 1);

        let a = ScheduleConfig::new(ScheduleMode::BaselineA);
        assert_eq!(baseline_assign_energy(&entry(0, &[], 0), &a), 1);
        assert_eq!(baseline_assign_energy(&entry(0, &[], 10), &a), 1024);
        assert_eq!(baseline_assign_energy(&entry(0, &[], 3), &a), 8);
        assert_eq!(baseline_assign_energy(&entry(0, &[], 200), &a), 1024);

        let d = ScheduleConfig::new(ScheduleMode::LidExponentialD);
        let mut s = RarityStats::default();
        s.fuzz_by_lid.track(Lid(1));
        assert_eq!(lid_exponential_energy(&entry(1, &[], 4), &s, &d), 16);
        s.fuzz_by_lid.add(Lid(1), 15);
        assert_eq!(lid_exponential_energy(&entry(1, &[], 10), &s, &d), 64);
        s.fuzz_by_lid.add(Lid(1), u64::MAX / 2);
        assert_eq!(lid_exponential_energy(&entry(1, &[], 10), &s, &d), 1);
    }

    #[test]
    fn count_table_min_follows_updates() {
        let mut t = CountTable::default();
        t.add(1u32, 5);
        t.add(2, 3);
        assert_eq!(t.min(), Some(3));
        t.add(2, 4);
        assert_eq!(t.min(), Some(5));
        t.track(3);
        assert_eq!(t.min(), Some(0));
        t.track(3);
        t.add(3, 0);
        assert_eq!(t.len(), 3);
        assert_eq!(t.min(), Some(0));
    }

    #[test]
    fn mode_parsing() {
        for m in ScheduleMode::ALL {
            assert_eq!(m.letter().to_string().parse::<ScheduleMode>(), Ok(m));
        }
        assert!("E".parse::<ScheduleMode>().is_err());
    }
}
