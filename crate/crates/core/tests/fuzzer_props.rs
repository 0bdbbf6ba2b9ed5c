mod common;

use std::collections::{BTreeSet, HashMap};

use lookahead_fuzz::fuzzer::{
    assign_energy, fuzz_input, fuzz_loop, is_rare_lid, rarity_cutoff, CorpusEntry, FuzzConfig, Fuzzer,
    RarityStats, ScheduleMode,
};
use lookahead_fuzz::lookahead::{lid_of_full_path, Lid, TargetSet};
use lookahead_fuzz::minivm::{execute, Loc, PathId, Program, Status};
use proptest::prelude::*;
use serde_json::Value;

use common::{bar, bar_variant, label};

fn mode() -> impl Strategy<Value = ScheduleMode> {
    prop::sample::select(ScheduleMode::ALL.to_vec())
}

fn campaign(p: &Program, targets: &TargetSet, mode: ScheduleMode, budget: u64, seed: u64) -> (Vec<u8>, u64) {
    let mut cfg = FuzzConfig::new(mode);
    cfg.stop_on_target = false;
    let mut log = Vec::new();
    let r = fuzz_loop(p, &[vec![0; 64]], targets, &cfg, budget, seed, Some(&mut log)).unwrap();
    (log, r.executions)
}

fn hex_u64(v: &Value) -> u64 {
    u64::from_str_radix(v.as_str().expect("hex string"), 16).expect("valid hex")
}

fn admitted(e: &Value) -> Option<CorpusEntry> {
    let pid = e.get("new_pid")?;
    Some(CorpusEntry {
        input: Vec::new(),
        pid: PathId(hex_u64(pid)),
        lid: e.get("lid").map(|l| Lid(hex_u64(l))),
        split_points: e
            .get("split_points")
            .map(|s| s.as_array().unwrap().iter().map(|p| Loc(p.as_u64().unwrap() as u32)).collect())
            .unwrap_or_default(),
        selected: 0,
        status: Status::Stopped,
    })
}

/// Replays a run log through the schedule, checking every logged energy.
/// Returns the number of energy loops checked.
fn replay(log: &[u8], mode: ScheduleMode) -> Result<usize, String> {
    let events: Vec<Value> =
        log.split(|b| *b == b'\n').filter(|l| !l.is_empty()).map(|l| serde_json::from_slice(l).unwrap()).collect();
    let cfg = FuzzConfig::new(mode).schedule;
    let mut stats = RarityStats::default();
    let mut corpus: HashMap<u64, CorpusEntry> = HashMap::new();
    let admit = |e: &Value, stats: &mut RarityStats, corpus: &mut HashMap<u64, CorpusEntry>| {
        if let Some(entry) = admitted(e) {
            stats.track_entry(&entry);
            assert!(corpus.insert(entry.pid.0, entry).is_none(), "duplicate pid admitted");
        }
    };
    let mut i = 0;
    let mut loops = 0;
    while i < events.len() {
        let e = &events[i];
        if e["parent_pid"].is_null() {
            admit(e, &mut stats, &mut corpus);
            i += 1;
            continue;
        }
        let parent = hex_u64(&e["parent_pid"]);
        let energy = e["energy"].as_u64().unwrap();
        let entry = corpus.get(&parent).ok_or("unknown parent")?.clone();
        let expected = assign_energy(&entry, &stats, &cfg);
        if expected != energy {
            return Err(format!("event {i}: logged energy {energy}, schedule gives {expected}"));
        }
        corpus.get_mut(&parent).unwrap().selected += 1;
        let end = (i + energy as usize).min(events.len());
        for ev in &events[i..end] {
            if hex_u64(&ev["parent_pid"]) != parent || ev["energy"].as_u64() != Some(energy) {
                return Err(format!("energy loop at {i} is shorter than {energy}"));
            }
            admit(ev, &mut stats, &mut corpus);
        }
        stats.record_mutations(&entry, (end - i) as u64);
        loops += 1;
        i = end;
    }
    Ok(loops)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn schedule_conformance(mode in mode(), seed in any::<u64>(), variant in any::<bool>()) {
        let p = if variant { bar_variant() } else { bar() };
        let targets = TargetSet::new(&p, [label(&p, "t22"), label(&p, "t19")]).unwrap();
        let (log, executions) = campaign(&p, &targets, mode, 3000, seed);
        prop_assert_eq!(log.iter().filter(|b| **b == b'\n').count() as u64, executions);
        let loops = replay(&log, mode).map_err(TestCaseError::fail)?;
        prop_assert!(loops > 0);
    }

    #[test]
    fn runs_are_deterministic(mode in mode(), seed in any::<u64>()) {
        let p = bar();
        let targets = TargetSet::new(&p, [label(&p, "t22")]).unwrap();
        prop_assert_eq!(campaign(&p, &targets, mode, 2000, seed), campaign(&p, &targets, mode, 2000, seed));
    }

    #[test]
    fn corpus_invariants(mode in mode(), seed in any::<u64>()) {
        let p = bar();
        let targets = TargetSet::new(&p, [label(&p, "t22")]).unwrap();
        let mut cfg = FuzzConfig::new(mode);
        cfg.stop_on_target = false;
        let mut fuzzer = Fuzzer::new(&p, &targets, cfg, seed, None);
        fuzzer.run(&[vec![0; 64]], 2000).unwrap();
        let entries = fuzzer.corpus().entries();
        let pids: BTreeSet<PathId> = entries.iter().map(|e| e.pid).collect();
        prop_assert_eq!(pids.len(), entries.len());
        for e in entries {
            prop_assert_eq!(e.lid.is_some(), mode != ScheduleMode::BaselineA);
            let trace = execute(&p, &e.input, cfg.step_budget);
            if mode == ScheduleMode::ImpreciseC {
                prop_assert_eq!(e.lid, Some(lid_of_full_path(&trace)));
            }
            if let Some(lid) = e.lid {
                prop_assert!(fuzzer.stats().fuzz_by_lid.get(&lid).is_some());
            }
            for sp in &e.split_points {
                prop_assert!(fuzzer.stats().fuzz_by_sp.get(sp).is_some());
            }
        }
    }

    #[test]
    fn lookahead_calls_equal_admissions(mode in mode(), seed in any::<u64>()) {
        let p = bar_variant();
        let targets = TargetSet::new(&p, [label(&p, "t22")]).unwrap();
        let r = fuzz_loop(&p, &[vec![0; 64]], &targets, &FuzzConfig::new(mode), 2000, seed, None).unwrap();
        let expected = if mode == ScheduleMode::BaselineA { 0 } else { r.corpus_size as u64 };
        prop_assert_eq!(r.lookahead_calls, expected);
    }

    #[test]
    fn mutants_respect_the_length_bound(
        input in proptest::collection::vec(any::<u8>(), 1..80),
        max_len in 1usize..100,
        seed in any::<u64>(),
    ) {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let input: Vec<u8> = input.into_iter().take(max_len).collect();
        for _ in 0..32 {
            let m = fuzz_input(&input, max_len, &mut rng);
            prop_assert!(!m.is_empty() && m.len() <= max_len);
        }
    }

    /// A non-rare id stays non-rare while it is fuzzed and the cutoff holds.
    #[test]
    fn rarity_is_monotone_within_a_bracket(
        counts in proptest::collection::vec(0u64..300, 2..6),
        key in any::<prop::sample::Index>(),
        steps in proptest::collection::vec(1u64..40, 1..20),
    ) {
        let mut stats = RarityStats::default();
        for (i, &c) in counts.iter().enumerate() {
            stats.fuzz_by_lid.track(Lid(i as u64));
            stats.fuzz_by_lid.add(Lid(i as u64), c);
        }
        let lid = Lid(key.index(counts.len()) as u64);
        let cutoff = rarity_cutoff(stats.fuzz_by_lid.iter().map(|(_, c)| *c));
        let mut non_rare = !is_rare_lid(lid, &stats);
        for n in steps {
            stats.fuzz_by_lid.add(lid, n);
            if rarity_cutoff(stats.fuzz_by_lid.iter().map(|(_, c)| *c)) != cutoff {
                break;
            }
            if non_rare {
                prop_assert!(!is_rare_lid(lid, &stats));
            }
            non_rare = !is_rare_lid(lid, &stats);
        }
    }
}
