//! Greybox fuzzing loop with lookahead-driven power schedules.

pub mod corpus;
pub mod mutate;
pub mod schedule;

use std::collections::BTreeMap;
use std::io::{self, Write};
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

pub use corpus::{Corpus, CorpusEntry};
pub use mutate::{fuzz_input, DEFAULT_MAX_INPUT_LEN, INTERESTING_WORDS};
pub use schedule::{
    assign_energy, baseline_assign_energy, capped_exponential, is_rare_lid, is_rare_split_point,
    lid_exponential_energy, lookahead_assign_energy, rarity_cutoff, rarity_cutoff_of_min, CountTable, RarityStats,
    ScheduleConfig, ScheduleMode, DEFAULT_ENERGY_CAP,
};

use crate::lookahead::{analyze_trace, LookaheadConfig, SuffixCheck, TargetSet, DEFAULT_PREFIX_CAP};
use crate::minivm::{execute_into, path_id, ExecTrace, Loc, PathId, Program, DEFAULT_STEP_BUDGET};

/// Length of the all-zero seed used by the experiments.
pub const DEFAULT_SEED_LEN: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct FuzzConfig {
    pub schedule: ScheduleConfig,
    pub max_input_len: usize,
    pub step_budget: u64,
    pub prefix_cap: usize,
    /// End the run once every target has been reached.
    pub stop_on_target: bool,
}

impl FuzzConfig {
    pub fn new(mode: ScheduleMode) -> Self {
        FuzzConfig {
            schedule: ScheduleConfig::new(mode),
            max_input_len: DEFAULT_MAX_INPUT_LEN,
            step_budget: DEFAULT_STEP_BUDGET,
            prefix_cap: DEFAULT_PREFIX_CAP,
            stop_on_target: true,
        }
    }

    fn lookahead(&self) -> Option<LookaheadConfig> {
        let suffix_check = match self.schedule.mode {
            ScheduleMode::BaselineA => return None,
            ScheduleMode::ImpreciseC => SuffixCheck::AlwaysReachable,
            ScheduleMode::LookaheadB | ScheduleMode::LidExponentialD => SuffixCheck::AbstractInterpretation,
        };
        Some(LookaheadConfig { prefix_cap: self.prefix_cap, suffix_check })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FuzzRunResult {
    /// 0-based index of the first execution reaching any target.
    pub executions_to_target: Option<u64>,
    /// 0-based index of the first execution reaching each target that was reached.
    pub first_hits: BTreeMap<Loc, u64>,
    pub executions: u64,
    pub wall_time: f64,
    pub corpus_size: usize,
    pub lookahead_time: f64,
    pub lookahead_calls: u64,
}

/// State of one fuzzing run.
pub struct Fuzzer<'a> {
    program: &'a Program,
    targets: &'a TargetSet,
    config: FuzzConfig,
    lookahead: Option<LookaheadConfig>,
    rng: ChaCha8Rng,
    corpus: Corpus,
    stats: RarityStats,
    trace: ExecTrace,
    executions: u64,
    executions_to_target: Option<u64>,
    first_hits: BTreeMap<Loc, u64>,
    lookahead_time: Duration,
    lookahead_calls: u64,
    log: Option<&'a mut dyn Write>,
}

struct Event<'e> {
    parent: Option<(PathId, u64)>,
    admitted: Option<&'e CorpusEntry>,
    target_hit: bool,
}

impl<'a> Fuzzer<'a> {
    pub fn new(
        program: &'a Program,
        targets: &'a TargetSet,
        config: FuzzConfig,
        rng_seed: u64,
        log: Option<&'a mut dyn Write>,
    ) -> Self {
        Fuzzer {
            program,
            targets,
            config,
            lookahead: config.lookahead(),
            rng: ChaCha8Rng::seed_from_u64(rng_seed),
            corpus: Corpus::new(),
            stats: RarityStats::default(),
            trace: ExecTrace::default(),
            executions: 0,
            executions_to_target: None,
            first_hits: BTreeMap::new(),
            lookahead_time: Duration::ZERO,
            lookahead_calls: 0,
            log,
        }
    }

    pub fn corpus(&self) -> &Corpus {
        &self.corpus
    }

    pub fn stats(&self) -> &RarityStats {
        &self.stats
    }

    pub fn executions(&self) -> u64 {
        self.executions
    }

    pub fn executions_to_target(&self) -> Option<u64> {
        self.executions_to_target
    }

    pub fn first_hits(&self) -> &BTreeMap<Loc, u64> {
        &self.first_hits
    }

    fn finished(&self, budget: u64) -> bool {
        self.executions >= budget
            || (self.config.stop_on_target
                && self.executions_to_target.is_some()
                && self.first_hits.len() == self.targets.locations().len())
    }

    /// Executes `input`, admits it if its path is new, and logs the execution.
    fn run_one(&mut self, input: Vec<u8>, parent: Option<(PathId, u64)>) -> io::Result<()> {
        execute_into(self.program, &input, self.config.step_budget, &mut self.trace);
        let index = self.executions;
        self.executions += 1;
        let target_hit = self.targets.hit_by(&self.trace);
        if target_hit {
            self.executions_to_target.get_or_insert(index);
            for &loc in &self.trace.locations {
                if self.targets.contains(loc) {
                    self.first_hits.entry(loc).or_insert(index);
                }
            }
        }
        let pid = path_id(&self.trace);
        let mut admitted = None;
        if !self.corpus.contains(pid) {
            let (lid, split_points) = match &self.lookahead {
                Some(la) => {
                    let start = Instant::now();
                    let r = analyze_trace(self.program, &self.trace, self.targets, la);
                    self.lookahead_time += start.elapsed();
                    self.lookahead_calls += 1;
                    (Some(r.lid), r.split_points)
                }
                None => (None, Vec::new()),
            };
            let entry = CorpusEntry { input, pid, lid, split_points, selected: 0, status: self.trace.status };
            self.stats.track_entry(&entry);
            admitted = self.corpus.add(entry);
        }
        if self.log.is_some() {
            let event = Event { parent, admitted: admitted.map(|i| self.corpus.get(i)), target_hit };
            write_event(self.log.as_mut().expect("checked"), index, &event)?;
        }
        Ok(())
    }

    /// Runs the seeds, then fuzzes until the execution budget is spent.
    pub fn run(&mut self, seeds: &[Vec<u8>], budget: u64) -> io::Result<()> {
        self.run_seeds(seeds, budget)?;
        self.fuzz(budget)
    }

    /// Executes each seed once, admitting those with new paths.
    pub fn run_seeds(&mut self, seeds: &[Vec<u8>], budget: u64) -> io::Result<()> {
        for seed in seeds {
            if self.finished(budget) {
                break;
            }
            let mut s = seed.clone();
            s.truncate(self.config.max_input_len);
            self.run_one(s, None)?;
        }
        Ok(())
    }

    /// Fuzzes corpus entries until `budget` executions have been made in total.
    pub fn fuzz(&mut self, budget: u64) -> io::Result<()> {
        while !self.corpus.is_empty() && !self.finished(budget) {
            let idx = self.corpus.pick_input(&mut self.rng);
            let energy = {
                let entry = self.corpus.get(idx);
                let before = CorpusEntry { selected: entry.selected - 1, ..entry.clone() };
                assign_energy(&before, &self.stats, &self.config.schedule)
            };
            let parent_input = self.corpus.get(idx).input.clone();
            let parent_pid = self.corpus.get(idx).pid;
            let mut done = 0;
            while done < energy && !self.finished(budget) {
                let mutant = fuzz_input(&parent_input, self.config.max_input_len, &mut self.rng);
                self.run_one(mutant, Some((parent_pid, energy)))?;
                done += 1;
            }
            let parent = self.corpus.get(idx).clone();
            self.stats.record_mutations(&parent, done);
        }
        if let Some(log) = self.log.as_mut() {
            log.flush()?;
        }
        Ok(())
    }
}

fn write_event(out: &mut dyn Write, index: u64, e: &Event<'_>) -> io::Result<()> {
    write!(out, "{{\"exec_index\":{index}")?;
    match e.parent {
        Some((pid, energy)) => write!(out, ",\"parent_pid\":\"{pid}\",\"energy\":{energy}")?,
        None => write!(out, ",\"parent_pid\":null,\"energy\":null")?,
    }
    if let Some(entry) = e.admitted {
        write!(out, ",\"new_pid\":\"{}\"", entry.pid)?;
        if let Some(lid) = entry.lid {
            write!(out, ",\"lid\":\"{lid}\",\"split_points\":[")?;
            for (i, p) in entry.split_points.iter().enumerate() {
                if i > 0 {
                    out.write_all(b",")?;
                }
                write!(out, "{}", p.0)?;
            }
            out.write_all(b"]")?;
        }
    }
    if e.target_hit {
        out.write_all(b",\"target_hit\":true")?;
    }
    out.write_all(b"}\n")
}

/// Runs one fuzzing campaign (seeds first, then the fuzzing loop).
pub fn fuzz_loop<'a>(
    program: &'a Program,
    seeds: &[Vec<u8>],
    targets: &'a TargetSet,
    config: &FuzzConfig,
    budget: u64,
    rng_seed: u64,
    log: Option<&'a mut dyn Write>,
) -> io::Result<FuzzRunResult> {
    let start = Instant::now();
    let mut fuzzer = Fuzzer::new(program, targets, *config, rng_seed, log);
    fuzzer.run(seeds, budget)?;
    Ok(FuzzRunResult {
        executions_to_target: fuzzer.executions_to_target,
        first_hits: fuzzer.first_hits,
        executions: fuzzer.executions,
        wall_time: start.elapsed().as_secs_f64(),
        corpus_size: fuzzer.corpus.len(),
        lookahead_time: fuzzer.lookahead_time.as_secs_f64(),
        lookahead_calls: fuzzer.lookahead_calls,
    })
}
