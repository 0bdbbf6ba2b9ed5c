use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io;

use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::fuzzer::{fuzz_loop, FuzzConfig, FuzzRunResult, ScheduleMode};
use crate::lookahead::TargetSet;
use crate::minivm::{Loc, Program};

use super::{ComparisonRow, SIGNIFICANCE};

/// A program with named targets, ready to fuzz.
#[derive(Clone, Debug)]
pub struct Benchmark {
    pub name: String,
    pub program: Program,
    /// Display name and location of each target.
    pub targets: Vec<(String, Loc)>,
    pub seed: Vec<u8>,
    pub budget: u64,
}

#[derive(Clone, Debug)]
pub struct ExperimentOptions {
    pub configs: Vec<ScheduleMode>,
    /// Pairs `(X, Y)` to compare; empty means the first config against each other one.
    pub comparisons: Vec<(ScheduleMode, ScheduleMode)>,
    pub runs: usize,
    pub base_rng_seed: u64,
    /// Worker threads; 0 uses all available cores.
    pub threads: usize,
    /// Settings shared by every run. The schedule mode is overridden per config.
    pub fuzz: FuzzConfig,
    /// Hash each run's event log into [`RunRecord::log_digest`].
    pub log_digests: bool,
}

impl ExperimentOptions {
    pub fn new(configs: Vec<ScheduleMode>) -> Self {
        ExperimentOptions {
            configs,
            comparisons: Vec::new(),
            runs: 24,
            base_rng_seed: 0,
            threads: 0,
            fuzz: FuzzConfig::new(ScheduleMode::LookaheadB),
            log_digests: false,
        }
    }

    fn comparison_pairs(&self) -> Vec<(ScheduleMode, ScheduleMode)> {
        if !self.comparisons.is_empty() {
            return self.comparisons.clone();
        }
        match self.configs.split_first() {
            Some((&first, rest)) => rest.iter().map(|&c| (first, c)).collect(),
            None => Vec::new(),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct RunRecord {
    pub benchmark: String,
    pub config: ScheduleMode,
    pub run_index: usize,
    pub rng_seed: u64,
    pub result: FuzzRunResult,
    pub log_digest: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct TrialKey {
    pub benchmark: String,
    pub target: String,
    pub config: ScheduleMode,
}

/// Executions-to-target per (benchmark, target, config), ordered by run index.
/// Runs that never reached the target are recorded at the budget.
#[derive(Clone, Debug, Default, Serialize)]
pub struct TrialMatrix {
    pub samples: BTreeMap<TrialKey, Vec<f64>>,
}

impl TrialMatrix {
    pub fn get(&self, benchmark: &str, target: &str, config: ScheduleMode) -> Option<&[f64]> {
        let key = TrialKey { benchmark: benchmark.to_string(), target: target.to_string(), config };
        self.samples.get(&key).map(Vec::as_slice)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ExperimentResult {
    pub runs: Vec<RunRecord>,
    pub matrix: TrialMatrix,
    pub rows: Vec<ComparisonRow>,
}

struct DigestWriter(Sha256);

impl io::Write for DigestWriter {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        self.0.update(buf);
        Ok(buf.len())
    }

    fn flush(&mut self) -> io::Result<()> {
        Ok(())
    }
}

fn run_job(
    bench: &Benchmark,
    config: ScheduleMode,
    run_index: usize,
    options: &ExperimentOptions,
) -> io::Result<RunRecord> {
    let targets = TargetSet::new(&bench.program, bench.targets.iter().map(|(_, l)| *l))
        .map_err(|e| io::Error::new(io::ErrorKind::InvalidInput, e))?;
    let mut cfg = options.fuzz;
    cfg.schedule.mode = config;
    let rng_seed = options.base_rng_seed ^ run_index as u64;
    let seeds = [bench.seed.clone()];
    let (result, log_digest) = if options.log_digests {
        let mut w = DigestWriter(Sha256::new());
        let r = fuzz_loop(&bench.program, &seeds, &targets, &cfg, bench.budget, rng_seed, Some(&mut w))?;
        (r, Some(hex::encode(w.0.finalize())))
    } else {
        (fuzz_loop(&bench.program, &seeds, &targets, &cfg, bench.budget, rng_seed, None)?, None)
    };
    Ok(RunRecord { benchmark: bench.name.clone(), config, run_index, rng_seed, result, log_digest })
}

/// Comparison row for one benchmark target, if both configs were run.
pub fn compare(
    matrix: &TrialMatrix,
    benchmark: &str,
    target: &str,
    x: ScheduleMode,
    y: ScheduleMode,
) -> Option<ComparisonRow> {
    let xs = matrix.get(benchmark, target, x)?;
    let ys = matrix.get(benchmark, target, y)?;
    Some(ComparisonRow::new(benchmark, target, (&x.to_string(), xs), (&y.to_string(), ys)))
}

/// Runs every (benchmark, config, run) combination and compares configs.
///
/// Run `i` uses RNG seed `base_rng_seed ^ i` under every config. Runs are
/// independent and may execute in parallel; results are ordered by job, so the
/// outcome does not depend on scheduling.
pub fn run_experiment(benchmarks: &[Benchmark], options: &ExperimentOptions) -> io::Result<ExperimentResult> {
    let mut jobs = Vec::new();
    for bench in benchmarks {
        for &config in &options.configs {
            for run in 0..options.runs {
                jobs.push((bench, config, run));
            }
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.threads)
        .build()
        .map_err(|e| io::Error::other(e.to_string()))?;
    let runs: Vec<RunRecord> = pool.install(|| {
        jobs.par_iter().map(|&(b, c, r)| run_job(b, c, r, options)).collect::<io::Result<Vec<_>>>()
    })?;

    let mut matrix = TrialMatrix::default();
    for (record, &(bench, _, _)) in runs.iter().zip(&jobs) {
        for (name, loc) in &bench.targets {
            let value = record.result.first_hits.get(loc).map_or(bench.budget as f64, |&i| i as f64);
            let key = TrialKey { benchmark: bench.name.clone(), target: name.clone(), config: record.config };
            matrix.samples.entry(key).or_default().push(value);
        }
    }

    let mut rows = Vec::new();
    for bench in benchmarks {
        for (name, _) in &bench.targets {
            for (x, y) in options.comparison_pairs() {
                rows.extend(compare(&matrix, &bench.name, name, x, y));
            }
        }
    }
    Ok(ExperimentResult { runs, matrix, rows })
}

impl ExperimentResult {
    /// Comparison table as CSV.
    pub fn csv(&self) -> String {
        let mut out = String::from("benchmark,target,config_x,config_y,t_x,t_y,speedup,p_value,a12_x,a12_y\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{:.1},{:.1},{:.4},{:.6},{:.4},{:.4}",
                r.benchmark, r.target, r.config_x, r.config_y, r.t_x, r.t_y, r.speedup, r.p_value, r.a12_x, r.a12_y
            );
        }
        out
    }

    /// Comparison table as Markdown; significant p-values are bold.
    pub fn markdown(&self) -> String {
        let mut out = String::new();
        let mut pairs: Vec<(&str, &str)> = Vec::new();
        for r in &self.rows {
            if !pairs.contains(&(r.config_x.as_str(), r.config_y.as_str())) {
                pairs.push((&r.config_x, &r.config_y));
            }
        }
        for (x, y) in pairs {
            let _ = writeln!(out, "### {x} vs. {y}\n");
            let _ = writeln!(out, "| BID | Target | T_{x} | T_{y} | T_{x}/T_{y} | p | A12_{x} | A12_{y} |");
            out.push_str("|---|---|---:|---:|---:|---:|---:|---:|\n");
            for r in self.rows.iter().filter(|r| r.config_x == x && r.config_y == y) {
                let p = if r.significant() { format!("**{:.4}**", r.p_value) } else { format!("{:.4}", r.p_value) };
                let _ = writeln!(
                    out,
                    "| {} | {} | {:.1} | {:.1} | {:.2} | {} | {:.2} | {:.2} |",
                    r.benchmark, r.target, r.t_x, r.t_y, r.speedup, p, r.a12_x, r.a12_y
                );
            }
            out.push('\n');
        }
        let _ = writeln!(
            out,
            "Times are median executions to reach the target. Runs that never reached it count as the \
             execution budget and enter the U test as ordinary, tied samples. Bold: p < {SIGNIFICANCE}."
        );
        out
    }

    /// Every sample, one line per (benchmark, target, config, run).
    pub fn samples_csv(&self) -> String {
        let mut out = String::from("benchmark,target,config,run,executions_to_target\n");
        for (key, values) in &self.matrix.samples {
            for (run, v) in values.iter().enumerate() {
                let _ = writeln!(out, "{},{},{},{},{}", key.benchmark, key.target, key.config, run, *v as u64);
            }
        }
        out
    }

    /// Per-run timings and corpus statistics. Wall-clock columns make this
    /// file differ between otherwise identical experiments.
    pub fn timings_csv(&self) -> String {
        let mut out = String::from(
            "benchmark,config,run,rng_seed,executions,corpus_size,lookahead_calls,wall_time_s,lookahead_time_s\n",
        );
        for r in &self.runs {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{:.6},{:.6}",
                r.benchmark,
                r.config,
                r.run_index,
                r.rng_seed,
                r.result.executions,
                r.result.corpus_size,
                r.result.lookahead_calls,
                r.result.wall_time,
                r.result.lookahead_time
            );
        }
        out
    }
}
