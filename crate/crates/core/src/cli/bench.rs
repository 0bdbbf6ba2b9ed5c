use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Deserialize;

use crate::fuzzer::{FuzzConfig, ScheduleMode, DEFAULT_ENERGY_CAP, DEFAULT_MAX_INPUT_LEN, DEFAULT_SEED_LEN};
use crate::lookahead::DEFAULT_PREFIX_CAP;
use crate::minivm::{Loc, Program, DEFAULT_STEP_BUDGET};
use crate::stats::{Benchmark, ExperimentOptions};

use super::{load_program, resolve_target};

/// A target given as an assembler label or a raw location index.
#[derive(Clone, Debug, PartialEq, Eq, Deserialize)]
#[serde(untagged)]
pub enum TargetRef {
    Index(u32),
    Label(String),
}

impl TargetRef {
    pub fn parse(s: &str) -> TargetRef {
        match s.trim().parse::<u32>() {
            Ok(i) => TargetRef::Index(i),
            Err(_) => TargetRef::Label(s.trim().to_string()),
        }
    }

    pub fn resolve(&self, program: &Program) -> Result<(String, Loc)> {
        match self {
            TargetRef::Index(i) => {
                let loc = Loc(*i);
                if !program.contains(loc) {
                    bail!("target location {i} is outside the program ({} instructions)", program.len());
                }
                Ok((i.to_string(), loc))
            }
            TargetRef::Label(name) => Ok((name.clone(), resolve_target(program, name)?)),
        }
    }
}

/// Seed input: `zeros:N` or a hex string.
pub fn parse_seed(spec: &str) -> Result<Vec<u8>> {
    let spec = spec.trim();
    if let Some(n) = spec.strip_prefix("zeros:") {
        let n: usize = n.trim().parse().with_context(|| format!("bad seed length in `{spec}`"))?;
        return Ok(vec![0; n]);
    }
    super::parse_hex(spec)
}

fn default_seed() -> String {
    format!("zeros:{DEFAULT_SEED_LEN}")
}

/// One benchmark entry of an experiment file.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkSpec {
    pub name: String,
    /// Assembly or binary program, relative to the experiment file.
    #[serde(rename = "program")]
    pub program_path: PathBuf,
    pub targets: Vec<TargetRef>,
    #[serde(default = "default_seed")]
    pub seed: String,
    /// Overrides the experiment-wide budget.
    pub budget: Option<u64>,
}

fn default_runs() -> usize {
    24
}

fn default_configs() -> Vec<String> {
    vec!["A".into(), "B".into()]
}

/// Experiment file contents (TOML).
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_runs")]
    pub runs: usize,
    pub budget: u64,
    #[serde(default)]
    pub base_rng_seed: u64,
    #[serde(default = "default_configs")]
    pub configs: Vec<String>,
    #[serde(default)]
    pub comparisons: Vec<[String; 2]>,
    #[serde(default)]
    pub threads: usize,
    pub energy_cap: Option<u64>,
    pub max_input_len: Option<usize>,
    pub step_budget: Option<u64>,
    pub prefix_cap: Option<usize>,
    #[serde(rename = "benchmark")]
    pub benchmarks: Vec<BenchmarkSpec>,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).context("invalid experiment file")?;
        if cfg.benchmarks.is_empty() {
            bail!("experiment file defines no [[benchmark]]");
        }
        if cfg.runs == 0 || cfg.budget == 0 {
            bail!("runs and budget must be positive");
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
        Self::parse(&text)
    }

    /// Loads programs (relative to `base_dir`) and resolves targets and seeds.
    pub fn benchmarks(&self, base_dir: &Path) -> Result<Vec<Benchmark>> {
        self.benchmarks
            .iter()
            .map(|spec| {
                let path = base_dir.join(&spec.program_path);
                let program = load_program(&path)?;
                let targets = spec
                    .targets
                    .iter()
                    .map(|t| t.resolve(&program))
                    .collect::<Result<Vec<_>>>()
                    .with_context(|| format!("benchmark `{}`", spec.name))?;
                if targets.is_empty() {
                    bail!("benchmark `{}` has no targets", spec.name);
                }
                Ok(Benchmark {
                    name: spec.name.clone(),
                    program,
                    targets,
                    seed: parse_seed(&spec.seed)?,
                    budget: spec.budget.unwrap_or(self.budget),
                })
            })
            .collect()
    }

    /// Experiment options; `prefix_cap` is the value to use when the file sets none.
    pub fn options(&self, prefix_cap: Option<usize>) -> Result<ExperimentOptions> {
        let parse = |s: &String| s.parse::<ScheduleMode>().map_err(anyhow::Error::msg);
        let configs = self.configs.iter().map(parse).collect::<Result<Vec<_>>>()?;
        let comparisons = self
            .comparisons
            .iter()
            .map(|[x, y]| Ok((parse(x)?, parse(y)?)))
            .collect::<Result<Vec<_>>>()?;
        for (x, y) in &comparisons {
            if !configs.contains(x) || !configs.contains(y) {
                bail!("comparison {x} vs. {y} uses a configuration that is not run");
            }
        }
        let energy_cap = self.energy_cap.unwrap_or(DEFAULT_ENERGY_CAP);
        if !energy_cap.is_power_of_two() {
            bail!("energy_cap must be a power of two");
        }
        let mut fuzz = FuzzConfig::new(ScheduleMode::LookaheadB);
        fuzz.schedule.energy_cap = energy_cap;
        fuzz.max_input_len = self.max_input_len.unwrap_or(DEFAULT_MAX_INPUT_LEN);
        fuzz.step_budget = self.step_budget.unwrap_or(DEFAULT_STEP_BUDGET);
        fuzz.prefix_cap = self.prefix_cap.or(prefix_cap).unwrap_or(DEFAULT_PREFIX_CAP);
        Ok(ExperimentOptions {
            configs,
            comparisons,
            runs: self.runs,
            base_rng_seed: self.base_rng_seed,
            threads: self.threads,
            fuzz,
            log_digests: false,
        })
    }
}
