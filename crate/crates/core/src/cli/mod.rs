//! The `lafuzz` command line.
//!
//! Machine-readable results go to stdout; diagnostics go to stderr.

pub mod bench;

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use crate::absint::{prefix_inference, suffix_fixpoint, SuffixOptions};
use crate::fuzzer::{fuzz_loop, FuzzConfig, ScheduleMode, DEFAULT_SEED_LEN};
use crate::lookahead::{analyze_trace, LookaheadConfig, TargetSet, DEFAULT_PREFIX_CAP, PREFIX_CAP_ENV};
use crate::minivm::{
    assemble, decode_program, encode_program, execute, path_id, Loc, Program, DEFAULT_STEP_BUDGET,
};
use crate::stats::run_experiment;

pub use bench::{parse_seed, BenchmarkSpec, ExperimentConfig, TargetRef};

#[derive(Debug, Parser)]
#[command(name = "lafuzz", version, about = "Targeted greybox fuzzing with lookahead analysis")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Assemble a program into its binary form and a symbol table.
    Assemble {
        input: PathBuf,
        /// Binary output path; defaults to the input with a `.bin` extension.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Execute one input and report how the run ended.
    Run {
        program: PathBuf,
        /// File holding the input as hex.
        input: Option<PathBuf>,
        /// Input as a hex string instead of a file.
        #[arg(long, conflicts_with = "input")]
        hex: Option<String>,
        #[arg(long, default_value_t = DEFAULT_STEP_BUDGET)]
        budget: u64,
        /// Include the executed locations and branch edges.
        #[arg(long)]
        trace: bool,
    },
    /// Compute the lookahead identifier and split points of one input.
    Analyze {
        program: PathBuf,
        input: Option<PathBuf>,
        #[arg(long, conflicts_with = "input")]
        hex: Option<String>,
        /// Comma-separated labels or location indices.
        #[arg(long, value_delimiter = ',')]
        targets: Vec<String>,
        /// Include the joined abstract states of the final suffix check.
        #[arg(long)]
        dump_states: bool,
    },
    /// Run one fuzzing campaign.
    Fuzz {
        program: PathBuf,
        /// Power schedule: A, B, C or D.
        #[arg(long, default_value = "B")]
        config: ScheduleMode,
        #[arg(long, value_delimiter = ',', required = true)]
        targets: Vec<String>,
        #[arg(long, default_value_t = 2_000_000)]
        budget: u64,
        #[arg(long, default_value_t = 0)]
        rng_seed: u64,
        /// Seed input as hex; defaults to 64 zero bytes.
        #[arg(long)]
        seed_file: Option<PathBuf>,
        /// Write the JSON-lines event log here.
        #[arg(long)]
        log: Option<PathBuf>,
        /// Keep fuzzing after every target has been reached.
        #[arg(long)]
        no_stop: bool,
    },
    /// Run an experiment described by a TOML file.
    Bench {
        config: PathBuf,
        /// Directory for the CSV and Markdown reports.
        #[arg(long)]
        out_dir: Option<PathBuf>,
        /// Override the number of worker threads.
        #[arg(long)]
        threads: Option<usize>,
    },
}

/// Decodes hex, ignoring whitespace.
pub fn parse_hex(text: &str) -> Result<Vec<u8>> {
    let clean: String = text.chars().filter(|c| !c.is_whitespace()).collect();
    let clean = clean.strip_prefix("0x").unwrap_or(&clean);
    hex::decode(clean).map_err(|e| anyhow!("invalid hex input: {e}"))
}

fn symbol_path(program: &Path) -> PathBuf {
    program.with_extension("sym")
}

/// Loads an assembly file (`.asm`, `.s`) or a binary program with an optional
/// `.sym` symbol table next to it.
pub fn load_program(path: &Path) -> Result<Program> {
    let bytes = std::fs::read(path).with_context(|| format!("cannot read {}", path.display()))?;
    let is_source = matches!(path.extension().and_then(|e| e.to_str()), Some("asm" | "s"));
    if is_source {
        let text = String::from_utf8(bytes).with_context(|| format!("{} is not UTF-8", path.display()))?;
        return assemble(&text).with_context(|| format!("{}", path.display()));
    }
    let program = decode_program(&bytes).with_context(|| format!("{}", path.display()))?;
    let sym = symbol_path(path);
    if sym.exists() {
        let text = std::fs::read_to_string(&sym).with_context(|| format!("cannot read {}", sym.display()))?;
        let labels: BTreeMap<String, Loc> =
            serde_json::from_str(&text).with_context(|| format!("invalid symbol table {}", sym.display()))?;
        if let Some((name, loc)) = labels.iter().find(|(_, l)| !program.contains(**l)) {
            bail!("symbol `{name}` points outside the program ({loc})");
        }
        return Ok(program.with_labels(labels));
    }
    Ok(program)
}

/// Resolves a target written as a label or a location index.
pub fn resolve_target(program: &Program, name: &str) -> Result<Loc> {
    if let Some(loc) = program.label(name) {
        return Ok(loc);
    }
    match name.parse::<u32>() {
        Ok(i) if program.contains(Loc(i)) => Ok(Loc(i)),
        Ok(i) => bail!("target location {i} is outside the program ({} instructions)", program.len()),
        Err(_) => bail!("unknown target label `{name}`"),
    }
}

fn target_set(program: &Program, names: &[String]) -> Result<TargetSet> {
    let locs = names.iter().filter(|n| !n.trim().is_empty()).map(|n| resolve_target(program, n.trim()));
    let locs = locs.collect::<Result<Vec<_>>>()?;
    Ok(TargetSet::new(program, locs)?)
}

/// Prefix cap from the environment, if set.
pub fn prefix_cap_from_env() -> Result<Option<usize>> {
    match std::env::var(PREFIX_CAP_ENV) {
        Ok(v) => {
            let cap = v.trim().parse().with_context(|| format!("{PREFIX_CAP_ENV} must be a non-negative integer"))?;
            Ok(Some(cap))
        }
        Err(std::env::VarError::NotPresent) => Ok(None),
        Err(e) => Err(anyhow!("{PREFIX_CAP_ENV}: {e}")),
    }
}

fn read_input(file: Option<&Path>, hex_arg: Option<&str>) -> Result<Vec<u8>> {
    match (file, hex_arg) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
            parse_hex(&text).with_context(|| format!("{}", path.display()))
        }
        (None, Some(h)) => parse_hex(h),
        (None, None) => Ok(Vec::new()),
    }
}

fn print_json<T: Serialize>(out: &mut dyn Write, value: &T) -> Result<()> {
    serde_json::to_writer_pretty(&mut *out, value)?;
    writeln!(out)?;
    Ok(())
}

fn cmd_assemble(input: &Path, output: Option<&Path>, out: &mut dyn Write) -> Result<()> {
    let text = std::fs::read_to_string(input).with_context(|| format!("cannot read {}", input.display()))?;
    let program = assemble(&text).with_context(|| format!("{}", input.display()))?;
    let bin = output.map(Path::to_path_buf).unwrap_or_else(|| input.with_extension("bin"));
    let sym = symbol_path(&bin);
    std::fs::write(&bin, encode_program(&program)).with_context(|| format!("cannot write {}", bin.display()))?;
    std::fs::write(&sym, serde_json::to_string_pretty(program.labels())?)
        .with_context(|| format!("cannot write {}", sym.display()))?;
    print_json(
        out,
        &json!({
            "binary": bin.display().to_string(),
            "symbols": sym.display().to_string(),
            "instructions": program.len(),
        }),
    )
}

fn label_at(program: &Program, loc: Loc) -> Option<String> {
    program.labels().iter().find(|(_, l)| **l == loc).map(|(n, _)| n.clone())
}

fn cmd_run(program: &Path, input: Vec<u8>, budget: u64, with_trace: bool, out: &mut dyn Write) -> Result<()> {
    if budget == 0 {
        bail!("--budget must be positive");
    }
    let program = load_program(program)?;
    let trace = execute(&program, &input, budget);
    let last = trace.last();
    let mut report = json!({
        "status": trace.status,
        "steps": trace.steps_used,
        "last_location": last,
        "last_label": last.and_then(|l| label_at(&program, l)),
        "pid": path_id(&trace).to_string(),
    });
    if with_trace {
        report["locations"] = json!(trace.locations);
        report["branch_edges"] = json!(trace.branch_edges);
    }
    print_json(out, &report)
}

fn cmd_analyze(
    program: &Path,
    input: Vec<u8>,
    targets: &[String],
    dump_states: bool,
    out: &mut dyn Write,
) -> Result<()> {
    let program = load_program(program)?;
    let targets = target_set(&program, targets)?;
    let prefix_cap = prefix_cap_from_env()?.unwrap_or(DEFAULT_PREFIX_CAP);
    let trace = execute(&program, &input, DEFAULT_STEP_BUDGET);
    let config = LookaheadConfig { prefix_cap, ..LookaheadConfig::default() };
    let result = analyze_trace(&program, &trace, &targets, &config);
    let mut report = serde_json::to_value(&result)?;
    if dump_states {
        let post = prefix_inference(&program, &trace, result.prefix_len)?;
        let check = suffix_fixpoint(
            &program,
            &post.continuations,
            targets.locations(),
            SuffixOptions { stop_at_first_hit: false },
        );
        report["suffix_check"] = serde_json::to_value(&check)?;
    }
    print_json(out, &report)
}

#[allow(clippy::too_many_arguments)]
fn cmd_fuzz(
    program: &Path,
    config: ScheduleMode,
    targets: &[String],
    budget: u64,
    rng_seed: u64,
    seed_file: Option<&Path>,
    log: Option<&Path>,
    stop: bool,
    out: &mut dyn Write,
) -> Result<()> {
    if budget == 0 {
        bail!("--budget must be positive");
    }
    let program = load_program(program)?;
    let targets = target_set(&program, targets)?;
    if targets.is_empty() {
        bail!("--targets must name at least one location");
    }
    let seed = match seed_file {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("cannot read {}", p.display()))?;
            parse_seed(&text).with_context(|| format!("{}", p.display()))?
        }
        None => vec![0; DEFAULT_SEED_LEN],
    };
    let mut cfg = FuzzConfig::new(config);
    cfg.stop_on_target = stop;
    if let Some(cap) = prefix_cap_from_env()? {
        cfg.prefix_cap = cap;
    }
    let mut log_writer = match log {
        Some(p) => Some(BufWriter::new(File::create(p).with_context(|| format!("cannot create {}", p.display()))?)),
        None => None,
    };
    let result = fuzz_loop(
        &program,
        &[seed],
        &targets,
        &cfg,
        budget,
        rng_seed,
        log_writer.as_mut().map(|w| w as &mut dyn Write),
    )?;
    let first_hits: BTreeMap<String, u64> = result
        .first_hits
        .iter()
        .map(|(l, i)| (label_at(&program, *l).unwrap_or_else(|| l.to_string()), *i))
        .collect();
    let mut report = serde_json::to_value(&result)?;
    report["first_hits"] = json!(first_hits);
    report["config"] = json!(config.to_string());
    print_json(out, &report)
}

fn cmd_bench(config: &Path, out_dir: Option<&Path>, threads: Option<usize>, out: &mut dyn Write) -> Result<()> {
    let cfg = ExperimentConfig::load(config)?;
    let base = config.parent().unwrap_or(Path::new("."));
    let benchmarks = cfg.benchmarks(base)?;
    let mut options = cfg.options(prefix_cap_from_env()?)?;
    if let Some(t) = threads {
        options.threads = t;
    }
    eprintln!(
        "running {} benchmark(s) x {} config(s) x {} run(s)",
        benchmarks.len(),
        options.configs.len(),
        options.runs
    );
    let result = run_experiment(&benchmarks, &options)?;
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
        let files = [
            ("comparison.csv", result.csv()),
            ("comparison.md", result.markdown()),
            ("samples.csv", result.samples_csv()),
            ("timings.csv", result.timings_csv()),
        ];
        for (name, content) in files {
            let path = dir.join(name);
            std::fs::write(&path, content).with_context(|| format!("cannot write {}", path.display()))?;
        }
        eprintln!("reports written to {}", dir.display());
    }
    write!(out, "{}", result.markdown())?;
    Ok(())
}

/// Runs a parsed command, writing results to `out`.
pub fn run(cli: Cli, out: &mut dyn Write) -> Result<()> {
    match cli.command {
        Command::Assemble { input, output } => cmd_assemble(&input, output.as_deref(), out),
        Command::Run { program, input, hex, budget, trace } => {
            let input = read_input(input.as_deref(), hex.as_deref())?;
            cmd_run(&program, input, budget, trace, out)
        }
        Command::Analyze { program, input, hex, targets, dump_states } => {
            let input = read_input(input.as_deref(), hex.as_deref())?;
            cmd_analyze(&program, input, &targets, dump_states, out)
        }
        Command::Fuzz { program, config, targets, budget, rng_seed, seed_file, log, no_stop } => cmd_fuzz(
            &program,
            config,
            &targets,
            budget,
            rng_seed,
            seed_file.as_deref(),
            log.as_deref(),
            !no_stop,
            out,
        ),
        Command::Bench { config, out_dir, threads } => cmd_bench(&config, out_dir.as_deref(), threads, out),
    }
}

/// Entry point of the `lafuzz` binary.
pub fn main() -> ExitCode {
    let cli = Cli::parse();
    let stdout = io::stdout();
    let mut out = stdout.lock();
    match run(cli, &mut out) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
