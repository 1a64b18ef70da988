//! Command-line experiment runner.
//!
//! Subcommands: `run`, `attack`, `verify`, `scenarios`. A config file sets
//! the pipeline; `--policy` and `--mode` override it.
//!
//! Workloads are trace file paths or generator specs:
//!
//! ```text
//! gen:inter[:bits=N][:burst=B][:resolve=R]   cross-thread channel
//! gen:intra[:bits=N][:resolve=R]             same-thread channel
//! gen:loopdiv[:iters=N][:resolve=R]          branch-guarded division loop
//! gen:divsat[:n=N][:guard=R]                 both threads saturate the divider
//! ```
//!
//! Secret bits come from `ChaCha8Rng::seed_from_u64(seed + trial)`, one
//! `gen::<bool>()` draw per bit. Nothing else is random.
//!
//! Exit codes: 0 success, 1 a run hit the cycle limit or a requested check
//! failed, 2 usage or config error, 3 file I/O error, 4 workload rejected.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::attack::{self, AttackError, ChannelReport, ChannelTrial};
use crate::pipeline::{
    parse_mode, parse_policy, render_log, ConfigError, PipelineConfig, SimError, SimMetrics,
    Simulator,
};
use crate::policy::{PolicyKind, ScenarioClass};
use crate::verify::{self, Bounds, ModelConfig, PortModel, Property, ReceiverOps, VerifyError};
use crate::workload::{parse_trace, TraceError, Workload, DEFAULT_RESOLVE_LATENCY};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_WORKLOAD: i32 = 4;

pub const DEFAULT_BITS: usize = 100;
pub const DEFAULT_BURST: u32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Trace { path: String, source: TraceError },
    #[error(transparent)]
    Sim(SimError),
    #[error(transparent)]
    Attack(AttackError),
    #[error(transparent)]
    Verify(#[from] VerifyError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Verify(_) => EXIT_USAGE,
            CliError::Config(ConfigError::Io { .. }) | CliError::Io { .. } | CliError::Csv(_) => {
                EXIT_IO
            }
            CliError::Config(_) => EXIT_USAGE,
            CliError::Trace { .. } | CliError::Sim(_) | CliError::Attack(_) => EXIT_WORKLOAD,
        }
    }
}

fn io_err(path: &std::path::Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Seeded secret bits.
pub fn secret_bits(seed: u64, n: usize) -> Vec<bool> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.gen::<bool>()).collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum WorkloadSpec {
    Inter {
        bits: Option<usize>,
        burst: u32,
        resolve: u32,
    },
    Intra {
        bits: Option<usize>,
        resolve: u32,
    },
    LoopDiv {
        iters: u32,
        resolve: u32,
    },
    DivSat {
        n: u32,
        guard: Option<u32>,
    },
    File(PathBuf),
}

impl WorkloadSpec {
    pub fn is_channel(&self) -> bool {
        matches!(
            self,
            WorkloadSpec::Inter { .. } | WorkloadSpec::Intra { .. }
        )
    }

    /// Secret length for channel workloads, `default_bits` unless pinned.
    pub fn bits(&self, default_bits: usize) -> usize {
        match self {
            WorkloadSpec::Inter { bits, .. } | WorkloadSpec::Intra { bits, .. } => {
                bits.unwrap_or(default_bits)
            }
            _ => 0,
        }
    }

    pub fn build(&self, secret: &[bool]) -> Result<Workload, CliError> {
        Ok(match self {
            WorkloadSpec::Inter { burst, resolve, .. } => {
                attack::gen_inter_sca(secret, *burst, *resolve)
            }
            WorkloadSpec::Intra { resolve, .. } => attack::gen_intra_sca(secret, *resolve),
            WorkloadSpec::LoopDiv { iters, resolve } => attack::gen_loop_div(*iters, *resolve),
            WorkloadSpec::DivSat { n, guard } => attack::gen_div_saturation(*n, *guard),
            WorkloadSpec::File(p) => {
                let text = fs::read_to_string(p).map_err(io_err(p))?;
                parse_trace(&text).map_err(|source| CliError::Trace {
                    path: p.display().to_string(),
                    source,
                })?
            }
        })
    }
}

impl FromStr for WorkloadSpec {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        let Some(rest) = s.strip_prefix("gen:") else {
            return Ok(WorkloadSpec::File(PathBuf::from(s)));
        };
        let mut parts = rest.split(':');
        let kind = parts.next().unwrap_or_default();
        let mut kv = Vec::new();
        for p in parts {
            let (k, v) = p
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("`{p}` in `{s}` is not key=value")))?;
            let v: u64 = v
                .parse()
                .map_err(|_| CliError::Usage(format!("`{v}` in `{s}` is not an integer")))?;
            kv.push((k, v));
        }
        let allowed: &[&str] = match kind {
            "inter" => &["bits", "burst", "resolve"],
            "intra" => &["bits", "resolve"],
            "loopdiv" => &["iters", "resolve"],
            "divsat" => &["n", "guard"],
            other => return Err(CliError::Usage(format!("unknown generator `{other}`"))),
        };
        if let Some((k, _)) = kv.iter().find(|(k, _)| !allowed.contains(k)) {
            return Err(CliError::Usage(format!(
                "generator `{kind}` takes {}, found `{k}`",
                allowed.join("|")
            )));
        }
        let get = |key: &str| kv.iter().rev().find(|(k, _)| *k == key).map(|&(_, v)| v);
        let resolve = get("resolve").map_or(DEFAULT_RESOLVE_LATENCY, |v| v as u32);
        let spec = match kind {
            "inter" => WorkloadSpec::Inter {
                bits: get("bits").map(|v| v as usize),
                burst: get("burst").map_or(DEFAULT_BURST, |v| v as u32),
                resolve,
            },
            "intra" => WorkloadSpec::Intra {
                bits: get("bits").map(|v| v as usize),
                resolve,
            },
            "loopdiv" => WorkloadSpec::LoopDiv {
                iters: get("iters").map_or(8, |v| v as u32),
                resolve,
            },
            _ => WorkloadSpec::DivSat {
                n: get("n").map_or(16, |v| v as u32),
                guard: get("guard").map(|v| v as u32),
            },
        };
        match spec {
            WorkloadSpec::Inter { burst: 0, .. } => {
                Err(CliError::Usage("burst must be >= 1".into()))
            }
            WorkloadSpec::LoopDiv { iters: 0, .. } => {
                Err(CliError::Usage("iters must be >= 1".into()))
            }
            s => Ok(s),
        }
    }
}

impl fmt::Display for WorkloadSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WorkloadSpec::Inter {
                bits,
                burst,
                resolve,
            } => {
                write!(f, "gen:inter")?;
                if let Some(b) = bits {
                    write!(f, ":bits={b}")?;
                }
                write!(f, ":burst={burst}:resolve={resolve}")
            }
            WorkloadSpec::Intra { bits, resolve } => {
                write!(f, "gen:intra")?;
                if let Some(b) = bits {
                    write!(f, ":bits={b}")?;
                }
                write!(f, ":resolve={resolve}")
            }
            WorkloadSpec::LoopDiv { iters, resolve } => {
                write!(f, "gen:loopdiv:iters={iters}:resolve={resolve}")
            }
            WorkloadSpec::DivSat { n, guard } => {
                write!(f, "gen:divsat:n={n}")?;
                if let Some(g) = guard {
                    write!(f, ":guard={g}")?;
                }
                Ok(())
            }
            WorkloadSpec::File(p) => write!(f, "{}", p.display()),
        }
    }
}

/// A policy x workload x trial matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub workloads: Vec<WorkloadSpec>,
    pub policies: Vec<PolicyKind>,
    pub trials: u32,
    pub seed: u64,
    pub bits: usize,
    pub base: PipelineConfig,
}

impl ExperimentSpec {
    pub fn check(&self) -> Result<(), CliError> {
        if self.workloads.is_empty() {
            return Err(CliError::Usage("at least one workload is required".into()));
        }
        if self.policies.is_empty() {
            return Err(CliError::Usage("at least one policy is required".into()));
        }
        if self.trials == 0 {
            return Err(CliError::Usage("trials must be >= 1".into()));
        }
        Ok(())
    }
}

/// One CSV row. Field order is the column order of [`CSV_HEADER`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Row {
    pub workload: String,
    pub policy: String,
    pub mode: String,
    pub trial: u32,
    pub seed: u64,
    pub cycles: u64,
    pub complete: bool,
    pub committed_t0: u64,
    pub committed_t1: u64,
    pub squashed_t0: u64,
    pub squashed_t1: u64,
    pub preempt_nop: u64,
    pub preempt_eop: u64,
    pub reexecution_cycles: u64,
    pub mean_issue_wait: String,
    pub div_busy_t0: Option<String>,
    pub div_busy_t1: Option<String>,
    pub bits: Option<usize>,
    pub error_rate: Option<String>,
    pub separation: Option<i64>,
    pub identical: Option<bool>,
}

pub const CSV_HEADER: [&str; 21] = [
    "workload",
    "policy",
    "mode",
    "trial",
    "seed",
    "cycles",
    "complete",
    "committed_t0",
    "committed_t1",
    "squashed_t0",
    "squashed_t1",
    "preempt_nop",
    "preempt_eop",
    "reexecution_cycles",
    "mean_issue_wait",
    "div_busy_t0",
    "div_busy_t1",
    "bits",
    "error_rate",
    "separation",
    "identical",
];

fn fixed(x: f64) -> String {
    format!("{x:.6}")
}

impl Row {
    fn new(
        workload: &WorkloadSpec,
        cfg: &PipelineConfig,
        trial: u32,
        seed: u64,
        m: &SimMetrics,
        channel: Option<&ChannelReport>,
        bits: Option<usize>,
    ) -> Self {
        let div = m.port_index("intdiv");
        Row {
            workload: workload.to_string(),
            policy: cfg.policy.name().to_string(),
            mode: cfg.ssc_mode().name().to_string(),
            trial,
            seed,
            cycles: m.cycles,
            complete: m.complete,
            committed_t0: m.committed[0],
            committed_t1: m.committed[1],
            squashed_t0: m.squashed[0],
            squashed_t1: m.squashed[1],
            preempt_nop: m.preempt_nop,
            preempt_eop: m.preempt_eop,
            reexecution_cycles: m.reexecution_cycles,
            mean_issue_wait: fixed(m.mean_issue_wait()),
            div_busy_t0: div.map(|p| fixed(m.port_busy_rate(p, 0))),
            div_busy_t1: div.map(|p| fixed(m.port_busy_rate(p, 1))),
            bits,
            error_rate: channel.map(|c| fixed(c.error_rate)),
            separation: channel.and_then(|c| c.separation),
            identical: channel.map(|c| c.distributions_identical),
        }
    }
}

/// Result of one matrix cell.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub row: Row,
    pub metrics: SimMetrics,
    pub trial: Option<ChannelTrial>,
    pub events: Option<String>,
}

/// Runs every cell in workload-major, policy, trial order.
pub fn run_matrix(spec: &ExperimentSpec, record_events: bool) -> Result<Vec<Cell>, CliError> {
    spec.check()?;
    let mut out = Vec::new();
    for ws in &spec.workloads {
        for policy in &spec.policies {
            let mut cfg = spec.base.clone();
            cfg.set_policy(policy.clone());
            cfg.record_events = record_events;
            for t in 0..spec.trials {
                let seed = spec.seed.wrapping_add(t as u64);
                out.push(run_cell(ws, &cfg, t, seed, spec.bits)?);
            }
        }
    }
    Ok(out)
}

fn run_cell(
    ws: &WorkloadSpec,
    cfg: &PipelineConfig,
    trial: u32,
    seed: u64,
    default_bits: usize,
) -> Result<Cell, CliError> {
    let secret = secret_bits(seed, ws.bits(default_bits));
    let w = ws.build(&secret)?;
    let mut sim = Simulator::new(cfg.clone(), w.clone()).map_err(CliError::Sim)?;
    let metrics = match sim.run() {
        Ok(m) => m,
        Err(SimError::CycleLimit { partial, .. }) => *partial,
        Err(e) => return Err(CliError::Sim(e)),
    };
    let events = cfg.record_events.then(|| render_log(sim.events()));
    let (trial_data, report) = if ws.is_channel() && metrics.complete {
        let tr = attack::extract_trial(&w, &secret, &cfg.policy, metrics.clone())
            .map_err(CliError::Attack)?;
        let rep = attack::measure_error_rate(&tr).map_err(CliError::Attack)?;
        (Some(tr), Some(rep))
    } else {
        (None, None)
    };
    let bits = ws.is_channel().then_some(secret.len());
    Ok(Cell {
        row: Row::new(ws, cfg, trial, seed, &metrics, report.as_ref(), bits),
        metrics,
        trial: trial_data,
        events,
    })
}

pub fn write_csv<W: Write>(cells: &[Cell], out: W) -> Result<(), CliError> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    if cells.is_empty() {
        w.write_record(CSV_HEADER)?;
    }
    for c in cells {
        w.serialize(&c.row)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Concatenated event logs, one `# workload policy trial` header per cell.
pub fn event_log(cells: &[Cell]) -> String {
    let mut s = String::new();
    for c in cells {
        if let Some(ev) = &c.events {
            s.push_str(&format!(
                "# {} {} trial {}\n",
                c.row.workload, c.row.policy, c.row.trial
            ));
            s.push_str(ev);
        }
    }
    s
}

/// Per-class counts and fractions of classified issue attempts.
pub fn report_scenarios(m: &SimMetrics) -> Vec<(ScenarioClass, u64, f64)> {
    let total = m.classified_events();
    ScenarioClass::ALL
        .iter()
        .map(|&c| {
            let n = m.scenario(c);
            let frac = if total == 0 {
                0.0
            } else {
                n as f64 / total as f64
            };
            (c, n, frac)
        })
        .collect()
}

pub fn render_scenarios(m: &SimMetrics) -> String {
    let mut s = format!("{:<14} {:>8} {:>9}\n", "scenario", "count", "fraction");
    for (c, n, f) in report_scenarios(m) {
        s.push_str(&format!("{:<14} {:>8} {:>9.4}\n", c.name(), n, f));
    }
    s.push_str(&format!("{:<14} {:>8}\n", "total", m.classified_events()));
    s
}

#[derive(Debug, Parser)]
#[command(
    name = "specwands",
    version,
    about = "SMT issue-port scheduling simulator"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate workload x policy combinations and emit one CSV row per run.
    Run(SimArgs),
    /// Run covert-channel trials and report decoding error rates.
    Attack {
        #[command(flatten)]
        sim: SimArgs,
        /// Per-bit `bit,value,latency` CSV; one file per policy and trial.
        #[arg(long)]
        trial_csv: Option<PathBuf>,
        /// Fail unless every SpecWands run is secret-invariant and undecodable.
        #[arg(long)]
        check: bool,
    },
    /// Exhaustively check the two-thread acquire/release model.
    Verify(VerifyArgs),
    /// Distribution of contention scenarios per policy.
    Scenarios(SimArgs),
}

#[derive(Debug, Args, Clone, Default)]
pub struct SimArgs {
    /// Pipeline config file (TOML).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Policies: fcfs, tdm, sc, specwands, specwands-spectre, specwands-all, or `all`.
    #[arg(long, value_delimiter = ',')]
    pub policy: Vec<String>,
    /// Speculation definition: spectre or all.
    #[arg(long)]
    pub mode: Option<String>,
    /// Trace file or generator spec; repeatable.
    #[arg(long)]
    pub workload: Vec<String>,
    /// Secret length for channel generators.
    #[arg(long, default_value_t = DEFAULT_BITS)]
    pub bits: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub trials: u32,
    /// Write the CSV here instead of stdout.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[arg(long)]
    pub event_log: Option<PathBuf>,
}

#[derive(Debug, Args, Clone)]
pub struct VerifyArgs {
    /// Sender and receiver iteration counts.
    #[arg(long, default_value = "3,3")]
    pub bounds: String,
    /// specwands or fcfs.
    #[arg(long, default_value = "specwands")]
    pub model: String,
    /// Receiver op status: ns, spec or either.
    #[arg(long, default_value = "either")]
    pub receiver: String,
    /// Machine-readable `property,result,witness` summary.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[arg(long, default_value_t = verify::DEFAULT_STATE_CAP)]
    pub state_cap: usize,
}

const ALL_POLICIES: [&str; 5] = ["fcfs", "tdm", "sc", "specwands-spectre", "specwands-all"];

/// Applies the config file and flag overrides.
pub fn experiment_from_args(
    args: &SimArgs,
    default_workload: &[&str],
) -> Result<ExperimentSpec, CliError> {
    let mut base = match &args.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    let mode = match &args.mode {
        Some(m) => parse_mode(m)?,
        None => base.mode,
    };
    base.mode = mode;
    let (tdm_slice, sc_delayed) = match &base.policy {
        PolicyKind::Tdm { slice_cycles } => (Some(*slice_cycles), None),
        PolicyKind::SpecCompress { delayed_classes } => (None, Some(delayed_classes.clone())),
        _ => (None, None),
    };
    let mut names: Vec<&str> = Vec::new();
    for p in &args.policy {
        if p == "all" {
            names.extend(ALL_POLICIES);
        } else {
            names.push(p);
        }
    }
    let policies = if names.is_empty() {
        let p = match base.policy {
            PolicyKind::SpecWands { .. } if args.mode.is_some() => PolicyKind::SpecWands { mode },
            ref p => p.clone(),
        };
        vec![p]
    } else {
        names
            .iter()
            .map(|n| parse_policy(n, mode, tdm_slice, sc_delayed.clone()))
            .collect::<Result<_, _>>()?
    };
    let raw: Vec<&str> = if args.workload.is_empty() {
        default_workload.to_vec()
    } else {
        args.workload.iter().map(String::as_str).collect()
    };
    let workloads = raw
        .iter()
        .map(|w| w.parse())
        .collect::<Result<Vec<WorkloadSpec>, _>>()?;
    let spec = ExperimentSpec {
        workloads,
        policies,
        trials: args.trials,
        seed: args.seed,
        bits: args.bits,
        base,
    };
    spec.check()?;
    Ok(spec)
}

fn write_file(path: &PathBuf, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(io_err(path))
}

fn emit_outputs(args: &SimArgs, cells: &[Cell], out: &mut dyn Write) -> Result<(), CliError> {
    let mut buf = Vec::new();
    write_csv(cells, &mut buf)?;
    match &args.csv {
        Some(p) => write_file(p, &buf)?,
        None => out
            .write_all(&buf)
            .map_err(io_err(std::path::Path::new("<stdout>")))?,
    }
    if let Some(p) = &args.event_log {
        write_file(p, event_log(cells).as_bytes())?;
    }
    Ok(())
}

fn all_complete(cells: &[Cell]) -> bool {
    cells.iter().all(|c| c.metrics.complete)
}

fn cmd_run(args: &SimArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    let spec = experiment_from_args(args, &[])?;
    let cells = run_matrix(&spec, args.event_log.is_some())?;
    emit_outputs(args, &cells, out)?;
    Ok(if all_complete(&cells) {
        EXIT_OK
    } else {
        EXIT_CHECK_FAILED
    })
}

fn trial_csv_path(base: &std::path::Path, cell: &Cell, multi: bool) -> PathBuf {
    if !multi {
        return base.to_path_buf();
    }
    let stem = base.file_stem().and_then(|s| s.to_str()).unwrap_or("trial");
    let ext = base.extension().and_then(|s| s.to_str()).unwrap_or("csv");
    base.with_file_name(format!(
        "{stem}.{}.{}.{ext}",
        cell.row.policy, cell.row.trial
    ))
}

/// Runs `ws` under `cfg` with `secret` and returns the probe latencies.
fn latencies(
    ws: &WorkloadSpec,
    cfg: &PipelineConfig,
    secret: &[bool],
) -> Result<Vec<u64>, CliError> {
    let w = ws.build(secret)?;
    let tr = attack::run_channel(&w, secret, cfg).map_err(CliError::Attack)?;
    Ok(tr.per_bit_receiver_latency)
}

fn cmd_attack(
    args: &SimArgs,
    trial_csv: Option<&PathBuf>,
    check: bool,
    out: &mut dyn Write,
) -> Result<i32, CliError> {
    let mut args = args.clone();
    if args.policy.is_empty() {
        args.policy = vec![
            "fcfs".into(),
            "specwands-spectre".into(),
            "specwands-all".into(),
        ];
    }
    let spec = experiment_from_args(&args, &["gen:inter"])?;
    if let Some(w) = spec.workloads.iter().find(|w| !w.is_channel()) {
        return Err(CliError::Usage(format!("`{w}` is not a channel workload")));
    }
    let cells = run_matrix(&spec, args.event_log.is_some())?;
    let mut ok = all_complete(&cells);
    let mut summary = String::new();
    for c in &cells {
        summary.push_str(&format!(
            "{} {} trial {}: error_rate {} separation {} identical {}\n",
            c.row.workload,
            c.row.policy,
            c.row.trial,
            c.row.error_rate.as_deref().unwrap_or("-"),
            c.row.separation.map_or("-".into(), |s| s.to_string()),
            c.row.identical.map_or("-".into(), |s| s.to_string()),
        ));
    }
    if let Some(base) = trial_csv {
        let multi = cells.len() > 1;
        for c in &cells {
            if let Some(tr) = &c.trial {
                let mut buf = Vec::new();
                attack::write_trial_csv(tr, &mut buf).map_err(CliError::Attack)?;
                write_file(&trial_csv_path(base, c, multi), &buf)?;
            }
        }
    }
    if check {
        for c in &cells {
            let Some(tr) = &c.trial else { continue };
            if !matches!(tr.policy, PolicyKind::SpecWands { .. }) {
                continue;
            }
            let ws: WorkloadSpec = c.row.workload.parse()?;
            let mut cfg = spec.base.clone();
            cfg.set_policy(tr.policy.clone());
            let flipped: Vec<bool> = tr.secret.iter().map(|b| !b).collect();
            let invariant = latencies(&ws, &cfg, &flipped)? == tr.per_bit_receiver_latency;
            let undecodable = c.row.error_rate.as_deref() == Some(&fixed(0.5));
            let pass = invariant && undecodable;
            ok &= pass;
            summary.push_str(&format!(
                "check {} {}: {}\n",
                c.row.workload,
                c.row.policy,
                if pass { "PASS" } else { "FAIL" }
            ));
        }
    }
    eprint!("{summary}");
    emit_outputs(&args, &cells, out)?;
    Ok(if ok { EXIT_OK } else { EXIT_CHECK_FAILED })
}

fn cmd_scenarios(args: &SimArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    let spec = experiment_from_args(args, &[])?;
    let cells = run_matrix(&spec, args.event_log.is_some())?;
    let mut text = String::new();
    for c in &cells {
        text.push_str(&format!(
            "{} {} trial {}\n",
            c.row.workload, c.row.policy, c.row.trial
        ));
        text.push_str(&render_scenarios(&c.metrics));
        text.push('\n');
    }
    out.write_all(text.as_bytes())
        .map_err(io_err(std::path::Path::new("<stdout>")))?;
    if let Some(p) = &args.csv {
        let mut buf = Vec::new();
        write_csv(&cells, &mut buf)?;
        write_file(p, &buf)?;
    }
    if let Some(p) = &args.event_log {
        write_file(p, event_log(&cells).as_bytes())?;
    }
    Ok(if all_complete(&cells) {
        EXIT_OK
    } else {
        EXIT_CHECK_FAILED
    })
}

pub fn parse_bounds(s: &str) -> Result<Bounds, CliError> {
    let bad = || CliError::Usage(format!("bounds must look like `i,j`, found `{s}`"));
    let (a, b) = s.split_once(',').ok_or_else(bad)?;
    Ok(Bounds::new(
        a.trim().parse().map_err(|_| bad())?,
        b.trim().parse().map_err(|_| bad())?,
    ))
}

/// Text report plus `property,result,witness` records.
pub fn verify_report(args: &VerifyArgs) -> Result<(bool, String, Vec<[String; 3]>), CliError> {
    let bounds = parse_bounds(&args.bounds)?;
    let model = match args.model.as_str() {
        "specwands" => PortModel::SpecWands,
        "fcfs" => PortModel::Fcfs,
        m => {
            return Err(CliError::Usage(format!(
                "model must be specwands|fcfs, found `{m}`"
            )))
        }
    };
    let receiver = match args.receiver.as_str() {
        "ns" => ReceiverOps::NonSpeculative,
        "spec" => ReceiverOps::Speculative,
        "either" => ReceiverOps::Either,
        r => {
            return Err(CliError::Usage(format!(
                "receiver must be ns|spec|either, found `{r}`"
            )))
        }
    };
    let cfg = ModelConfig {
        receiver,
        state_cap: args.state_cap,
        ..ModelConfig::new(model)
    };
    let inv = verify::check_invariants(&cfg, bounds)?;
    let sni = verify::check_sni(&cfg, bounds)?;
    let mut text = format!(
        "model {} bounds {bounds} receiver {}\nstates {} transitions {}\n",
        model.name(),
        args.receiver,
        inv.states,
        inv.transitions_checked
    );
    let mut records = Vec::new();
    for p in Property::ALL {
        let first = inv.violations.iter().find(|v| v.property == p);
        let result = if first.is_none() { "pass" } else { "fail" };
        text.push_str(&format!("{p:?} {result}  {}\n", p.describe()));
        let witness = first.map(|v| v.witness.clone()).unwrap_or_default();
        if !witness.is_empty() {
            text.push_str(&format!("    witness: {witness}\n"));
        }
        records.push([format!("{p:?}"), result.to_string(), witness]);
    }
    let result = if sni.holds { "pass" } else { "fail" };
    text.push_str(&format!(
        "SNI {result}  delay traces: secret=0 {}, secret=1 {}\n",
        sni.traces[0].len(),
        sni.traces[1].len()
    ));
    let witness = sni
        .witness
        .as_ref()
        .map(|(s, t)| format!("secret={} only: {}", *s as u8, verify::format_trace(t)))
        .unwrap_or_default();
    if !witness.is_empty() {
        text.push_str(&format!("    witness: {witness}\n"));
    }
    records.push(["SNI".into(), result.into(), witness]);
    let ok = inv.all_hold() && sni.holds;
    Ok((ok, text, records))
}

fn cmd_verify(args: &VerifyArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    let (ok, text, records) = verify_report(args)?;
    out.write_all(text.as_bytes())
        .map_err(io_err(std::path::Path::new("<stdout>")))?;
    if let Some(p) = &args.csv {
        let mut buf = Vec::new();
        {
            let mut w = csv::WriterBuilder::new()
                .terminator(csv::Terminator::Any(b'\n'))
                .from_writer(&mut buf);
            w.write_record(["property", "result", "witness"])?;
            for r in &records {
                w.write_record(r)?;
            }
            w.flush().map_err(csv::Error::from)?;
        }
        write_file(p, &buf)?;
    }
    Ok(if ok { EXIT_OK } else { EXIT_CHECK_FAILED })
}

/// Parses `args` (including the program name) and runs; returns the exit code.
pub fn main_with_args<I, T>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let res = match &cli.command {
        Command::Run(a) => cmd_run(a, out),
        Command::Attack {
            sim,
            trial_csv,
            check,
        } => cmd_attack(sim, trial_csv.as_ref(), *check, out),
        Command::Verify(a) => cmd_verify(a, out),
        Command::Scenarios(a) => cmd_scenarios(a, out),
    };
    match res {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

impl fmt::Display for Row {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {} cycles={}",
            self.workload, self.policy, self.cycles
        )
    }
}
