//! Instruction traces: the op classes the back end knows about, the
//! per-thread instruction streams, and the line-oriented trace format.
//!
//! # Trace grammar
//!
//! One instruction per line, `#` starts a comment, blank lines are ignored:
//!
//! ```text
//! line     := "T" tid ":" op field*
//! tid      := "0" | "1"
//! op       := "alu" | "div" | "load" | "br" | "sync" | "nop"
//! field    := "lat=" uint
//!           | "deps=" uint ("," uint)*
//!           | "resolve=" uint | "outcome=" ("ok" | "miss") | "squash=" uint
//!           | "label=" non-space-string
//!           | "fault"
//! ```
//!
//! The sequence number of an instruction is its position among the lines of
//! its thread. `resolve`, `outcome` and `squash` are only accepted on `br`;
//! a bare `br` gets `resolve=20 outcome=ok squash=0`. The special comment
//! `# workload: <name>` names the workload.

use std::fmt;

use thiserror::Error;

/// Hardware thread id. Only two contexts exist.
pub type Tid = u8;

/// Number of hardware thread contexts.
pub const THREADS: usize = 2;

/// Default cycles from branch issue to branch resolution.
pub const DEFAULT_RESOLVE_LATENCY: u32 = 20;

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize,
)]
#[serde(rename_all = "lowercase")]
pub enum OpKind {
    IntAlu,
    IntDiv,
    Load,
    Branch,
    Sync,
    Nop,
}

impl OpKind {
    pub const ALL: [OpKind; 6] = [
        OpKind::IntAlu,
        OpKind::IntDiv,
        OpKind::Load,
        OpKind::Branch,
        OpKind::Sync,
        OpKind::Nop,
    ];

    pub fn mnemonic(self) -> &'static str {
        match self {
            OpKind::IntAlu => "alu",
            OpKind::IntDiv => "div",
            OpKind::Load => "load",
            OpKind::Branch => "br",
            OpKind::Sync => "sync",
            OpKind::Nop => "nop",
        }
    }

    pub fn from_mnemonic(s: &str) -> Option<OpKind> {
        OpKind::ALL
            .into_iter()
            .find(|k| k.mnemonic() == s || k.long_name() == s)
    }

    /// Lower-case name used in config files (`intdiv`, `intalu`, ...).
    pub fn long_name(self) -> &'static str {
        match self {
            OpKind::IntAlu => "intalu",
            OpKind::IntDiv => "intdiv",
            OpKind::Load => "load",
            OpKind::Branch => "branch",
            OpKind::Sync => "sync",
            OpKind::Nop => "nop",
        }
    }

    pub fn class(self) -> OpClass {
        OpClass::of(self)
    }

    /// Whether the op needs an issue port at all.
    pub fn uses_port(self) -> bool {
        !matches!(self, OpKind::Sync | OpKind::Nop)
    }
}

impl fmt::Display for OpKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.mnemonic())
    }
}

/// Static timing properties of an op kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OpClass {
    pub kind: OpKind,
    pub default_latency: u32,
    pub pipelined: bool,
    /// `None` for ops that occupy no port (Sync, Nop).
    pub port_group: Option<u8>,
}

impl OpClass {
    pub const fn of(kind: OpKind) -> OpClass {
        let (default_latency, pipelined, port_group) = match kind {
            OpKind::IntAlu => (1, true, Some(0)),
            OpKind::Branch => (1, true, Some(1)),
            OpKind::Load => (4, true, Some(2)),
            OpKind::IntDiv => (12, false, Some(3)),
            OpKind::Sync => (1, true, None),
            OpKind::Nop => (1, true, None),
        };
        OpClass {
            kind,
            default_latency,
            pipelined,
            port_group,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BranchOutcome {
    CorrectPredict,
    Mispredict,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BranchMeta {
    pub resolve_latency: u32,
    pub outcome: BranchOutcome,
    /// Younger same-thread instructions on the wrong path.
    pub squash_count: u32,
}

impl Default for BranchMeta {
    fn default() -> Self {
        BranchMeta {
            resolve_latency: DEFAULT_RESOLVE_LATENCY,
            outcome: BranchOutcome::CorrectPredict,
            squash_count: 0,
        }
    }
}

impl BranchMeta {
    pub fn correct(resolve_latency: u32) -> Self {
        BranchMeta {
            resolve_latency,
            outcome: BranchOutcome::CorrectPredict,
            squash_count: 0,
        }
    }

    pub fn mispredict(resolve_latency: u32, squash_count: u32) -> Self {
        BranchMeta {
            resolve_latency,
            outcome: BranchOutcome::Mispredict,
            squash_count,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Instruction {
    pub seq: u32,
    pub tid: Tid,
    pub op: OpKind,
    pub latency_override: Option<u32>,
    pub deps: Vec<u32>,
    pub branch: Option<BranchMeta>,
    /// Raises an exception when it reaches the head (All-mode speculation source).
    pub faulting: bool,
    pub label: Option<String>,
}

impl Instruction {
    pub fn new(tid: Tid, seq: u32, op: OpKind) -> Self {
        Instruction {
            seq,
            tid,
            op,
            latency_override: None,
            deps: Vec::new(),
            branch: if op == OpKind::Branch {
                Some(BranchMeta::default())
            } else {
                None
            },
            faulting: false,
            label: None,
        }
    }

    pub fn latency(&self) -> u32 {
        self.latency_override
            .unwrap_or_else(|| self.op.class().default_latency)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Workload {
    pub name: String,
    pub threads: [Vec<Instruction>; THREADS],
}

impl Workload {
    pub fn new(name: impl Into<String>) -> Self {
        Workload {
            name: name.into(),
            threads: [Vec::new(), Vec::new()],
        }
    }

    pub fn len(&self) -> usize {
        self.threads.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn builder(name: impl Into<String>) -> WorkloadBuilder {
        WorkloadBuilder {
            workload: Workload::new(name),
        }
    }

    /// Finds the instruction carrying `label`.
    pub fn find_label(&self, label: &str) -> Option<&Instruction> {
        self.threads
            .iter()
            .flatten()
            .find(|i| i.label.as_deref() == Some(label))
    }
}

/// Appends instructions with dense per-thread sequence numbers.
#[derive(Debug, Clone)]
pub struct WorkloadBuilder {
    workload: Workload,
}

impl WorkloadBuilder {
    /// Appends an op and returns its sequence number.
    pub fn push(&mut self, tid: Tid, op: OpKind) -> u32 {
        self.push_with(tid, op, |_| {})
    }

    pub fn push_with(&mut self, tid: Tid, op: OpKind, f: impl FnOnce(&mut Instruction)) -> u32 {
        let stream = &mut self.workload.threads[tid as usize];
        let seq = stream.len() as u32;
        let mut inst = Instruction::new(tid, seq, op);
        f(&mut inst);
        inst.seq = seq;
        inst.tid = tid;
        stream.push(inst);
        seq
    }

    pub fn next_seq(&self, tid: Tid) -> u32 {
        self.workload.threads[tid as usize].len() as u32
    }

    pub fn build(self) -> Workload {
        self.workload
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Rule {
    WrongThread,
    NonDenseSeq,
    DanglingDependency(u32),
    MissingBranchMeta,
    UnexpectedBranchMeta,
    ZeroResolveLatency,
    SquashOnCorrectPredict,
    SquashPastEnd,
    SquashCoversSync,
    /// A mispredicted branch inside another squash window reaches past it.
    NestedSquashEscapes,
    ZeroLatency,
    UnmatchedSync,
    BadLabel,
}

/// One broken invariant, located by thread and (when applicable) seq.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub tid: Tid,
    pub seq: u32,
    pub rule: Rule,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let at = format!("T{} seq {}", self.tid, self.seq);
        match &self.rule {
            Rule::WrongThread => write!(f, "instruction filed under the wrong thread at {at}"),
            Rule::NonDenseSeq => write!(f, "non-dense sequence number at {at}"),
            Rule::DanglingDependency(d) => write!(f, "dangling dependency on seq {d} at {at}"),
            Rule::MissingBranchMeta => write!(f, "branch without branch metadata at {at}"),
            Rule::UnexpectedBranchMeta => write!(f, "branch metadata on non-branch at {at}"),
            Rule::ZeroResolveLatency => write!(f, "resolve latency must be >= 1 at {at}"),
            Rule::SquashOnCorrectPredict => {
                write!(f, "squash count on correctly predicted branch at {at}")
            }
            Rule::SquashPastEnd => write!(f, "squash window runs past end of stream at {at}"),
            Rule::SquashCoversSync => write!(f, "squash window covers a Sync at {at}"),
            Rule::NestedSquashEscapes => {
                write!(
                    f,
                    "nested squash window reaches past its enclosing window at {at}"
                )
            }
            Rule::ZeroLatency => write!(f, "latency override must be >= 1 at {at}"),
            Rule::UnmatchedSync => write!(f, "unmatched Sync at {at}"),
            Rule::BadLabel => write!(f, "label must be non-empty without whitespace at {at}"),
        }
    }
}

/// Lists every invariant violation; empty means the workload is well formed.
pub fn validate(w: &Workload) -> Vec<Violation> {
    let mut out = Vec::new();
    for (t, stream) in w.threads.iter().enumerate() {
        let tid = t as Tid;
        for (i, inst) in stream.iter().enumerate() {
            let v = |rule| Violation {
                tid,
                seq: inst.seq,
                rule,
            };
            if inst.tid != tid {
                out.push(v(Rule::WrongThread));
            }
            if inst.seq != i as u32 {
                out.push(v(Rule::NonDenseSeq));
            }
            for &d in &inst.deps {
                if d >= inst.seq {
                    out.push(v(Rule::DanglingDependency(d)));
                }
            }
            if inst.latency_override == Some(0) {
                out.push(v(Rule::ZeroLatency));
            }
            if let Some(l) = &inst.label {
                if l.is_empty() || l.chars().any(char::is_whitespace) {
                    out.push(v(Rule::BadLabel));
                }
            }
            match (inst.op, &inst.branch) {
                (OpKind::Branch, None) => out.push(v(Rule::MissingBranchMeta)),
                (OpKind::Branch, Some(b)) => {
                    if b.resolve_latency == 0 {
                        out.push(v(Rule::ZeroResolveLatency));
                    }
                    match b.outcome {
                        BranchOutcome::CorrectPredict if b.squash_count != 0 => {
                            out.push(v(Rule::SquashOnCorrectPredict));
                        }
                        BranchOutcome::Mispredict => {
                            let end = i + b.squash_count as usize;
                            if end >= stream.len() && b.squash_count > 0 {
                                out.push(v(Rule::SquashPastEnd));
                            }
                            let window =
                                &stream[(i + 1).min(stream.len())..(end + 1).min(stream.len())];
                            if window.iter().any(|x| x.op == OpKind::Sync) {
                                out.push(v(Rule::SquashCoversSync));
                            }
                            for inner in window {
                                if let Some(ib) = inner
                                    .branch
                                    .filter(|b| b.outcome == BranchOutcome::Mispredict)
                                {
                                    if inner.seq as usize + ib.squash_count as usize > end {
                                        out.push(Violation {
                                            tid,
                                            seq: inner.seq,
                                            rule: Rule::NestedSquashEscapes,
                                        });
                                    }
                                }
                            }
                        }
                        _ => {}
                    }
                }
                (_, Some(_)) => out.push(v(Rule::UnexpectedBranchMeta)),
                (_, None) => {}
            }
        }
    }
    // Pairwise barrier: the k-th Sync of one thread needs a k-th Sync in the other.
    let syncs: Vec<Vec<u32>> = w
        .threads
        .iter()
        .map(|s| {
            s.iter()
                .filter(|i| i.op == OpKind::Sync)
                .map(|i| i.seq)
                .collect()
        })
        .collect();
    for t in 0..THREADS {
        let other = &syncs[1 - t];
        for (k, &seq) in syncs[t].iter().enumerate() {
            if k >= other.len() {
                out.push(Violation {
                    tid: t as Tid,
                    seq,
                    rule: Rule::UnmatchedSync,
                });
            }
        }
    }
    out
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TraceError {
    #[error("line {line}: syntax error: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("line {line}: thread id {tid} outside {{0,1}}")]
    BadThread { line: usize, tid: String },
    #[error("line {line}: dangling dependency on seq {dep}")]
    DanglingDependency { line: usize, dep: u32 },
    #[error("line {line}: {violation}")]
    Invalid { line: usize, violation: String },
}

/// Parses and validates a trace file.
pub fn parse_trace(text: &str) -> Result<Workload, TraceError> {
    let mut w = Workload::new("trace");
    // (tid, seq) -> source line, for error reporting after validation
    let mut lines: [Vec<usize>; THREADS] = [Vec::new(), Vec::new()];

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw.trim();
        if let Some(comment) = trimmed.strip_prefix('#') {
            if let Some(name) = comment.trim().strip_prefix("workload:") {
                w.name = name.trim().to_string();
            }
            continue;
        }
        let body = match trimmed.find('#') {
            Some(p) => trimmed[..p].trim(),
            None => trimmed,
        };
        if body.is_empty() {
            continue;
        }
        let syntax = |msg: String| TraceError::Syntax { line, msg };

        let (head, rest) = body
            .split_once(':')
            .ok_or_else(|| syntax("expected `T<tid>:`".into()))?;
        let tid_str = head
            .trim()
            .strip_prefix('T')
            .ok_or_else(|| syntax(format!("expected `T<tid>`, found `{}`", head.trim())))?;
        let tid: Tid = match tid_str {
            "0" => 0,
            "1" => 1,
            other => {
                return Err(TraceError::BadThread {
                    line,
                    tid: other.to_string(),
                })
            }
        };

        let mut tokens = rest.split_whitespace();
        let op_tok = tokens.next().ok_or_else(|| syntax("missing op".into()))?;
        let op = OpKind::from_mnemonic(op_tok)
            .ok_or_else(|| syntax(format!("unknown op `{op_tok}`")))?;
        let seq = w.threads[tid as usize].len() as u32;
        let mut inst = Instruction::new(tid, seq, op);
        let mut meta = BranchMeta::default();
        let mut saw_branch_field = false;

        for tok in tokens {
            if tok == "fault" {
                inst.faulting = true;
                continue;
            }
            let (key, val) = tok
                .split_once('=')
                .ok_or_else(|| syntax(format!("expected key=value, found `{tok}`")))?;
            let num = |v: &str| {
                v.parse::<u32>()
                    .map_err(|_| syntax(format!("`{key}` needs an unsigned integer, found `{v}`")))
            };
            match key {
                "lat" => inst.latency_override = Some(num(val)?),
                "deps" => {
                    inst.deps = val.split(',').map(num).collect::<Result<_, _>>()?;
                }
                "resolve" => {
                    meta.resolve_latency = num(val)?;
                    saw_branch_field = true;
                }
                "outcome" => {
                    meta.outcome = match val {
                        "ok" => BranchOutcome::CorrectPredict,
                        "miss" => BranchOutcome::Mispredict,
                        _ => return Err(syntax(format!("outcome must be ok|miss, found `{val}`"))),
                    };
                    saw_branch_field = true;
                }
                "squash" => {
                    meta.squash_count = num(val)?;
                    saw_branch_field = true;
                }
                "label" => inst.label = Some(val.to_string()),
                _ => return Err(syntax(format!("unknown field `{key}`"))),
            }
        }
        if op == OpKind::Branch {
            inst.branch = Some(meta);
        } else if saw_branch_field {
            return Err(syntax(format!("branch fields on non-branch op `{op_tok}`")));
        }
        if let Some(&d) = inst.deps.iter().find(|&&d| d >= seq) {
            return Err(TraceError::DanglingDependency { line, dep: d });
        }
        w.threads[tid as usize].push(inst);
        lines[tid as usize].push(line);
    }

    if let Some(v) = validate(&w).into_iter().next() {
        let line = lines[v.tid as usize]
            .get(v.seq as usize)
            .copied()
            .unwrap_or(0);
        return Err(TraceError::Invalid {
            line,
            violation: v.to_string(),
        });
    }
    Ok(w)
}

/// Renders a workload in the trace format. `parse_trace(emit_trace(w)) == w`
/// for every valid workload.
pub fn emit_trace(w: &Workload) -> String {
    let mut out = format!("# workload: {}\n", w.name);
    for stream in &w.threads {
        for inst in stream {
            out.push_str(&format!("T{}: {}", inst.tid, inst.op.mnemonic()));
            if let Some(l) = inst.latency_override {
                out.push_str(&format!(" lat={l}"));
            }
            if !inst.deps.is_empty() {
                let deps: Vec<String> = inst.deps.iter().map(u32::to_string).collect();
                out.push_str(&format!(" deps={}", deps.join(",")));
            }
            if let Some(b) = &inst.branch {
                let outcome = match b.outcome {
                    BranchOutcome::CorrectPredict => "ok",
                    BranchOutcome::Mispredict => "miss",
                };
                out.push_str(&format!(
                    " resolve={} outcome={} squash={}",
                    b.resolve_latency, outcome, b.squash_count
                ));
            }
            if let Some(l) = &inst.label {
                out.push_str(&format!(" label={l}"));
            }
            if inst.faulting {
                out.push_str(" fault");
            }
            out.push('\n');
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_div_line() {
        let w = parse_trace("T0: div").unwrap();
        assert_eq!(w.threads[0].len(), 1);
        assert!(w.threads[1].is_empty());
        let div = &w.threads[0][0];
        assert_eq!(div.op, OpKind::IntDiv);
        assert_eq!(div.latency(), 12);
        assert!(div.deps.is_empty());
    }

    #[test]
    fn op_class_invariants() {
        assert!(!OpKind::IntDiv.class().pipelined);
        assert!(OpKind::IntAlu.class().pipelined);
        assert_eq!(OpKind::IntDiv.class().default_latency, 12);
        for k in OpKind::ALL {
            assert!(k.class().default_latency >= 1);
        }
        assert_eq!(OpKind::Sync.class().port_group, None);
        assert_eq!(OpKind::Nop.class().port_group, None);
    }

    #[test]
    fn future_dependency_is_dangling() {
        let err = parse_trace("T0: alu\nT0: alu deps=5\n").unwrap_err();
        assert_eq!(err, TraceError::DanglingDependency { line: 2, dep: 5 });
        assert!(err.to_string().contains("dangling dependency"));
    }

    #[test]
    fn thread_outside_range() {
        let err = parse_trace("T2: alu").unwrap_err();
        assert!(matches!(err, TraceError::BadThread { line: 1, .. }));
    }

    #[test]
    fn syntax_errors_carry_line_numbers() {
        let err = parse_trace("# c\nT0: alu\nT0: frobnicate\n").unwrap_err();
        assert!(matches!(err, TraceError::Syntax { line: 3, .. }), "{err}");
        let err = parse_trace("T0: alu lat=x").unwrap_err();
        assert!(matches!(err, TraceError::Syntax { line: 1, .. }));
        let err = parse_trace("T0: alu resolve=3").unwrap_err();
        assert!(matches!(err, TraceError::Syntax { line: 1, .. }));
    }

    #[test]
    fn unmatched_sync_rejected() {
        let err = parse_trace("T0: sync\nT1: alu\n").unwrap_err();
        assert!(
            err.to_string().contains("unmatched Sync at T0 seq 0"),
            "{err}"
        );
    }

    #[test]
    fn well_formed_two_threads_validate_clean() {
        let w = parse_trace(
            "T0: sync\nT1: sync\nT0: br resolve=5 outcome=miss squash=1\nT0: div\nT1: alu\nT1: div deps=1 label=rx0\n",
        )
        .unwrap();
        assert!(validate(&w).is_empty());
    }

    #[test]
    fn sync_only_in_thread_zero() {
        let mut b = Workload::builder("x");
        b.push(0, OpKind::IntAlu);
        b.push(0, OpKind::Sync);
        let v = validate(&b.build());
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].to_string(), "unmatched Sync at T0 seq 1");
    }

    #[test]
    fn branch_without_meta() {
        let mut b = Workload::builder("x");
        b.push(0, OpKind::IntAlu);
        b.push_with(0, OpKind::Branch, |i| i.branch = None);
        let v = validate(&b.build());
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].rule, Rule::MissingBranchMeta);
        assert_eq!(v[0].seq, 1);
    }

    #[test]
    fn squash_window_rules() {
        let err = parse_trace("T0: br outcome=miss squash=3\nT0: alu\n").unwrap_err();
        assert!(err.to_string().contains("past end"), "{err}");
        let err = parse_trace("T0: br outcome=miss squash=1\nT0: sync\nT1: sync\n").unwrap_err();
        assert!(err.to_string().contains("covers a Sync"), "{err}");
        let err = parse_trace("T0: br outcome=ok squash=1\nT0: alu\n").unwrap_err();
        assert!(err.to_string().contains("correctly predicted"), "{err}");
    }

    #[test]
    fn bare_branch_gets_defaults() {
        let w = parse_trace("T1: br").unwrap();
        assert_eq!(w.threads[1][0].branch, Some(BranchMeta::default()));
        assert_eq!(BranchMeta::default().resolve_latency, 20);
    }

    #[test]
    fn name_comment_and_round_trip() {
        let text = "# workload: demo\nT0: load lat=30 label=a\nT0: div deps=0 fault\nT1: br resolve=7 outcome=miss squash=1\nT1: nop\n";
        let w = parse_trace(text).unwrap();
        assert_eq!(w.name, "demo");
        assert_eq!(parse_trace(&emit_trace(&w)).unwrap(), w);
    }
}
