//! Issue-decision logic.
//!
//! Every decision function here is pure: it looks at one ready candidate and
//! the control register of one port and answers Issue, Preempt or Skip. The
//! pipeline owns all mutation.

use std::fmt;

use crate::ssc::SpecMode;
use crate::workload::{OpKind, Tid};

/// Default TDM slice: the longest unpipelined latency (integer division).
pub const DEFAULT_TDM_SLICE: u64 = 12;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum PolicyKind {
    Fcfs,
    Tdm { slice_cycles: u64 },
    SpecCompress { delayed_classes: Vec<OpKind> },
    SpecWands { mode: SpecMode },
}

impl PolicyKind {
    pub fn tdm() -> Self {
        PolicyKind::Tdm {
            slice_cycles: DEFAULT_TDM_SLICE,
        }
    }

    pub fn spec_compress() -> Self {
        PolicyKind::SpecCompress {
            delayed_classes: vec![OpKind::IntDiv],
        }
    }

    /// Short name used in CSV output and on the command line.
    pub fn name(&self) -> &'static str {
        match self {
            PolicyKind::Fcfs => "fcfs",
            PolicyKind::Tdm { .. } => "tdm",
            PolicyKind::SpecCompress { .. } => "sc",
            PolicyKind::SpecWands {
                mode: SpecMode::Spectre,
            } => "specwands-spectre",
            PolicyKind::SpecWands {
                mode: SpecMode::All,
            } => "specwands-all",
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PolicyKind::Tdm { slice_cycles } => write!(f, "tdm({slice_cycles})"),
            PolicyKind::SpecCompress { delayed_classes } => {
                let names: Vec<&str> = delayed_classes.iter().map(|k| k.long_name()).collect();
                write!(f, "sc({})", names.join(","))
            }
            other => f.write_str(other.name()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ScheduleDecision {
    Issue,
    Preempt,
    Skip,
}

/// Contention scenario of one instruction's first issue attempt.
///
/// `NonSpecPair` covers two non-speculative competitors, which no S-class
/// describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ScenarioClass {
    NotIssued,
    NoContention,
    S1,
    S2,
    S3,
    S4,
    NonSpecPair,
}

impl ScenarioClass {
    pub const ALL: [ScenarioClass; 7] = [
        ScenarioClass::NotIssued,
        ScenarioClass::NoContention,
        ScenarioClass::S1,
        ScenarioClass::S2,
        ScenarioClass::S3,
        ScenarioClass::S4,
        ScenarioClass::NonSpecPair,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScenarioClass::NotIssued => "not_issued",
            ScenarioClass::NoContention => "no_contention",
            ScenarioClass::S1 => "s1",
            ScenarioClass::S2 => "s2",
            ScenarioClass::S3 => "s3",
            ScenarioClass::S4 => "s4",
            ScenarioClass::NonSpecPair => "nonspec_pair",
        }
    }
}

/// What the scheduler knows about a candidate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Candidate {
    pub tid: Tid,
    pub seq: u32,
    pub kind: OpKind,
    pub spec_flag: bool,
    pub spec_degree: u8,
    /// Operands available (no unresolved dependencies).
    pub ready: bool,
}

/// The port control register plus the occupier's identity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PortView {
    pub free: bool,
    pub owner_tid: Tid,
    pub owner_spec_flag: bool,
    pub owner_spec_degree: u8,
    /// `(tid, seq)` of the occupying instruction when busy.
    pub occupier: Option<(Tid, u32)>,
}

impl PortView {
    pub fn free(owner_tid: Tid) -> Self {
        PortView {
            free: true,
            owner_tid,
            owner_spec_flag: false,
            owner_spec_degree: 0,
            occupier: None,
        }
    }

    pub fn busy(tid: Tid, seq: u32, spec_flag: bool, spec_degree: u8) -> Self {
        PortView {
            free: false,
            owner_tid: tid,
            owner_spec_flag: spec_flag,
            owner_spec_degree: spec_degree,
            occupier: Some((tid, seq)),
        }
    }
}

/// Minimal RS view used for candidate selection.
pub trait ReadyEntry {
    fn tid(&self) -> Tid;
    fn seq(&self) -> u32;
    fn is_ready(&self, cycle: u64) -> bool;
}

/// Ready entries in issue-priority order: oldest first within a thread,
/// threads alternating starting from `cycle mod 2`. Returns indices into `rs`.
pub fn select_candidates<E: ReadyEntry>(rs: &[E], cycle: u64) -> Vec<usize> {
    let mut per_thread: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
    for (i, e) in rs.iter().enumerate() {
        if e.is_ready(cycle) {
            per_thread[e.tid() as usize].push(i);
        }
    }
    for list in &mut per_thread {
        list.sort_by_key(|&i| rs[i].seq());
    }
    let first = (cycle % 2) as usize;
    let (a, b) = (&per_thread[first], &per_thread[1 - first]);
    let mut out = Vec::with_capacity(a.len() + b.len());
    for k in 0..a.len().max(b.len()) {
        out.extend(a.get(k));
        out.extend(b.get(k));
    }
    out
}

/// EOP ordering between two same-thread instructions `(seq, degree)`.
pub fn eop_earlier(a: (u32, u8), b: (u32, u8), mode: SpecMode) -> bool {
    match mode {
        SpecMode::Spectre => a.1 < b.1,
        SpecMode::All => a.0 < b.0,
    }
}

/// Whether `tid` may issue at `cycle` under a TDM split of `slice` cycles.
pub fn tdm_gate(cycle: u64, tid: Tid, slice: u64) -> bool {
    debug_assert!(slice >= 1);
    (cycle / slice) % 2 == tid as u64
}

/// Decides what to do with `cand` on `port`.
pub fn decide(
    cand: &Candidate,
    port: &PortView,
    policy: &PolicyKind,
    cycle: u64,
) -> ScheduleDecision {
    use ScheduleDecision::*;
    let issue_if = |ok: bool| if ok { Issue } else { Skip };
    match policy {
        PolicyKind::Fcfs => issue_if(port.free),
        PolicyKind::Tdm { slice_cycles } => {
            issue_if(port.free && tdm_gate(cycle, cand.tid, *slice_cycles))
        }
        PolicyKind::SpecCompress { delayed_classes } => {
            issue_if(port.free && (!cand.spec_flag || !delayed_classes.contains(&cand.kind)))
        }
        PolicyKind::SpecWands { mode } => specwands(cand, port, *mode),
    }
}

fn specwands(cand: &Candidate, port: &PortView, mode: SpecMode) -> ScheduleDecision {
    use ScheduleDecision::*;
    let non_spec = !cand.spec_flag;
    if cand.tid == port.owner_tid {
        if port.free {
            return Issue;
        }
        // Same thread occupies the port: earlier speculative work wins, and a
        // non-speculative occupier is never displaced.
        let Some((occ_tid, occ_seq)) = port.occupier else {
            return Skip;
        };
        if occ_tid != cand.tid {
            return Skip;
        }
        let earlier = eop_earlier(
            (cand.seq, cand.spec_degree),
            (occ_seq, port.owner_spec_degree),
            mode,
        );
        if port.owner_spec_flag && earlier {
            Preempt
        } else {
            Skip
        }
    } else if port.free {
        // Ownership only moves on a non-speculative issue.
        if non_spec {
            Issue
        } else {
            Skip
        }
    } else if non_spec && port.owner_spec_flag && port.occupier.is_some() {
        Preempt
    } else {
        Skip
    }
}

/// The other party in a contention.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Competitor {
    pub tid: Tid,
    pub spec_flag: bool,
    /// Reached the port before the candidate did (an occupier always has).
    pub arrived_first: bool,
}

/// Classifies one issue attempt.
pub fn classify_contention(
    cand: &Candidate,
    port: &PortView,
    competitor: Option<&Competitor>,
) -> ScenarioClass {
    if !cand.ready {
        return ScenarioClass::NotIssued;
    }
    let Some(comp) = competitor else {
        return ScenarioClass::NoContention;
    };
    match (cand.spec_flag, comp.spec_flag) {
        (false, false) => ScenarioClass::NonSpecPair,
        (true, false) | (false, true) => ScenarioClass::S1,
        (true, true) if cand.tid == comp.tid => ScenarioClass::S4,
        (true, true) => {
            let first_tid = if comp.arrived_first {
                comp.tid
            } else {
                cand.tid
            };
            if first_tid == port.owner_tid {
                ScenarioClass::S2
            } else {
                ScenarioClass::S3
            }
        }
    }
}
