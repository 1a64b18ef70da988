use std::collections::BTreeMap;
use std::fmt;

use crate::policy::ScenarioClass;
use crate::workload::{Tid, THREADS};

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SimMetrics {
    pub cycles: u64,
    /// False when taken before both streams finished.
    pub complete: bool,
    pub dispatched: [u64; THREADS],
    pub committed: [u64; THREADS],
    pub squashed: [u64; THREADS],
    pub issued: [u64; THREADS],
    /// Operand-ready to first-issue latency: cycles -> count.
    pub issue_wait: BTreeMap<u64, u64>,
    pub port_labels: Vec<String>,
    /// Cycles each port was held, per thread.
    pub port_busy_cycles: Vec<[u64; THREADS]>,
    pub preempt_nop: u64,
    pub preempt_eop: u64,
    pub reexecution_cycles: u64,
    pub scenario_counts: BTreeMap<ScenarioClass, u64>,
    pub label_completion: BTreeMap<String, u64>,
    /// Cycle at which each barrier was passed, per thread.
    pub sync_cycles: [Vec<u64>; THREADS],
}

impl SimMetrics {
    pub fn port_busy_rate(&self, port: usize, tid: Tid) -> f64 {
        if self.cycles == 0 {
            return 0.0;
        }
        self.port_busy_cycles[port][tid as usize] as f64 / self.cycles as f64
    }

    pub fn port_busy_rate_total(&self, port: usize) -> f64 {
        self.port_busy_rate(port, 0) + self.port_busy_rate(port, 1)
    }

    /// First port whose label mentions `kind_name`.
    pub fn port_index(&self, kind_name: &str) -> Option<usize> {
        self.port_labels
            .iter()
            .position(|l| l.split('+').any(|k| k == kind_name))
    }

    pub fn classified_events(&self) -> u64 {
        self.scenario_counts.values().sum()
    }

    pub fn scenario(&self, class: ScenarioClass) -> u64 {
        self.scenario_counts.get(&class).copied().unwrap_or(0)
    }

    pub fn mean_issue_wait(&self) -> f64 {
        let n: u64 = self.issue_wait.values().sum();
        if n == 0 {
            return 0.0;
        }
        let total: u64 = self.issue_wait.iter().map(|(k, v)| k * v).sum();
        total as f64 / n as f64
    }

    pub fn max_issue_wait(&self) -> u64 {
        self.issue_wait.keys().next_back().copied().unwrap_or(0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EventKind {
    Dispatch,
    Sync,
    Issue,
    Preempt,
    Reinsert,
    Complete,
    Resolve,
    Squash,
    Exception,
    Commit,
}

impl EventKind {
    pub fn name(self) -> &'static str {
        match self {
            EventKind::Dispatch => "dispatch",
            EventKind::Sync => "sync",
            EventKind::Issue => "issue",
            EventKind::Preempt => "preempt",
            EventKind::Reinsert => "reinsert",
            EventKind::Complete => "complete",
            EventKind::Resolve => "resolve",
            EventKind::Squash => "squash",
            EventKind::Exception => "exception",
            EventKind::Commit => "commit",
        }
    }
}

/// One line of the per-cycle event log.
///
/// Format: `<cycle> T<tid> #<seq> <event>[ p<port>]`, e.g. `14 T1 #2 issue p4`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Event {
    pub cycle: u64,
    pub tid: Tid,
    pub seq: u32,
    pub kind: EventKind,
    pub port: Option<usize>,
}

impl fmt::Display for Event {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} T{} #{} {}",
            self.cycle,
            self.tid,
            self.seq,
            self.kind.name()
        )?;
        if let Some(p) = self.port {
            write!(f, " p{p}")?;
        }
        Ok(())
    }
}

pub fn render_log(events: &[Event]) -> String {
    let mut s = String::new();
    for e in events {
        s.push_str(&e.to_string());
        s.push('\n');
    }
    s
}
