//! Reorder-buffer entries and the speculation tags they carry.

use crate::workload::{OpKind, Tid};

/// Largest value representable in the 7-bit speculative degree tag.
pub const MAX_SPEC_DEGREE: u8 = 127;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EntryState {
    Dispatched,
    Issued,
    Executing,
    Completed,
    Committed,
    Squashed,
}

/// Resolution status of a branch entry as the SSC sees it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BranchStatus {
    Unresolved,
    /// Resolved and, if it was mispredicted, its wrong path is already gone.
    Resolved,
    /// Resolved as mispredicted but the squash has not been applied yet.
    MispredictPending,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RobEntry {
    pub seq: u32,
    pub tid: Tid,
    pub kind: OpKind,
    pub state: EntryState,
    pub spec_flag: bool,
    pub spec_degree: u8,
    pub branch: Option<BranchStatus>,
    pub faulting: bool,
}

impl RobEntry {
    /// A freshly dispatched entry, tagged pessimistically.
    pub fn dispatched(tid: Tid, seq: u32, kind: OpKind, degree: u32) -> Self {
        RobEntry {
            seq,
            tid,
            kind,
            state: EntryState::Dispatched,
            spec_flag: true,
            spec_degree: clamp_degree(degree),
            branch: (kind == OpKind::Branch).then_some(BranchStatus::Unresolved),
            faulting: false,
        }
    }

    /// Branches that still guard younger entries.
    pub fn guards_younger(&self) -> bool {
        matches!(
            self.branch,
            Some(BranchStatus::Unresolved | BranchStatus::MispredictPending)
        )
    }
}

pub fn clamp_degree(d: u32) -> u8 {
    d.min(MAX_SPEC_DEGREE as u32) as u8
}
