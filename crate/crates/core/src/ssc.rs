//! Speculative Status Checker.
//!
//! Tags each ROB entry of one thread with `spec_flag` / `spec_degree` using a
//! bounded progressive scan: every call to [`scan_step`] looks at no more than
//! `width` entries, continuing where the previous call stopped, and wraps back
//! to the ROB head once it reaches the tail. Positions are sequence numbers,
//! which are dense and ordered inside one thread's ROB.
//!
//! Rules:
//! - Spectre mode: an entry is non-speculative iff no older entry is a branch
//!   that is unresolved (or resolved as mispredicted but not yet squashed).
//!   A branch does not guard itself.
//! - All mode: additionally, every entry younger than a `faulting` entry stays
//!   speculative until the exception is taken at the head. The faulting entry
//!   itself follows the branch rule.
//! - In both modes the degree of a speculative entry is the number of
//!   guarding branches older than it, saturated to 7 bits.

use crate::rob::{clamp_degree, RobEntry};

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, Default, serde::Serialize, serde::Deserialize,
)]
#[serde(rename_all = "lowercase")]
pub enum SpecMode {
    #[default]
    Spectre,
    All,
}

impl SpecMode {
    pub fn name(self) -> &'static str {
        match self {
            SpecMode::Spectre => "spectre",
            SpecMode::All => "all",
        }
    }
}

/// Progressive-scan state, one set per hardware thread.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SscRegisters {
    /// Last entry covered by the current sweep (`None`: sweep starts at head).
    pub last_pos: Option<u32>,
    /// Last non-speculative, fault-free entry seen by the current sweep.
    pub last_ns: Option<u32>,
    /// Guarding branches at positions `<= last_pos`.
    pub spec_degree_counter: u8,
}

/// Scans up to `width` entries of `rob` (oldest first) and updates their tags.
pub fn scan_step(rob: &mut [RobEntry], regs: &mut SscRegisters, width: usize, mode: SpecMode) {
    debug_assert!(width >= 1);
    if rob.is_empty() {
        return;
    }
    let mut start = match regs.last_pos {
        None => 0,
        Some(p) => rob.partition_point(|e| e.seq <= p),
    };
    if start >= rob.len() {
        *regs = SscRegisters::default();
        start = 0;
    }

    let mut counter = regs.spec_degree_counter as u32;
    // All mode: every entry covered so far is non-speculative and fault-free.
    let mut clean_prefix = regs.last_pos.is_none() || regs.last_ns == regs.last_pos;

    for e in rob[start..].iter_mut().take(width) {
        let ns = counter == 0
            && match mode {
                SpecMode::Spectre => true,
                SpecMode::All => clean_prefix,
            };
        e.spec_flag = !ns;
        e.spec_degree = if ns { 0 } else { clamp_degree(counter) };
        if ns && !(mode == SpecMode::All && e.faulting) {
            regs.last_ns = Some(e.seq);
        } else {
            clean_prefix = false;
        }
        if e.guards_younger() {
            counter += 1;
        }
        regs.last_pos = Some(e.seq);
    }
    regs.spec_degree_counter = counter.min(u8::MAX as u32) as u8;
}

/// Reference tagging computed directly from the whole ROB. Test oracle.
pub fn full_scan(rob: &[RobEntry], mode: SpecMode) -> Vec<(bool, u8)> {
    rob.iter()
        .enumerate()
        .map(|(i, _)| {
            let older = &rob[..i];
            let guards = older.iter().filter(|o| o.guards_younger()).count() as u32;
            let faulted = mode == SpecMode::All && older.iter().any(|o| o.faulting);
            let spec = guards > 0 || faulted;
            (spec, if spec { clamp_degree(guards) } else { 0 })
        })
        .collect()
}

/// Rebuilds the registers after a squash, from the tags of the youngest
/// surviving entry.
pub fn on_squash(rob: &[RobEntry], regs: &mut SscRegisters, youngest_unsquashed: Option<u32>) {
    let Some(entry) = youngest_unsquashed.and_then(|s| rob.iter().find(|e| e.seq == s)) else {
        *regs = SscRegisters::default();
        return;
    };
    let counter = entry.spec_degree as u32 + entry.guards_younger() as u32;
    regs.last_pos = Some(entry.seq);
    regs.spec_degree_counter = counter.min(u8::MAX as u32) as u8;
    regs.last_ns = if !entry.spec_flag && !entry.faulting {
        Some(entry.seq)
    } else {
        regs.last_ns.filter(|&ns| ns < entry.seq)
    };
}

/// Current tags of `rob`, for comparisons against [`full_scan`].
pub fn tags(rob: &[RobEntry]) -> Vec<(bool, u8)> {
    rob.iter().map(|e| (e.spec_flag, e.spec_degree)).collect()
}
