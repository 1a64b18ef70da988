#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use specwands::rob::{BranchStatus, RobEntry};
use specwands::workload::{BranchMeta, Instruction, OpKind, Tid, Workload};

/// Shape knobs for [`random_workload`].
#[derive(Debug, Clone, Copy)]
pub struct Shape {
    pub max_segment: usize,
    pub syncs: usize,
    pub branches: bool,
    pub mispredicts: bool,
    pub faults: bool,
    pub threads: usize,
}

impl Default for Shape {
    fn default() -> Self {
        Shape {
            max_segment: 12,
            syncs: 2,
            branches: true,
            mispredicts: true,
            faults: true,
            threads: 2,
        }
    }
}

/// A valid random workload plus, per thread, how many instructions lie
/// outside every mispredicted window (those are the ones that commit).
pub fn random_workload(rng: &mut ChaCha8Rng, shape: Shape) -> (Workload, [u64; 2]) {
    let mut b = Workload::builder("random");
    let mut right_path = [0u64; 2];
    let mut label = 0;
    for tid in 0..shape.threads as Tid {
        let mut wrong: Vec<bool> = Vec::new();
        for seg in 0..=shape.syncs {
            let n = rng.gen_range(0..=shape.max_segment) as u32;
            let seg_end = b.next_seq(tid) + n; // exclusive
                                               // ends of the enclosing mispredicted windows
            let mut ends: Vec<u32> = Vec::new();
            for _ in 0..n {
                let seq = b.next_seq(tid);
                ends.retain(|&e| seq <= e);
                let in_window = !ends.is_empty();
                let op = match rng.gen_range(0..10) {
                    0..=2 => OpKind::IntAlu,
                    3..=4 => OpKind::IntDiv,
                    5..=6 => OpKind::Load,
                    7..=8 if shape.branches => OpKind::Branch,
                    _ => OpKind::Nop,
                };
                let mut inst = Instruction::new(tid, seq, op);
                let lo = seq.saturating_sub(6);
                for d in lo..seq {
                    if !wrong[d as usize] && rng.gen_bool(0.2) {
                        inst.deps.push(d);
                    }
                }
                if op == OpKind::Branch {
                    let resolve = rng.gen_range(1..=25);
                    let room = ends.iter().min().map_or(seg_end - 1 - seq, |&e| e - seq);
                    inst.branch = Some(if shape.mispredicts && rng.gen_bool(0.3) {
                        let count = rng.gen_range(0..=room.min(4));
                        ends.push(seq + count);
                        BranchMeta::mispredict(resolve, count)
                    } else {
                        BranchMeta::correct(resolve)
                    });
                }
                if rng.gen_bool(0.1) {
                    inst.latency_override = Some(rng.gen_range(1..=15));
                }
                if shape.faults && rng.gen_bool(0.04) {
                    inst.faulting = true;
                }
                if rng.gen_bool(0.05) {
                    inst.label = Some(format!("l{label}"));
                    label += 1;
                }
                wrong.push(in_window);
                if !in_window {
                    right_path[tid as usize] += 1;
                }
                let i = inst;
                b.push_with(tid, op, move |x| *x = i);
            }
            if seg < shape.syncs {
                b.push(tid, OpKind::Sync);
                wrong.push(false);
                right_path[tid as usize] += 1;
            }
        }
    }
    let w = b.build();
    let bad = specwands::workload::validate(&w);
    assert!(
        bad.is_empty(),
        "{}\n{:?}",
        specwands::workload::emit_trace(&w),
        bad
    );
    (w, right_path)
}

/// A random ROB: up to `max_len` entries, at most `max_unresolved`
/// unresolved branches, occasional faults.
pub fn random_rob(rng: &mut ChaCha8Rng, max_len: usize, max_unresolved: usize) -> Vec<RobEntry> {
    let len = rng.gen_range(0..=max_len);
    let start = rng.gen_range(0..1000u32);
    let mut unresolved = 0;
    (0..len)
        .map(|i| {
            let kind = match rng.gen_range(0..4) {
                0 => OpKind::Branch,
                1 => OpKind::IntDiv,
                2 => OpKind::Load,
                _ => OpKind::IntAlu,
            };
            let mut e = RobEntry::dispatched(0, start + i as u32, kind, 0);
            if kind == OpKind::Branch {
                let open = unresolved < max_unresolved && rng.gen_bool(0.5);
                unresolved += open as usize;
                e.branch = Some(if open {
                    BranchStatus::Unresolved
                } else {
                    BranchStatus::Resolved
                });
            }
            e.faulting = rng.gen_bool(0.05);
            e.spec_degree = rng.gen_range(0..=8);
            e
        })
        .collect()
}
