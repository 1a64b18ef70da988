//! Small two-thread workloads that each stage one port-contention pattern
//! between two instructions, X and Y.

use crate::workload::{BranchMeta, Instruction, OpKind, Tid, Workload};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Scenario {
    pub name: &'static str,
    pub summary: &'static str,
    pub workload: Workload,
    pub initial_owner: Tid,
    /// `(tid, seq)` of X and Y.
    pub x: (Tid, u32),
    pub y: (Tid, u32),
}

fn branch(resolve: u32) -> impl FnOnce(&mut Instruction) {
    move |i| i.branch = Some(BranchMeta::correct(resolve))
}

fn dep(d: u32) -> impl FnOnce(&mut Instruction) {
    move |i| i.deps = vec![d]
}

pub fn all() -> Vec<Scenario> {
    let mut out = Vec::new();

    let mut b = Workload::builder("nop-free-port");
    b.push_with(0, OpKind::Branch, branch(5));
    b.push(0, OpKind::IntDiv);
    b.push(1, OpKind::IntDiv);
    out.push(Scenario {
        name: "nop-free-port",
        summary: "speculative X (T0, owner) and non-speculative Y (T1) reach a free port together",
        workload: b.build(),
        initial_owner: 0,
        x: (0, 1),
        y: (1, 0),
    });

    let mut b = Workload::builder("nop-preempt");
    b.push_with(0, OpKind::Branch, branch(10));
    b.push(0, OpKind::IntDiv);
    b.push(1, OpKind::Load);
    b.push_with(1, OpKind::IntDiv, dep(0));
    out.push(Scenario {
        name: "nop-preempt",
        summary: "speculative X occupies the port when non-speculative Y becomes ready",
        workload: b.build(),
        initial_owner: 0,
        x: (0, 1),
        y: (1, 1),
    });

    let mut b = Workload::builder("lop-other-owner");
    b.push_with(0, OpKind::Branch, branch(10));
    b.push(0, OpKind::IntDiv);
    b.push(1, OpKind::Load);
    b.push_with(1, OpKind::IntDiv, dep(0));
    out.push(Scenario {
        name: "lop-other-owner",
        summary: "T1 owns the port; speculative X (T0) finds it free, Y (T1) arrives later",
        workload: b.build(),
        initial_owner: 1,
        x: (0, 1),
        y: (1, 1),
    });

    let mut b = Workload::builder("lop-sender-owns");
    b.push_with(0, OpKind::Branch, branch(10));
    b.push(0, OpKind::IntDiv);
    b.push_with(1, OpKind::Branch, branch(20));
    b.push(1, OpKind::IntDiv);
    out.push(Scenario {
        name: "lop-sender-owns",
        summary: "T0 owns the port; both X (T0) and Y (T1) are speculative",
        workload: b.build(),
        initial_owner: 0,
        x: (0, 1),
        y: (1, 1),
    });

    let mut b = Workload::builder("eop-idle");
    b.push_with(0, OpKind::Branch, branch(40));
    b.push(0, OpKind::IntDiv);
    b.push_with(0, OpKind::Branch, branch(40));
    b.push(0, OpKind::IntDiv);
    out.push(Scenario {
        name: "eop-idle",
        summary: "earlier X and later Y, both speculative in T0, ready together on an idle port",
        workload: b.build(),
        initial_owner: 0,
        x: (0, 1),
        y: (0, 3),
    });

    let mut b = Workload::builder("eop-preempt");
    b.push_with(0, OpKind::Branch, branch(40));
    b.push(0, OpKind::Load);
    b.push_with(0, OpKind::IntDiv, dep(1));
    b.push_with(0, OpKind::Branch, branch(40));
    b.push(0, OpKind::IntDiv);
    out.push(Scenario {
        name: "eop-preempt",
        summary: "later Y (T0) holds the port when earlier X (T0) becomes ready",
        workload: b.build(),
        initial_owner: 0,
        x: (0, 2),
        y: (0, 4),
    });
    out
}

pub fn find(name: &str) -> Option<Scenario> {
    all().into_iter().find(|s| s.name == name)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::workload::validate;

    #[test]
    fn scenarios_are_valid_and_named_uniquely() {
        let all = all();
        for s in &all {
            assert!(validate(&s.workload).is_empty(), "{}", s.name);
            assert_eq!(find(s.name).unwrap().name, s.name);
        }
        let mut names: Vec<_> = all.iter().map(|s| s.name).collect();
        names.dedup();
        assert_eq!(names.len(), 6);
        assert!(find("nope").is_none());
    }
}
