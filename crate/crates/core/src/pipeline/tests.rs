use super::*;
use crate::policy::PolicyKind;
use crate::workload::{BranchMeta, Instruction};

const SW_SPECTRE: PolicyKind = PolicyKind::SpecWands {
    mode: SpecMode::Spectre,
};
const SW_ALL: PolicyKind = PolicyKind::SpecWands {
    mode: SpecMode::All,
};

fn cfg(policy: PolicyKind) -> PipelineConfig {
    let mut c = PipelineConfig::with_policy(policy);
    c.record_events = true;
    c
}

fn run(c: PipelineConfig, w: Workload) -> Simulator {
    let mut sim = Simulator::new(c, w).unwrap();
    sim.run().unwrap();
    sim
}

/// `(cycle, kind)` of the port-related events of one instruction.
fn trail(sim: &Simulator, tid: Tid, seq: u32) -> Vec<(u64, EventKind)> {
    sim.events()
        .iter()
        .filter(|e| (e.tid, e.seq) == (tid, seq))
        .filter(|e| {
            matches!(
                e.kind,
                EventKind::Issue | EventKind::Preempt | EventKind::Reinsert | EventKind::Complete
            )
        })
        .map(|e| (e.cycle, e.kind))
        .collect()
}

use EventKind::{Complete as C, Issue as I, Preempt as P, Reinsert as R};

fn br(resolve: u32) -> impl FnOnce(&mut Instruction) {
    move |i| i.branch = Some(BranchMeta::correct(resolve))
}

fn deps(d: Vec<u32>) -> impl FnOnce(&mut Instruction) {
    move |i| i.deps = d
}

#[test]
fn div_completes_after_twelve_cycles() {
    let mut b = Workload::builder("one-div");
    b.push(0, OpKind::IntDiv);
    let sim = run(cfg(PolicyKind::Fcfs), b.build());
    assert_eq!(trail(&sim, 0, 0), vec![(1, I), (13, C)]);
}

#[test]
fn dependent_alu_chain_timing() {
    let mut b = Workload::builder("chain");
    b.push(0, OpKind::IntAlu);
    b.push_with(0, OpKind::IntAlu, deps(vec![0]));
    b.push_with(0, OpKind::Load, deps(vec![1]));
    let sim = run(cfg(PolicyKind::Fcfs), b.build());
    assert_eq!(trail(&sim, 0, 0), vec![(1, I), (2, C)]);
    assert_eq!(trail(&sim, 0, 1), vec![(3, I), (4, C)]);
    assert_eq!(trail(&sim, 0, 2), vec![(5, I), (9, C)]);
}

#[test]
fn back_to_back_divs_serialize_on_unpipelined_port() {
    let mut b = Workload::builder("divs");
    b.push(0, OpKind::IntDiv);
    b.push(0, OpKind::IntDiv);
    let sim = run(cfg(PolicyKind::Fcfs), b.build());
    assert_eq!(trail(&sim, 0, 1), vec![(14, I), (26, C)]);
}

#[test]
fn rob_capacity_stalls_dispatch() {
    let mut b = Workload::builder("rob-full");
    b.push(0, OpKind::IntDiv);
    for _ in 0..5 {
        b.push(0, OpKind::IntAlu);
    }
    let mut c = cfg(PolicyKind::Fcfs);
    c.rob_capacity = 2;
    let mut sim = Simulator::new(c, b.build()).unwrap();
    while !sim.is_done() {
        sim.tick();
        assert!(sim.rob(0).len() <= 2);
        sim.check_invariants().unwrap();
    }
    // The head div blocks commit, so the second ALU op cannot dispatch before it retires.
    let d = sim
        .events()
        .iter()
        .find(|e| e.seq == 2 && e.kind == EventKind::Dispatch)
        .unwrap();
    assert!(d.cycle >= 13);
}

#[test]
fn sync_is_a_two_thread_barrier() {
    let mut b = Workload::builder("barrier");
    b.push(0, OpKind::IntDiv);
    b.push(0, OpKind::Sync);
    b.push(0, OpKind::IntAlu);
    b.push(1, OpKind::Sync);
    b.push(1, OpKind::IntAlu);
    let sim = run(cfg(PolicyKind::Fcfs), b.build());
    let m = sim.snapshot_metrics();
    assert_eq!(m.sync_cycles[0], m.sync_cycles[1]);
    // The div issues at 1, completes at 13, commits at 15 once the SSC cleared it.
    let s = m.sync_cycles[0][0];
    assert!(s >= 14, "barrier passed at {s}");
    let t1_alu = trail(&sim, 1, 1);
    assert!(t1_alu[0].0 > s);
}

#[test]
fn mispredict_squashes_exactly_its_window() {
    let mut b = Workload::builder("squash");
    b.push_with(0, OpKind::Branch, |i| {
        i.branch = Some(BranchMeta::mispredict(10, 2))
    });
    b.push(0, OpKind::IntAlu);
    b.push(0, OpKind::IntDiv);
    b.push(0, OpKind::IntAlu);
    let mut c = cfg(PolicyKind::Fcfs);
    c.record_events = true;
    let mut sim = Simulator::new(c, b.build()).unwrap();
    loop {
        let ev = sim.tick();
        if ev.iter().any(|e| e.kind == EventKind::Resolve) {
            let squashed: Vec<u32> = ev
                .iter()
                .filter(|e| e.kind == EventKind::Squash)
                .map(|e| e.seq)
                .collect();
            assert_eq!(squashed, vec![2, 1]);
            let live: Vec<u32> = sim.rob(0).iter().map(|e| e.seq).collect();
            assert_eq!(live, vec![0, 3]);
            break;
        }
    }
    let m = sim.run().unwrap();
    assert_eq!(m.squashed[0], 2);
    assert_eq!(m.committed[0], 2);
    // The fence kept seq 3 out of the ROB until the branch resolved.
    let d3 = sim
        .events()
        .iter()
        .find(|e| e.seq == 3 && e.kind == EventKind::Dispatch)
        .unwrap();
    assert!(d3.cycle >= 11);
}

#[test]
fn squash_kill_frees_port_next_cycle() {
    let mut b = Workload::builder("kill");
    b.push_with(0, OpKind::Branch, |i| {
        i.branch = Some(BranchMeta::mispredict(3, 1))
    });
    b.push(0, OpKind::IntDiv);
    b.push(0, OpKind::IntDiv);
    let sim = run(cfg(PolicyKind::Fcfs), b.build());
    // Wrong-path div issues at 1, killed at 4 when the branch resolves.
    assert_eq!(trail(&sim, 0, 1), vec![(1, I)]);
    let sq = sim
        .events()
        .iter()
        .find(|e| e.seq == 1 && e.kind == EventKind::Squash)
        .unwrap();
    assert_eq!(sq.cycle, 4);
    // seq 2 dispatches at the end of 4 and issues at 5 on the freed port.
    assert_eq!(trail(&sim, 0, 2), vec![(5, I), (17, C)]);
}

fn fig4a() -> Workload {
    let mut b = Workload::builder("nop-preempt");
    b.push_with(0, OpKind::Branch, br(30));
    b.push(0, OpKind::IntDiv);
    b.push_with(1, OpKind::Load, |_| {});
    b.push_with(1, OpKind::IntDiv, deps(vec![0]));
    b.build()
}

#[test]
fn nop_preempts_speculative_occupier() {
    for policy in [SW_SPECTRE, SW_ALL] {
        let sim = run(cfg(policy), fig4a());
        // Speculative T0 div takes the free port it owns.
        // The non-speculative T1 div preempts it as soon as its operand arrives.
        assert_eq!(trail(&sim, 1, 1), vec![(6, I), (18, C)]);
        // The victim re-enters the RS next cycle and only reissues once its
        // branch resolved (LOP: T1 now owns the port). Full latency again.
        assert_eq!(
            trail(&sim, 0, 1),
            vec![(1, I), (6, P), (7, R), (31, I), (43, C)]
        );
        let m = sim.snapshot_metrics();
        assert_eq!((m.preempt_nop, m.preempt_eop), (1, 0));
        assert_eq!(m.reexecution_cycles, 5);
    }
}

#[test]
fn fcfs_lets_speculative_occupier_delay_non_speculative() {
    let sim = run(cfg(PolicyKind::Fcfs), fig4a());
    assert_eq!(trail(&sim, 0, 1), vec![(1, I), (13, C)]);
    assert_eq!(trail(&sim, 1, 1), vec![(14, I), (26, C)]);
}

#[test]
fn non_speculative_occupier_is_never_preempted() {
    let mut b = Workload::builder("nop-no-preempt");
    b.push(0, OpKind::IntDiv);
    b.push_with(1, OpKind::Branch, br(5));
    b.push(1, OpKind::IntDiv);
    let sim = run(cfg(SW_SPECTRE), b.build());
    assert_eq!(trail(&sim, 0, 0), vec![(1, I), (13, C)]);
    // T1's div turns non-speculative at 6 but the occupier is non-speculative.
    assert_eq!(trail(&sim, 1, 1), vec![(14, I), (26, C)]);
    assert_eq!(sim.ports()[4].state.owner_tid, 1);
}

fn lop_workload() -> Workload {
    let mut b = Workload::builder("lop");
    b.push_with(0, OpKind::Branch, br(10));
    b.push(0, OpKind::IntDiv);
    b.build()
}

#[test]
fn lop_blocks_speculative_non_owner_on_free_port() {
    let mut c = cfg(SW_SPECTRE);
    c.initial_owner = 1;
    let sim = run(c, lop_workload());
    // The port is free the whole time, yet T0 waits for its branch.
    assert_eq!(trail(&sim, 0, 1), vec![(11, I), (23, C)]);
    assert_eq!(sim.ports()[4].state.owner_tid, 0);
}

#[test]
fn lop_owner_inherits_while_speculative() {
    let sim = run(cfg(SW_SPECTRE), lop_workload());
    assert_eq!(trail(&sim, 0, 1), vec![(1, I), (13, C)]);
}

#[test]
fn spec_compress_delays_until_resolution() {
    let sim = run(cfg(PolicyKind::spec_compress()), lop_workload());
    assert_eq!(trail(&sim, 0, 1), vec![(11, I), (23, C)]);
}

/// T0: brA, [load], div(deg 1), brB, div(deg 2) with the given readiness.
fn eop_workload(earlier_waits_on_load: bool) -> Workload {
    let mut b = Workload::builder("eop");
    b.push_with(0, OpKind::Branch, br(40));
    b.push(0, OpKind::Load);
    if earlier_waits_on_load {
        b.push_with(0, OpKind::IntDiv, deps(vec![1]));
        b.push_with(0, OpKind::Branch, br(40));
        b.push(0, OpKind::IntDiv);
    } else {
        b.push(0, OpKind::IntDiv);
        b.push_with(0, OpKind::Branch, br(40));
        b.push_with(0, OpKind::IntDiv, deps(vec![1]));
    }
    b.build()
}

#[test]
fn eop_earlier_speculative_op_preempts_later_one() {
    for policy in [SW_SPECTRE, SW_ALL] {
        let sim = run(cfg(policy), eop_workload(true));
        // Dispatch width 4: the later div enters the ROB one cycle after the rest.
        assert_eq!(
            trail(&sim, 0, 4),
            vec![(2, I), (6, P), (7, R), (19, I), (31, C)]
        );
        assert_eq!(trail(&sim, 0, 2), vec![(6, I), (18, C)]);
        let m = sim.snapshot_metrics();
        assert_eq!((m.preempt_nop, m.preempt_eop), (0, 1));
        assert_eq!(m.reexecution_cycles, 4);
    }
}

#[test]
fn eop_later_speculative_op_waits() {
    for policy in [SW_SPECTRE, SW_ALL] {
        let sim = run(cfg(policy), eop_workload(false));
        assert_eq!(trail(&sim, 0, 2), vec![(1, I), (13, C)]);
        assert_eq!(trail(&sim, 0, 4), vec![(14, I), (26, C)]);
        assert_eq!(sim.snapshot_metrics().preempt_eop, 0);
    }
}

#[test]
fn completion_beats_preemption_in_same_cycle() {
    // T1's non-speculative div becomes ready exactly when the speculative
    // occupier completes: no preemption, it issues one cycle later.
    let mut b = Workload::builder("tie");
    b.push_with(0, OpKind::Branch, br(30));
    b.push(0, OpKind::IntDiv);
    b.push_with(1, OpKind::IntDiv, |i| i.latency_override = Some(11));
    b.push_with(1, OpKind::IntDiv, deps(vec![0]));
    let mut c = cfg(SW_SPECTRE);
    c.ports.push(PortSpec::of(&[OpKind::IntDiv]));
    let sim = run(c, b.build());
    // Port 4 and 5 both serve divs: seq0 of T1 goes to port 5 at cycle 1.
    assert_eq!(trail(&sim, 1, 0), vec![(1, I), (12, C)]);
    assert_eq!(trail(&sim, 0, 1), vec![(1, I), (13, C)]);
    assert_eq!(sim.snapshot_metrics().preempt_nop, 0);
}

#[test]
fn exception_flushes_and_replays_younger() {
    let mut b = Workload::builder("fault");
    b.push_with(0, OpKind::Load, |i| i.faulting = true);
    b.push(0, OpKind::IntDiv);
    for policy in [SW_ALL, SW_SPECTRE, PolicyKind::Fcfs] {
        let sim = run(cfg(policy.clone()), b.clone().build());
        let m = sim.snapshot_metrics();
        assert_eq!(m.committed[0], 2, "{policy}");
        assert!(sim.events().iter().any(|e| e.kind == EventKind::Exception));
    }
    // Under SC in All mode the div behind the fault waits for the exception,
    // then is refetched and issues as non-speculative.
    let mut c = cfg(PolicyKind::spec_compress());
    c.mode = SpecMode::All;
    let sim = run(c, b.clone().build());
    assert_eq!(trail(&sim, 0, 1), vec![(7, I), (19, C)]);
    let sim = run(cfg(PolicyKind::spec_compress()), b.build());
    assert_eq!(trail(&sim, 0, 1), vec![(1, I), (7, I), (19, C)]);
}

#[test]
fn runs_are_deterministic() {
    let w = eop_workload(true);
    let a = run(cfg(SW_SPECTRE), w.clone());
    let b = run(cfg(SW_SPECTRE), w);
    assert_eq!(a, b);
    assert_eq!(render_log(a.events()), render_log(b.events()));
}

#[test]
fn cycle_limit_returns_partial_metrics() {
    let mut c = cfg(PolicyKind::Fcfs);
    c.max_cycles = 5;
    let mut sim = Simulator::new(c, eop_workload(true)).unwrap();
    match sim.run() {
        Err(SimError::CycleLimit { limit, partial }) => {
            assert_eq!(limit, 5);
            assert!(!partial.complete);
            assert_eq!(partial.cycles, 5);
        }
        other => panic!("expected cycle limit, got {other:?}"),
    }
}

#[test]
fn invalid_workload_rejected() {
    let mut b = Workload::builder("bad");
    b.push(0, OpKind::Sync);
    assert!(matches!(
        Simulator::new(PipelineConfig::default(), b.build()),
        Err(SimError::InvalidWorkload(_))
    ));
}

#[test]
fn event_line_format() {
    let e = Event {
        cycle: 14,
        tid: 1,
        seq: 2,
        kind: EventKind::Issue,
        port: Some(4),
    };
    assert_eq!(e.to_string(), "14 T1 #2 issue p4");
}
