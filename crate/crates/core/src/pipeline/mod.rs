//! Cycle-level model of a two-thread SMT issue/execute back end.
//!
//! One call to [`Simulator::tick`] advances one cycle, in this phase order:
//!
//! 1. commit (or take an exception at the ROB head)
//! 2. branch resolution, squashing the wrong path of mispredictions
//! 3. one SSC scan step per thread, then tag propagation to RS and ports
//! 4. wakeup: preemption victims re-enter the RS
//! 5. issue through the configured policy
//! 6. unit completion and dependent wakeup
//! 7. dispatch of new instructions (scanned from the next cycle on)
//!
//! Timing rules:
//! - an op issued at cycle `c` with latency `L` completes at `c + L`; its
//!   dependents can issue from `c + L + 1`;
//! - an unpipelined port stays held through the completion cycle, a
//!   pipelined port only for the issue cycle;
//! - a killed op frees its port from the next cycle;
//! - a branch resolves `resolve_latency` cycles after it issues.

mod config;
mod metrics;
mod port;

pub use config::{
    default_ports, parse_kinds, parse_mode, parse_policy, ConfigError, PipelineConfig, PortSpec,
};
pub use metrics::{render_log, Event, EventKind, SimMetrics};
pub use port::{ExecUnit, Port, PortState};

use thiserror::Error;

use crate::policy::{
    classify_contention, decide, select_candidates, Candidate, Competitor, PolicyKind, PortView,
    ReadyEntry, ScenarioClass, ScheduleDecision,
};
use crate::rob::{BranchStatus, EntryState, RobEntry};
use crate::ssc::{self, SpecMode, SscRegisters};
use crate::workload::{validate, BranchOutcome, OpKind, Tid, Workload, THREADS};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid workload: {0}")]
    InvalidWorkload(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("cycle limit of {limit} reached before both streams finished")]
    CycleLimit {
        limit: u64,
        partial: Box<SimMetrics>,
    },
}

/// Reservation-station entry.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RsEntry {
    pub tid: Tid,
    pub seq: u32,
    pub kind: OpKind,
    pub unresolved_deps: u32,
    /// First cycle at which the entry may issue.
    pub ready_at: Option<u64>,
    pub spec_flag: bool,
    pub spec_degree: u8,
}

impl ReadyEntry for RsEntry {
    fn tid(&self) -> Tid {
        self.tid
    }
    fn seq(&self) -> u32 {
        self.seq
    }
    fn is_ready(&self, cycle: u64) -> bool {
        self.unresolved_deps == 0 && self.ready_at.is_some_and(|r| r <= cycle)
    }
}

/// Per-instruction bookkeeping outside the architectural structures.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
struct Track {
    dispatched: bool,
    completed: bool,
    /// On a wrong path that was squashed before it could dispatch.
    skipped: bool,
    first_ready: Option<u64>,
    first_issue: Option<u64>,
    issue_cycle: Option<u64>,
    classified: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
struct ThreadCtx {
    next: usize,
    rob: Vec<RobEntry>,
    ssc: SscRegisters,
    /// `(branch seq, last seq of its squash window)` for unresolved mispredictions.
    fences: Vec<(u32, u32)>,
    syncs_passed: usize,
}

impl ThreadCtx {
    fn rob_index(&self, seq: u32) -> Option<usize> {
        self.rob.binary_search_by_key(&seq, |e| e.seq).ok()
    }

    fn entry(&self, seq: u32) -> Option<&RobEntry> {
        self.rob_index(seq).map(|i| &self.rob[i])
    }

    fn entry_mut(&mut self, seq: u32) -> Option<&mut RobEntry> {
        self.rob_index(seq).map(move |i| &mut self.rob[i])
    }

    fn dispatch_limit(&self) -> Option<u32> {
        self.fences.iter().map(|&(_, end)| end).min()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Simulator {
    cfg: PipelineConfig,
    mode: SpecMode,
    workload: Workload,
    consumers: [Vec<Vec<u32>>; THREADS],
    track: [Vec<Track>; THREADS],
    threads: [ThreadCtx; THREADS],
    rs: Vec<RsEntry>,
    ports: Vec<Port>,
    /// `(cycle, tid, seq)` of issued branches waiting to resolve.
    resolutions: Vec<(u64, Tid, u32)>,
    cycle: u64,
    metrics: SimMetrics,
    log: Vec<Event>,
    cur: Vec<Event>,
}

impl Simulator {
    pub fn new(cfg: PipelineConfig, workload: Workload) -> Result<Self, SimError> {
        cfg.check()?;
        let violations = validate(&workload);
        if let Some(v) = violations.first() {
            return Err(SimError::InvalidWorkload(v.to_string()));
        }
        let consumers = [0, 1].map(|t| {
            let stream = &workload.threads[t];
            let mut c = vec![Vec::new(); stream.len()];
            for inst in stream {
                for &d in &inst.deps {
                    c[d as usize].push(inst.seq);
                }
            }
            c
        });
        let track = [0, 1].map(|t| vec![Track::default(); workload.threads[t].len()]);
        let ports: Vec<Port> = cfg
            .ports
            .iter()
            .enumerate()
            .map(|(i, p)| Port::new(i, &p.kinds, cfg.initial_owner))
            .collect();
        let metrics = SimMetrics {
            port_labels: cfg.ports.iter().map(PortSpec::label).collect(),
            port_busy_cycles: vec![[0; THREADS]; ports.len()],
            sync_cycles: [Vec::new(), Vec::new()],
            ..SimMetrics::default()
        };
        Ok(Simulator {
            mode: cfg.ssc_mode(),
            cfg,
            workload,
            consumers,
            track,
            threads: Default::default(),
            rs: Vec::new(),
            ports,
            resolutions: Vec::new(),
            cycle: 0,
            metrics,
            log: Vec::new(),
            cur: Vec::new(),
        })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    pub fn workload(&self) -> &Workload {
        &self.workload
    }

    /// The cycle the next call to [`tick`](Self::tick) will simulate.
    pub fn cycle(&self) -> u64 {
        self.cycle
    }

    pub fn rob(&self, tid: Tid) -> &[RobEntry] {
        &self.threads[tid as usize].rob
    }

    pub fn rs(&self) -> &[RsEntry] {
        &self.rs
    }

    pub fn ports(&self) -> &[Port] {
        &self.ports
    }

    /// Index into the trace of the next instruction `tid` will dispatch.
    pub fn next_to_dispatch(&self, tid: Tid) -> usize {
        self.threads[tid as usize].next
    }

    /// Full event log; empty unless `record_events` is set.
    pub fn events(&self) -> &[Event] {
        &self.log
    }

    pub fn is_done(&self) -> bool {
        (0..THREADS).all(|t| {
            self.threads[t].next >= self.workload.threads[t].len() && self.threads[t].rob.is_empty()
        })
    }

    pub fn snapshot_metrics(&self) -> SimMetrics {
        let mut m = self.metrics.clone();
        m.cycles = self.cycle;
        m.complete = self.is_done();
        m
    }

    /// Runs until both streams have committed, or the cycle limit.
    pub fn run(&mut self) -> Result<SimMetrics, SimError> {
        while !self.is_done() {
            if self.cycle >= self.cfg.max_cycles {
                return Err(SimError::CycleLimit {
                    limit: self.cfg.max_cycles,
                    partial: Box::new(self.snapshot_metrics()),
                });
            }
            self.tick();
        }
        Ok(self.snapshot_metrics())
    }

    /// Advances one cycle and returns the events it produced.
    pub fn tick(&mut self) -> Vec<Event> {
        let t = self.cycle;
        self.cur.clear();
        self.commit(t);
        self.resolve(t);
        self.scan();
        self.wakeup(t);
        self.issue(t);
        self.complete(t);
        self.dispatch(t);
        self.cycle += 1;
        let events = std::mem::take(&mut self.cur);
        if self.cfg.record_events {
            self.log.extend(events.iter().cloned());
        }
        events
    }

    /// Structural invariants that must hold between ticks.
    pub fn check_invariants(&self) -> Result<(), String> {
        for (t, ctx) in self.threads.iter().enumerate() {
            for w in ctx.rob.windows(2) {
                if w[1].seq <= w[0].seq {
                    return Err(format!("T{t} ROB out of program order at seq {}", w[1].seq));
                }
            }
            if ctx.rob.len() > self.cfg.rob_capacity {
                return Err(format!("T{t} ROB over capacity"));
            }
            if let Some(e) = ctx
                .rob
                .iter()
                .find(|e| matches!(e.state, EntryState::Committed | EntryState::Squashed))
            {
                return Err(format!(
                    "T{t} seq {} is {:?} but still in the ROB",
                    e.seq, e.state
                ));
            }
            let m = &self.metrics;
            let live = ctx.rob.len() as u64;
            if m.dispatched[t] != m.committed[t] + m.squashed[t] + live {
                return Err(format!("T{t} dispatch/commit/squash counts do not balance"));
            }
        }
        for e in &self.rs {
            let entry = self.threads[e.tid as usize].entry(e.seq);
            if entry.map(|r| r.state) != Some(EntryState::Dispatched) {
                return Err(format!(
                    "RS entry T{} #{} has no dispatched ROB entry",
                    e.tid, e.seq
                ));
            }
        }
        for p in &self.ports {
            for u in &p.units {
                if !u.pipelined && u.in_flight.len() > 1 {
                    return Err(format!("unpipelined unit on p{} holds two ops", p.id));
                }
            }
        }
        Ok(())
    }

    fn emit(&mut self, t: u64, tid: Tid, seq: u32, kind: EventKind, port: Option<usize>) {
        self.cur.push(Event {
            cycle: t,
            tid,
            seq,
            kind,
            port,
        });
    }

    fn commit(&mut self, t: u64) {
        for tid in 0..THREADS as Tid {
            let ti = tid as usize;
            for _ in 0..self.cfg.issue_width {
                let Some(head) = self.threads[ti].rob.first() else {
                    break;
                };
                if head.state != EntryState::Completed || head.spec_flag {
                    break;
                }
                let seq = head.seq;
                if head.faulting {
                    self.take_exception(tid, seq, t);
                }
                let mut e = self.threads[ti].rob.remove(0);
                e.state = EntryState::Committed;
                self.metrics.committed[ti] += 1;
                self.emit(t, tid, seq, EventKind::Commit, None);
                if e.faulting {
                    break;
                }
            }
        }
    }

    /// The faulting head retires; everything younger is flushed and refetched.
    fn take_exception(&mut self, tid: Tid, seq: u32, t: u64) {
        self.emit(t, tid, seq, EventKind::Exception, None);
        self.squash_younger(tid, seq, t);
        let ti = tid as usize;
        // A mispredicted branch keeps its wrong path skipped.
        let window = match self.workload.threads[ti][seq as usize].branch {
            Some(b) if b.outcome == BranchOutcome::Mispredict => b.squash_count as usize,
            _ => 0,
        };
        let resume = seq as usize + 1 + window;
        for tr in self.track[ti].iter_mut().skip(resume) {
            *tr = Track::default();
        }
        // Only the faulting head is left, and it retires right after this.
        let ctx = &mut self.threads[ti];
        ctx.next = resume;
        ctx.ssc = SscRegisters::default();
    }

    fn resolve(&mut self, t: u64) {
        let mut due: Vec<(Tid, u32)> = self
            .resolutions
            .iter()
            .filter(|r| r.0 == t)
            .map(|r| (r.1, r.2))
            .collect();
        if due.is_empty() {
            return;
        }
        self.resolutions.retain(|r| r.0 != t);
        due.sort_unstable();
        for (tid, seq) in due {
            let ti = tid as usize;
            let Some(e) = self.threads[ti].entry_mut(seq) else {
                continue;
            };
            e.state = EntryState::Completed;
            e.branch = Some(BranchStatus::Resolved);
            self.track[ti][seq as usize].completed = true;
            self.emit(t, tid, seq, EventKind::Resolve, None);
            self.wake(tid, seq, t);
            let meta = self.workload.threads[ti][seq as usize]
                .branch
                .expect("branch metadata checked at construction");
            if meta.outcome == BranchOutcome::Mispredict {
                self.squash_younger(tid, seq, t);
                let end = seq as usize + meta.squash_count as usize;
                for s in seq as usize + 1..=end {
                    if !self.track[ti][s].dispatched {
                        self.track[ti][s].skipped = true;
                    }
                }
                let ctx = &mut self.threads[ti];
                ctx.next = ctx.next.max(end + 1);
                ssc::on_squash(&ctx.rob, &mut ctx.ssc, ctx.rob.last().map(|e| e.seq));
            }
        }
    }

    /// Removes every in-flight entry of `tid` younger than `after`.
    fn squash_younger(&mut self, tid: Tid, after: u32, t: u64) {
        let ti = tid as usize;
        self.threads[ti].fences.retain(|&(b, _)| b < after);
        while let Some(e) = self.threads[ti].rob.last() {
            if e.seq <= after {
                break;
            }
            let mut e = self.threads[ti].rob.pop().expect("non-empty");
            e.state = EntryState::Squashed;
            let seq = e.seq;
            self.rs.retain(|r| (r.tid, r.seq) != (tid, seq));
            self.resolutions.retain(|r| (r.1, r.2) != (tid, seq));
            for p in &mut self.ports {
                for u in &mut p.units {
                    u.kill(tid, seq);
                }
                if p.state.occupier == Some((tid, seq)) {
                    p.state.occupier = None;
                    p.state.busy_until = p.state.busy_until.max(t + 1);
                }
                if p.state.victim_slot == Some((tid, seq)) {
                    p.state.victim_slot = None;
                }
            }
            let tr = &mut self.track[ti][seq as usize];
            if e.kind.uses_port() && !tr.classified {
                tr.classified = true;
                *self
                    .metrics
                    .scenario_counts
                    .entry(ScenarioClass::NotIssued)
                    .or_default() += 1;
            }
            tr.skipped = true;
            self.metrics.squashed[ti] += 1;
            self.emit(t, tid, seq, EventKind::Squash, None);
        }
    }

    fn scan(&mut self) {
        let width = self.cfg.ssc_scan_width;
        for ctx in &mut self.threads {
            ssc::scan_step(&mut ctx.rob, &mut ctx.ssc, width, self.mode);
        }
        for r in &mut self.rs {
            if let Some(e) = self.threads[r.tid as usize].entry(r.seq) {
                r.spec_flag = e.spec_flag;
                r.spec_degree = e.spec_degree;
            }
        }
        for p in &mut self.ports {
            if let Some((tid, seq)) = p.state.occupier {
                if let Some(e) = self.threads[tid as usize].entry(seq) {
                    p.state.owner_spec_flag = e.spec_flag;
                    p.state.owner_spec_degree = e.spec_degree;
                }
            }
        }
    }

    fn wakeup(&mut self, t: u64) {
        for pi in 0..self.ports.len() {
            let Some((tid, seq)) = self.ports[pi].state.victim_slot.take() else {
                continue;
            };
            let Some(e) = self.threads[tid as usize].entry(seq) else {
                continue;
            };
            self.rs.push(RsEntry {
                tid,
                seq,
                kind: e.kind,
                unresolved_deps: 0,
                ready_at: Some(t),
                spec_flag: e.spec_flag,
                spec_degree: e.spec_degree,
            });
            self.emit(t, tid, seq, EventKind::Reinsert, Some(pi));
        }
    }

    fn port_view(&self, p: usize, t: u64) -> PortView {
        let s = &self.ports[p].state;
        PortView {
            free: s.free_flag(t),
            owner_tid: s.owner_tid,
            owner_spec_flag: s.owner_spec_flag,
            owner_spec_degree: s.owner_spec_degree,
            occupier: s.occupier,
        }
    }

    fn candidate(e: &RsEntry) -> Candidate {
        Candidate {
            tid: e.tid,
            seq: e.seq,
            kind: e.kind,
            spec_flag: e.spec_flag,
            spec_degree: e.spec_degree,
            ready: true,
        }
    }

    fn issue(&mut self, t: u64) {
        let mut order = select_candidates(&self.rs, t);
        if matches!(self.cfg.policy, PolicyKind::SpecWands { .. }) {
            // Non-speculative requests are arbitrated first.
            order.sort_by_key(|&ri| self.rs[ri].spec_flag);
        }
        let mut slots = self.cfg.issue_width;
        let mut taken: Vec<usize> = Vec::new();
        let mut preempted = vec![false; self.ports.len()];
        for (pos, &ri) in order.iter().enumerate() {
            if slots == 0 {
                break;
            }
            let cand = Self::candidate(&self.rs[ri]);
            let eligible: Vec<usize> = (0..self.ports.len())
                .filter(|&p| self.ports[p].serves(cand.kind))
                .collect();
            let mut choice: Option<(usize, ScheduleDecision)> = None;
            for &p in &eligible {
                let view = self.port_view(p, t);
                match decide(&cand, &view, &self.cfg.policy, t) {
                    ScheduleDecision::Issue => {
                        choice = Some((p, ScheduleDecision::Issue));
                        break;
                    }
                    ScheduleDecision::Preempt if choice.is_none() => {
                        let port = &self.ports[p];
                        // The occupier finishing this cycle wins the tie.
                        let finishing = port.occupier_completes_at() == Some(t);
                        if !preempted[p] && port.state.victim_slot.is_none() && !finishing {
                            choice = Some((p, ScheduleDecision::Preempt));
                        }
                    }
                    _ => {}
                }
            }
            let tr = &self.track[cand.tid as usize][cand.seq as usize];
            if !tr.classified {
                let p = choice.map(|c| c.0).unwrap_or(eligible[0]);
                let class = self.classify(&cand, p, &order, pos, t);
                self.track[cand.tid as usize][cand.seq as usize].classified = true;
                *self.metrics.scenario_counts.entry(class).or_default() += 1;
            }
            let Some((p, decision)) = choice else {
                continue;
            };
            if decision == ScheduleDecision::Preempt {
                preempted[p] = true;
                self.preempt(p, cand.tid, t);
            }
            self.start(p, ri, t);
            taken.push(ri);
            slots -= 1;
        }
        taken.sort_unstable_by(|a, b| b.cmp(a));
        for ri in taken {
            self.rs.remove(ri);
        }
        for p in &self.ports {
            if let Some((tid, _)) = p.state.occupier {
                self.metrics.port_busy_cycles[p.id][tid as usize] += 1;
            }
        }
    }

    fn classify(
        &self,
        cand: &Candidate,
        p: usize,
        order: &[usize],
        pos: usize,
        t: u64,
    ) -> ScenarioClass {
        let view = self.port_view(p, t);
        let competitor = if let (false, Some((tid, _))) = (view.free, view.occupier) {
            Some(Competitor {
                tid,
                spec_flag: view.owner_spec_flag,
                arrived_first: true,
            })
        } else {
            let same: Vec<usize> = order
                .iter()
                .enumerate()
                .filter(|&(_, &ri)| self.rs[ri].kind == cand.kind)
                .map(|(i, _)| i)
                .collect();
            let ports = self.ports.iter().filter(|x| x.serves(cand.kind)).count();
            if same.len() > ports {
                same.iter().find(|&&i| i != pos).map(|&i| {
                    let other = &self.rs[order[i]];
                    Competitor {
                        tid: other.tid,
                        spec_flag: other.spec_flag,
                        arrived_first: i < pos,
                    }
                })
            } else {
                None
            }
        };
        classify_contention(cand, &view, competitor.as_ref())
    }

    /// Kills the occupier of port `p` and parks it in the victim slot.
    fn preempt(&mut self, p: usize, by: Tid, t: u64) {
        let (vt, vs) = self.ports[p]
            .state
            .occupier
            .take()
            .expect("preempt needs an occupier");
        for u in &mut self.ports[p].units {
            u.kill(vt, vs);
        }
        self.resolutions.retain(|r| (r.1, r.2) != (vt, vs));
        self.ports[p].state.victim_slot = Some((vt, vs));
        let issued_at = self.track[vt as usize][vs as usize]
            .issue_cycle
            .unwrap_or(t);
        self.metrics.reexecution_cycles += t - issued_at;
        if vt == by {
            self.metrics.preempt_eop += 1;
        } else {
            self.metrics.preempt_nop += 1;
        }
        if let Some(e) = self.threads[vt as usize].entry_mut(vs) {
            e.state = EntryState::Dispatched;
        }
        self.emit(t, vt, vs, EventKind::Preempt, Some(p));
    }

    /// Starts RS entry `ri` on port `p`.
    fn start(&mut self, p: usize, ri: usize, t: u64) {
        let e = self.rs[ri].clone();
        let (ti, si) = (e.tid as usize, e.seq as usize);
        let inst = &self.workload.threads[ti][si];
        let latency = inst.latency() as u64;
        let branch = inst.branch;
        let tr = &mut self.track[ti][si];
        tr.issue_cycle = Some(t);
        if tr.first_issue.is_none() {
            tr.first_issue = Some(t);
            let ready = tr.first_ready.unwrap_or(t);
            *self.metrics.issue_wait.entry(t - ready).or_default() += 1;
        }
        self.metrics.issued[ti] += 1;
        if let Some(r) = self.threads[ti].entry_mut(e.seq) {
            r.state = EntryState::Executing;
        }
        let port = &mut self.ports[p];
        let unit = port
            .unit_mut(e.kind)
            .expect("eligible port serves the kind");
        let pipelined = unit.pipelined;
        match branch {
            Some(b) if e.kind == OpKind::Branch => {
                self.resolutions
                    .push((t + b.resolve_latency as u64, e.tid, e.seq));
            }
            _ => unit.in_flight.push((e.tid, e.seq, t + latency)),
        }
        let s = &mut port.state;
        s.occupier = Some((e.tid, e.seq));
        s.occupier_pipelined = pipelined;
        s.owner_tid = e.tid;
        s.owner_spec_flag = e.spec_flag;
        s.owner_spec_degree = e.spec_degree;
        self.emit(t, e.tid, e.seq, EventKind::Issue, Some(p));
    }

    fn complete(&mut self, t: u64) {
        let mut done: Vec<(usize, Tid, u32)> = Vec::new();
        for p in &mut self.ports {
            for u in &mut p.units {
                u.in_flight.retain(|&(tid, seq, at)| {
                    if at == t {
                        done.push((p.id, tid, seq));
                        false
                    } else {
                        true
                    }
                });
            }
            if p.state.occupier.is_some() && p.state.occupier_pipelined {
                p.state.occupier = None;
                p.state.busy_until = p.state.busy_until.max(t + 1);
            }
        }
        for (p, tid, seq) in done {
            let ti = tid as usize;
            if let Some(e) = self.threads[ti].entry_mut(seq) {
                e.state = EntryState::Completed;
            }
            self.track[ti][seq as usize].completed = true;
            let st = &mut self.ports[p].state;
            if st.occupier == Some((tid, seq)) {
                st.occupier = None;
                st.busy_until = st.busy_until.max(t + 1);
            }
            if let Some(l) = &self.workload.threads[ti][seq as usize].label {
                self.metrics.label_completion.insert(l.clone(), t);
            }
            self.emit(t, tid, seq, EventKind::Complete, Some(p));
            self.wake(tid, seq, t);
        }
    }

    fn wake(&mut self, tid: Tid, seq: u32, t: u64) {
        let ti = tid as usize;
        for &c in &self.consumers[ti][seq as usize] {
            let tr = &mut self.track[ti][c as usize];
            if !tr.dispatched || tr.completed {
                continue;
            }
            if let Some(r) = self.rs.iter_mut().find(|r| (r.tid, r.seq) == (tid, c)) {
                r.unresolved_deps = r.unresolved_deps.saturating_sub(1);
                if r.unresolved_deps == 0 {
                    r.ready_at = Some(t + 1);
                    tr.first_ready.get_or_insert(t + 1);
                }
            }
        }
    }

    fn next_op(&self, tid: usize) -> Option<OpKind> {
        self.workload.threads[tid]
            .get(self.threads[tid].next)
            .map(|i| i.op)
    }

    fn dispatch(&mut self, t: u64) {
        if self.next_op(0) == Some(OpKind::Sync)
            && self.next_op(1) == Some(OpKind::Sync)
            && self.threads.iter().all(|c| c.rob.is_empty())
            && self.threads[0].syncs_passed == self.threads[1].syncs_passed
        {
            for tid in 0..THREADS {
                let ctx = &mut self.threads[tid];
                let seq = ctx.next as u32;
                let mut e = RobEntry::dispatched(tid as Tid, seq, OpKind::Sync, 0);
                e.state = EntryState::Completed;
                ctx.rob.push(e);
                ctx.next += 1;
                ctx.syncs_passed += 1;
                let tr = &mut self.track[tid][seq as usize];
                tr.dispatched = true;
                tr.completed = true;
                self.metrics.dispatched[tid] += 1;
                self.metrics.sync_cycles[tid].push(t);
                self.emit(t, tid as Tid, seq, EventKind::Sync, None);
            }
            return;
        }
        let first = (t % 2) as usize;
        for tid in [first, 1 - first] {
            for _ in 0..self.cfg.issue_width {
                if !self.dispatch_one(tid, t) {
                    break;
                }
            }
        }
    }

    fn dispatch_one(&mut self, tid: usize, t: u64) -> bool {
        let ctx = &self.threads[tid];
        let Some(inst) = self.workload.threads[tid].get(ctx.next) else {
            return false;
        };
        let blocked = inst.op == OpKind::Sync
            || ctx.dispatch_limit().is_some_and(|lim| inst.seq > lim)
            || ctx.rob.len() >= self.cfg.rob_capacity
            || (inst.op.uses_port() && self.rs.len() >= self.cfg.rs_capacity);
        if blocked {
            return false;
        }
        let degree = ctx.rob.iter().filter(|e| e.guards_younger()).count() as u32;
        let mut entry = RobEntry::dispatched(tid as Tid, inst.seq, inst.op, degree);
        entry.faulting = inst.faulting;
        let seq = inst.seq;
        let tr = &mut self.track[tid][seq as usize];
        tr.dispatched = true;
        if inst.op == OpKind::Nop {
            entry.state = EntryState::Completed;
            tr.completed = true;
        }
        if inst.op.uses_port() {
            let pending = inst
                .deps
                .iter()
                .filter(|&&d| !self.track[tid][d as usize].completed)
                .count() as u32;
            let ready_at = (pending == 0).then_some(t + 1);
            if ready_at.is_some() {
                self.track[tid][seq as usize].first_ready = ready_at;
            }
            self.rs.push(RsEntry {
                tid: tid as Tid,
                seq,
                kind: inst.op,
                unresolved_deps: pending,
                ready_at,
                spec_flag: entry.spec_flag,
                spec_degree: entry.spec_degree,
            });
        }
        if let Some(b) = inst
            .branch
            .filter(|b| b.outcome == BranchOutcome::Mispredict)
        {
            self.threads[tid].fences.push((seq, seq + b.squash_count));
        }
        let ctx = &mut self.threads[tid];
        ctx.rob.push(entry);
        ctx.next += 1;
        self.metrics.dispatched[tid] += 1;
        self.emit(t, tid as Tid, seq, EventKind::Dispatch, None);
        true
    }
}

#[cfg(test)]
mod tests;
