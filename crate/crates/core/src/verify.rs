//! Bounded model of two threads contending for one port.
//!
//! Thread 0 (sender), per iteration:
//! ```text
//! L6:  if secret { LA0: acquire(spec op); LR0: release() }
//! ```
//! Thread 1 (receiver), per iteration:
//! ```text
//! L9:  pick the op's status (non-speculative or speculative)
//! LA1: ra1 = acquire(op)
//! LR1: rb1 = release()
//! OB:  record delay = !(ra1 && rb1)
//! ```
//! Acquire and release are atomic. Every interleaving of the two programs is
//! explored, which contains every schedule of the form
//! `(sender block)^i LA1 (sender block)^j LR1`.
//!
//! Two port models are provided. `SpecWands`: an acquire succeeds iff the
//! caller owns the port, or the op is non-speculative and the port is not
//! held by a non-speculative op; ownership moves only on such a
//! non-speculative acquire. `Fcfs`: an acquire succeeds iff the port is not
//! held, and the winner becomes owner.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::rc::Rc;

use thiserror::Error;

use crate::workload::Tid;

pub const DEFAULT_STATE_CAP: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PortModel {
    SpecWands,
    Fcfs,
}

impl PortModel {
    pub fn name(self) -> &'static str {
        match self {
            PortModel::SpecWands => "specwands",
            PortModel::Fcfs => "fcfs",
        }
    }
}

/// Speculation status of the receiver's ops.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ReceiverOps {
    NonSpeculative,
    Speculative,
    /// Chosen freely at every iteration.
    Either,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelConfig {
    pub model: PortModel,
    pub receiver: ReceiverOps,
    /// `None` explores both initial owners.
    pub initial_owner: Option<Tid>,
    /// Clearing the port status on release; turning it off is a seeded fault.
    pub release_clears_status: bool,
    pub state_cap: usize,
}

impl ModelConfig {
    pub fn new(model: PortModel) -> Self {
        ModelConfig {
            model,
            receiver: ReceiverOps::Either,
            initial_owner: None,
            release_clears_status: true,
            state_cap: DEFAULT_STATE_CAP,
        }
    }
}

/// `(sender iterations, receiver iterations)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Bounds {
    pub sender: u8,
    pub receiver: u8,
}

impl Bounds {
    pub fn new(sender: u8, receiver: u8) -> Self {
        Bounds { sender, receiver }
    }
}

impl fmt::Display for Bounds {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.sender, self.receiver)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Action {
    L6,
    LA0,
    LR0,
    L9 { non_spec: bool },
    LA1,
    LR1,
    Observe,
}

impl Action {
    pub fn tid(self) -> Tid {
        match self {
            Action::L6 | Action::LA0 | Action::LR0 => 0,
            _ => 1,
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Action::L9 { non_spec: true } => f.write_str("L9(ns)"),
            Action::L9 { non_spec: false } => f.write_str("L9(spec)"),
            other => write!(f, "{other:?}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ModelState {
    pub port_owner: Tid,
    /// Held by a non-speculative op (SpecWands) or held at all (Fcfs).
    pub port_status: bool,
    pub secret: bool,
    /// Sender: 0 at L6, 1 at LA0, 2 at LR0.
    pub pc0: u8,
    /// Receiver: 0 at L9, 1 at LA1, 2 at LR1, 3 at the observation.
    pub pc1: u8,
    pub iters_left0: u8,
    pub iters_left1: u8,
    pub ra0: bool,
    pub rb0: bool,
    pub ra1: bool,
    pub rb1: bool,
    pub receiver_non_spec: bool,
}

impl ModelState {
    pub fn initial(owner: Tid, secret: bool, bounds: Bounds) -> Self {
        ModelState {
            port_owner: owner,
            port_status: false,
            secret,
            pc0: 0,
            pc1: 0,
            iters_left0: bounds.sender,
            iters_left1: bounds.receiver,
            ra0: false,
            rb0: false,
            ra1: false,
            rb1: false,
            receiver_non_spec: false,
        }
    }

    pub fn is_final(&self) -> bool {
        self.iters_left0 == 0 && self.iters_left1 == 0
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum VerifyError {
    #[error("action {action} is not enabled")]
    Disabled { action: String },
    #[error("state space exceeds the cap of {cap} states ({visited} visited)")]
    StateCap { cap: usize, visited: usize },
}

pub fn initial_states(cfg: &ModelConfig, secret: bool, bounds: Bounds) -> Vec<ModelState> {
    let owners: Vec<Tid> = match cfg.initial_owner {
        Some(o) => vec![o],
        None => vec![0, 1],
    };
    owners
        .into_iter()
        .map(|o| ModelState::initial(o, secret, bounds))
        .collect()
}

pub fn enabled(cfg: &ModelConfig, s: &ModelState) -> Vec<Action> {
    let mut out = Vec::new();
    if s.iters_left0 > 0 {
        out.push(match s.pc0 {
            0 => Action::L6,
            1 => Action::LA0,
            _ => Action::LR0,
        });
    }
    if s.iters_left1 > 0 {
        match s.pc1 {
            0 => {
                if cfg.receiver != ReceiverOps::Speculative {
                    out.push(Action::L9 { non_spec: true });
                }
                if cfg.receiver != ReceiverOps::NonSpeculative {
                    out.push(Action::L9 { non_spec: false });
                }
            }
            1 => out.push(Action::LA1),
            2 => out.push(Action::LR1),
            _ => out.push(Action::Observe),
        }
    }
    out
}

/// Port update of one atomic acquire. Returns the result.
fn acquire(cfg: &ModelConfig, s: &mut ModelState, tid: Tid, non_spec: bool) -> bool {
    match cfg.model {
        PortModel::SpecWands => {
            let ok = s.port_owner == tid || (non_spec && !s.port_status);
            if ok {
                s.port_owner = tid;
                s.port_status = non_spec;
            }
            ok
        }
        PortModel::Fcfs => {
            let ok = !s.port_status;
            if ok {
                s.port_owner = tid;
                s.port_status = true;
            }
            ok
        }
    }
}

fn release(cfg: &ModelConfig, s: &mut ModelState, tid: Tid) -> bool {
    let ok = s.port_owner == tid;
    if cfg.release_clears_status {
        s.port_status = false;
    }
    ok
}

/// Applies `a`; the second value is the receiver observation, if any.
pub fn step(
    cfg: &ModelConfig,
    s: &ModelState,
    a: Action,
) -> Result<(ModelState, Option<bool>), VerifyError> {
    if !enabled(cfg, s).contains(&a) {
        return Err(VerifyError::Disabled {
            action: a.to_string(),
        });
    }
    let mut n = *s;
    let mut obs = None;
    let end0 = |n: &mut ModelState| {
        n.pc0 = 0;
        n.iters_left0 -= 1;
    };
    match a {
        Action::L6 => {
            if s.secret {
                n.pc0 = 1;
            } else {
                end0(&mut n);
            }
        }
        Action::LA0 => {
            n.ra0 = acquire(cfg, &mut n, 0, false);
            n.pc0 = 2;
        }
        Action::LR0 => {
            n.rb0 = release(cfg, &mut n, 0);
            end0(&mut n);
        }
        Action::L9 { non_spec } => {
            n.receiver_non_spec = non_spec;
            n.pc1 = 1;
        }
        Action::LA1 => {
            n.ra1 = acquire(cfg, &mut n, 1, s.receiver_non_spec);
            n.pc1 = 2;
        }
        Action::LR1 => {
            n.rb1 = release(cfg, &mut n, 1);
            n.pc1 = 3;
        }
        Action::Observe => {
            obs = Some(!(s.ra1 && s.rb1));
            n.pc1 = 0;
            n.iters_left1 -= 1;
        }
    }
    Ok((n, obs))
}

pub type DelayTrace = Vec<bool>;

struct Explorer<'a> {
    cfg: &'a ModelConfig,
    memo: HashMap<ModelState, Rc<BTreeSet<DelayTrace>>>,
}

impl Explorer<'_> {
    fn suffixes(&mut self, s: &ModelState) -> Result<Rc<BTreeSet<DelayTrace>>, VerifyError> {
        if let Some(r) = self.memo.get(s) {
            return Ok(r.clone());
        }
        if self.memo.len() >= self.cfg.state_cap {
            return Err(VerifyError::StateCap {
                cap: self.cfg.state_cap,
                visited: self.memo.len(),
            });
        }
        let mut out = BTreeSet::new();
        if s.is_final() {
            out.insert(Vec::new());
        }
        for a in enabled(self.cfg, s) {
            let (n, obs) = step(self.cfg, s, a)?;
            for tail in self.suffixes(&n)?.iter() {
                let mut t = Vec::with_capacity(tail.len() + 1);
                t.extend(obs);
                t.extend_from_slice(tail);
                out.insert(t);
            }
        }
        let r = Rc::new(out);
        self.memo.insert(*s, r.clone());
        Ok(r)
    }
}

/// All receiver delay traces over every interleaving.
pub fn enumerate(
    cfg: &ModelConfig,
    secret: bool,
    bounds: Bounds,
) -> Result<BTreeSet<DelayTrace>, VerifyError> {
    let mut ex = Explorer {
        cfg,
        memo: HashMap::new(),
    };
    let mut all = BTreeSet::new();
    for s in initial_states(cfg, secret, bounds) {
        all.extend(ex.suffixes(&s)?.iter().cloned());
    }
    Ok(all)
}

/// Number of distinct complete interleavings, via memoized counting.
pub fn count_paths(cfg: &ModelConfig, secret: bool, bounds: Bounds) -> Result<u128, VerifyError> {
    fn go(
        cfg: &ModelConfig,
        s: &ModelState,
        memo: &mut HashMap<ModelState, u128>,
    ) -> Result<u128, VerifyError> {
        if let Some(&c) = memo.get(s) {
            return Ok(c);
        }
        if memo.len() >= cfg.state_cap {
            return Err(VerifyError::StateCap {
                cap: cfg.state_cap,
                visited: memo.len(),
            });
        }
        let acts = enabled(cfg, s);
        let mut c = if acts.is_empty() { 1 } else { 0 };
        for a in acts {
            c += go(cfg, &step(cfg, s, a)?.0, memo)?;
        }
        memo.insert(*s, c);
        Ok(c)
    }
    let mut memo = HashMap::new();
    let mut total = 0;
    for s in initial_states(cfg, secret, bounds) {
        total += go(cfg, &s, &mut memo)?;
    }
    Ok(total)
}

/// Counts interleavings of the two action programs directly, without the
/// model: each thread is a fixed sequence of actions except the receiver's
/// status choice.
pub fn count_paths_naive(cfg: &ModelConfig, secret: bool, bounds: Bounds) -> u128 {
    let sender_len = bounds.sender as u32 * if secret { 3 } else { 1 };
    let receiver_len = bounds.receiver as u32 * 4;
    let choices: u128 = match cfg.receiver {
        ReceiverOps::Either => 2,
        _ => 1,
    };
    fn walk(a: u32, b: u32, b_pos: u32, choices: u128) -> u128 {
        if a == 0 && b == 0 {
            return 1;
        }
        let mut n = 0;
        if a > 0 {
            n += walk(a - 1, b, b_pos, choices);
        }
        if b > 0 {
            let branching = if b_pos.is_multiple_of(4) { choices } else { 1 };
            n += branching * walk(a, b - 1, b_pos + 1, choices);
        }
        n
    }
    let owners = if cfg.initial_owner.is_some() { 1 } else { 2 };
    owners * walk(sender_len, receiver_len, 0, choices)
}

/// `C(s + r, s) * choices^j * owners` with `s`, `r` the two program lengths.
pub fn closed_form_paths(cfg: &ModelConfig, secret: bool, bounds: Bounds) -> u128 {
    let s = bounds.sender as u128 * if secret { 3 } else { 1 };
    let r = bounds.receiver as u128 * 4;
    let mut binom: u128 = 1;
    for k in 0..s {
        binom = binom * (r + s - k) / (k + 1);
    }
    let choices: u128 = if cfg.receiver == ReceiverOps::Either {
        2
    } else {
        1
    };
    let owners = if cfg.initial_owner.is_some() { 1 } else { 2 };
    binom * choices.pow(bounds.receiver as u32) * owners
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Property {
    P1,
    P2,
    P3,
    P4,
    P5,
    P9,
}

impl Property {
    pub const ALL: [Property; 6] = [
        Property::P1,
        Property::P2,
        Property::P3,
        Property::P4,
        Property::P5,
        Property::P9,
    ];

    pub fn describe(self) -> &'static str {
        match self {
            Property::P1 => "owner unchanged iff (owner = tid or op speculative or port held)",
            Property::P2 => {
                "status unchanged when (owner != tid and (op speculative or port held))"
            }
            Property::P3 => {
                "acquire succeeds iff (owner = tid or (op non-speculative and port free))"
            }
            Property::P4 => "release succeeds iff owner = tid, and leaves the port free",
            Property::P5 => "receiver delay iff not (ra1 and rb1)",
            Property::P9 => "owner and receiver status reachable independently of the secret",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub property: Property,
    pub witness: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct InvariantReport {
    pub transitions_checked: usize,
    pub states: usize,
    pub violations: Vec<Violation>,
}

impl InvariantReport {
    pub fn holds(&self, p: Property) -> bool {
        !self.violations.iter().any(|v| v.property == p)
    }

    pub fn all_hold(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Receiver-visible projection used for P9: receiver progress, port owner, op status.
type Projection = (u8, u8, Tid, bool);

fn projection(s: &ModelState) -> Projection {
    (s.iters_left1, s.pc1, s.port_owner, s.receiver_non_spec)
}

fn check_transition(s: &ModelState, a: Action, n: &ModelState, obs: Option<bool>) -> Vec<Property> {
    let mut bad = Vec::new();
    let tid = a.tid();
    let owns = s.port_owner == tid;
    match a {
        Action::LA0 | Action::LA1 => {
            let ns = a == Action::LA1 && s.receiver_non_spec;
            let ra = if a == Action::LA0 { n.ra0 } else { n.ra1 };
            if (owns || !ns || s.port_status) != (n.port_owner == s.port_owner) {
                bad.push(Property::P1);
            }
            if !owns && (!ns || s.port_status) && n.port_status != s.port_status {
                bad.push(Property::P2);
            }
            if (owns || (ns && !s.port_status)) != ra {
                bad.push(Property::P3);
            }
        }
        Action::LR0 | Action::LR1 => {
            let rb = if a == Action::LR0 { n.rb0 } else { n.rb1 };
            if owns != rb || n.port_status {
                bad.push(Property::P4);
            }
        }
        Action::Observe if obs != Some(!(s.ra1 && s.rb1)) => bad.push(Property::P5),
        _ => {}
    }
    bad
}

/// Evaluates P1 to P5 on every reachable transition for both secrets, and P9
/// as equality of the receiver-visible projections reachable under each secret.
pub fn check_invariants(cfg: &ModelConfig, bounds: Bounds) -> Result<InvariantReport, VerifyError> {
    let mut report = InvariantReport::default();
    let mut projections: [BTreeSet<Projection>; 2] = [BTreeSet::new(), BTreeSet::new()];
    for secret in [false, true] {
        let mut seen: HashMap<ModelState, ()> = HashMap::new();
        let mut stack = initial_states(cfg, secret, bounds);
        for s in &stack {
            seen.insert(*s, ());
        }
        while let Some(s) = stack.pop() {
            projections[secret as usize].insert(projection(&s));
            for a in enabled(cfg, &s) {
                let (n, obs) = step(cfg, &s, a)?;
                report.transitions_checked += 1;
                for p in check_transition(&s, a, &n, obs) {
                    report.violations.push(Violation {
                        property: p,
                        witness: format!("secret={} {s:?} --{a}--> {n:?}", secret as u8),
                    });
                }
                if seen.insert(n, ()).is_none() {
                    if seen.len() > cfg.state_cap {
                        return Err(VerifyError::StateCap {
                            cap: cfg.state_cap,
                            visited: seen.len(),
                        });
                    }
                    stack.push(n);
                }
            }
        }
        report.states += seen.len();
    }
    for (secret, other) in [(0usize, 1usize), (1, 0)] {
        if let Some(p) = projections[secret].difference(&projections[other]).next() {
            report.violations.push(Violation {
                property: Property::P9,
                witness: format!(
                    "secret={secret} only: receiver iterations left {}, pc1 {}, owner {}, receiver non-spec {}",
                    p.0, p.1, p.2, p.3
                ),
            });
        }
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SniResult {
    pub holds: bool,
    /// A trace reachable under only one secret value.
    pub witness: Option<(bool, DelayTrace)>,
    pub traces: [BTreeSet<DelayTrace>; 2],
}

/// Speculative non-interference: the receiver's delay traces are the same
/// set for both secret values.
pub fn check_sni(cfg: &ModelConfig, bounds: Bounds) -> Result<SniResult, VerifyError> {
    let t0 = enumerate(cfg, false, bounds)?;
    let t1 = enumerate(cfg, true, bounds)?;
    let witness = t1
        .difference(&t0)
        .next()
        .map(|t| (true, t.clone()))
        .or_else(|| t0.difference(&t1).next().map(|t| (false, t.clone())));
    Ok(SniResult {
        holds: witness.is_none(),
        witness,
        traces: [t0, t1],
    })
}

pub fn format_trace(t: &[bool]) -> String {
    if t.is_empty() {
        return "-".into();
    }
    t.iter().map(|&d| if d { 'D' } else { '.' }).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sw() -> ModelConfig {
        ModelConfig::new(PortModel::SpecWands)
    }

    #[test]
    fn owner_receiver_acquires_free_port() {
        let cfg = sw();
        let mut s = ModelState::initial(1, false, Bounds::new(0, 1));
        s = step(&cfg, &s, Action::L9 { non_spec: false }).unwrap().0;
        s = step(&cfg, &s, Action::LA1).unwrap().0;
        assert!(s.ra1);
        s = step(&cfg, &s, Action::LR1).unwrap().0;
        assert_eq!(step(&cfg, &s, Action::Observe).unwrap().1, Some(false));
    }

    #[test]
    fn speculative_non_owner_is_refused() {
        let cfg = sw();
        let mut s = ModelState::initial(0, false, Bounds::new(0, 1));
        for a in [Action::L9 { non_spec: false }, Action::LA1, Action::LR1] {
            s = step(&cfg, &s, a).unwrap().0;
        }
        assert!(!s.ra1);
        assert_eq!(step(&cfg, &s, Action::Observe).unwrap().1, Some(true));
    }

    #[test]
    fn sender_pair_leaves_port_untouched() {
        let cfg = sw();
        let s = ModelState::initial(1, true, Bounds::new(1, 0));
        let mut n = s;
        for a in [Action::L6, Action::LA0, Action::LR0] {
            n = step(&cfg, &n, a).unwrap().0;
        }
        assert_eq!((n.port_owner, n.port_status), (s.port_owner, s.port_status));
        assert!(!n.ra0 && !n.rb0);
    }

    #[test]
    fn disabled_action_rejected() {
        let s = ModelState::initial(0, false, Bounds::new(1, 1));
        assert!(matches!(
            step(&sw(), &s, Action::LA1),
            Err(VerifyError::Disabled { .. })
        ));
        assert!(step(&sw(), &s, Action::LA0).is_err());
    }

    #[test]
    fn receiver_alone_is_never_delayed_when_non_speculative() {
        let cfg = ModelConfig {
            receiver: ReceiverOps::NonSpeculative,
            ..sw()
        };
        let t = enumerate(&cfg, false, Bounds::new(0, 1)).unwrap();
        assert_eq!(t, BTreeSet::from([vec![false]]));
    }

    #[test]
    fn specwands_sni_and_fcfs_leak() {
        assert!(check_sni(&sw(), Bounds::new(1, 1)).unwrap().holds);
        let r = check_sni(&ModelConfig::new(PortModel::Fcfs), Bounds::new(1, 1)).unwrap();
        assert!(!r.holds);
        assert!(r.witness.is_some());
    }

    #[test]
    fn degenerate_bounds_never_leak() {
        for model in [PortModel::SpecWands, PortModel::Fcfs] {
            for n in 0..3 {
                assert!(
                    check_sni(&ModelConfig::new(model), Bounds::new(0, n))
                        .unwrap()
                        .holds
                );
            }
        }
    }

    #[test]
    fn invariants_hold_for_specwands() {
        let r = check_invariants(&sw(), Bounds::new(2, 2)).unwrap();
        assert!(r.all_hold(), "{:?}", r.violations.first());
        assert!(r.transitions_checked > 0);
    }

    #[test]
    fn fcfs_breaks_p9() {
        let r = check_invariants(&ModelConfig::new(PortModel::Fcfs), Bounds::new(1, 1)).unwrap();
        assert!(!r.holds(Property::P9));
    }

    #[test]
    fn release_without_clear_breaks_p4() {
        let cfg = ModelConfig {
            release_clears_status: false,
            ..sw()
        };
        let r = check_invariants(&cfg, Bounds::new(1, 1)).unwrap();
        assert!(!r.holds(Property::P4));
    }

    #[test]
    fn path_counts_agree() {
        for receiver in [ReceiverOps::Either, ReceiverOps::NonSpeculative] {
            let cfg = ModelConfig { receiver, ..sw() };
            for i in 0..3 {
                for j in 0..3 {
                    for secret in [false, true] {
                        let b = Bounds::new(i, j);
                        let m = count_paths(&cfg, secret, b).unwrap();
                        assert_eq!(m, count_paths_naive(&cfg, secret, b));
                        assert_eq!(m, closed_form_paths(&cfg, secret, b));
                    }
                }
            }
        }
    }

    #[test]
    fn state_cap_is_reported() {
        let cfg = ModelConfig {
            state_cap: 10,
            ..sw()
        };
        assert!(matches!(
            enumerate(&cfg, true, Bounds::new(3, 3)),
            Err(VerifyError::StateCap { cap: 10, .. })
        ));
    }

    #[test]
    fn trace_rendering() {
        assert_eq!(format_trace(&[false, true]), ".D");
        assert_eq!(format_trace(&[]), "-");
    }
}
