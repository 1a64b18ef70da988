use crate::workload::{OpKind, Tid};

/// An execution unit behind a port.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExecUnit {
    pub kind: OpKind,
    pub pipelined: bool,
    /// `(tid, seq, completes_at)`
    pub in_flight: Vec<(Tid, u32, u64)>,
}

impl ExecUnit {
    pub fn new(kind: OpKind) -> Self {
        ExecUnit {
            kind,
            pipelined: kind.class().pipelined,
            in_flight: Vec::new(),
        }
    }

    /// Drops `(tid, seq)` from the unit; the unit can take new operands next cycle.
    pub fn kill(&mut self, tid: Tid, seq: u32) -> bool {
        let before = self.in_flight.len();
        self.in_flight.retain(|&(t, s, _)| (t, s) != (tid, seq));
        before != self.in_flight.len()
    }

    pub fn completes_at(&self, tid: Tid, seq: u32) -> Option<u64> {
        self.in_flight
            .iter()
            .find(|&&(t, s, _)| (t, s) == (tid, seq))
            .map(|&(_, _, c)| c)
    }
}

/// The per-port control register, plus the bookkeeping the model needs.
///
/// The port is free at cycle `c` iff nothing occupies it and `c >= busy_until`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PortState {
    pub owner_tid: Tid,
    pub owner_spec_flag: bool,
    pub owner_spec_degree: u8,
    pub victim_slot: Option<(Tid, u32)>,
    pub busy_until: u64,
    /// `(tid, seq)` of the instruction holding the port.
    pub occupier: Option<(Tid, u32)>,
    /// Occupier runs on a pipelined unit and releases the port after one cycle.
    pub occupier_pipelined: bool,
}

impl PortState {
    pub fn new(owner: Tid) -> Self {
        PortState {
            owner_tid: owner,
            owner_spec_flag: false,
            owner_spec_degree: 0,
            victim_slot: None,
            busy_until: 0,
            occupier: None,
            occupier_pipelined: false,
        }
    }

    pub fn free_flag(&self, cycle: u64) -> bool {
        self.occupier.is_none() && cycle >= self.busy_until
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Port {
    pub id: usize,
    pub units: Vec<ExecUnit>,
    pub state: PortState,
}

impl Port {
    pub fn new(id: usize, kinds: &[OpKind], owner: Tid) -> Self {
        Port {
            id,
            units: kinds.iter().map(|&k| ExecUnit::new(k)).collect(),
            state: PortState::new(owner),
        }
    }

    pub fn serves(&self, kind: OpKind) -> bool {
        self.units.iter().any(|u| u.kind == kind)
    }

    pub fn unit_mut(&mut self, kind: OpKind) -> Option<&mut ExecUnit> {
        self.units.iter_mut().find(|u| u.kind == kind)
    }

    pub fn occupier_completes_at(&self) -> Option<u64> {
        let (t, s) = self.state.occupier?;
        self.units.iter().find_map(|u| u.completes_at(t, s))
    }
}
