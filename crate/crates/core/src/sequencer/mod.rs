//! In-order issue with register-group hazard detection and the top-level
//! cycle loop.
//!
//! Scalar statements execute at issue in one cycle. A vector statement
//! snapshots its AVL and the CSRs at issue, waits until no in-flight
//! instruction conflicts with its register groups and a monitor slot is
//! free, then queues on its functional unit. It reads its sources when it
//! starts executing and writes its results when it commits; commits happen
//! in issue order. A stalled statement blocks everything behind it.

pub mod hazard;
pub mod semantics;
pub mod trace;

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exe::ExeError;
use crate::frontend::{AsmProgram, ScalarOp, Statement};
use crate::isa::{DecodedInstr, Mnemonic};
use crate::machine::{MachineError, MachineState};

pub use hazard::{check_hazard, partition_vl, HazardError, HazardTable, InstrMonitor, LaneSchedule, ValidityTable};
use hazard::{MonitorSlot, SlotState};
use semantics::{Effect, Plan, Snapshot, Unit};
pub use trace::{TraceEvent, TraceKind};

/// How vector statements are ordered against each other.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum ScheduleMode {
    /// Overlap whatever the hazard check allows.
    #[default]
    Pipelined,
    /// Every vector statement waits for all older ones to commit.
    Serial,
    /// Ignore register-group conflicts. Only useful to show that hazard
    /// detection matters; results are not architecturally correct.
    Unchecked,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimOptions {
    pub mode: ScheduleMode,
    pub trace: bool,
    /// Upper bound on executed statements.
    pub max_steps: u64,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self { mode: ScheduleMode::Pipelined, trace: false, max_steps: 100_000_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RunError {
    #[error("pc {pc}: {source}")]
    Fault { pc: usize, source: ExeError },
    #[error("pc {pc}: illegal instruction {word:#018x}")]
    IllegalInstruction { pc: usize, word: u64 },
    #[error("step limit of {0} statements reached")]
    StepLimit(u64),
}

/// Outcome of one program run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunReport {
    pub cycles: u64,
    pub statements: u64,
    pub vector_instructions: u64,
    pub scalar_instructions: u64,
    pub stall_cycles: u64,
    /// Dynamic count per mnemonic.
    pub mnemonic_counts: BTreeMap<String, u64>,
    pub div_fault: bool,
    pub digest: String,
}

struct InFlight {
    seq: u64,
    pc: usize,
    instr: DecodedInstr,
    snap: Snapshot,
    plan: Plan,
    effects: Vec<Effect>,
    start: u64,
    commit: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum EventKind {
    Commit,
    Start,
}

/// The control path: monitor, validity and hazard tables, unit timelines.
pub struct Sequencer {
    pub opts: SimOptions,
    pub monitor: InstrMonitor,
    pub validity: ValidityTable,
    pub hazards: HazardTable,
    pub trace: Vec<TraceEvent>,
    events: BTreeMap<(u64, EventKind, u64), u64>,
    inflight: HashMap<u64, InFlight>,
    /// `(free at, owning id)` for lanes, memory and EXE.
    units: [(u64, u64); 3],
    last_commit: u64,
    now: u64,
    seq: u64,
    stall_cycles: u64,
}

fn unit_slots(u: Unit) -> &'static [usize] {
    match u {
        Unit::Lanes => &[0],
        Unit::Mem => &[1],
        Unit::Exe => &[2],
        Unit::LanesExe => &[0, 2],
    }
}

impl Sequencer {
    pub fn new(st: &MachineState, opts: SimOptions) -> Self {
        let cfg = &st.cfg;
        Self {
            opts,
            monitor: InstrMonitor::new(cfg.n_id),
            validity: ValidityTable::new(semantics::n_resources(cfg)),
            hazards: HazardTable::new(cfg.n_id),
            trace: Vec::new(),
            events: BTreeMap::new(),
            inflight: HashMap::new(),
            units: [(0, 0); 3],
            last_commit: 0,
            now: 0,
            seq: 0,
            stall_cycles: 0,
        }
    }

    fn emit(&mut self, cycle: u64, unit: &'static str, id: u64, mnemonic: &str, kind: TraceKind) {
        if self.opts.trace {
            self.trace.push(TraceEvent { cycle, unit, instr_id: id, mnemonic: mnemonic.to_string(), event: kind });
        }
    }

    /// Handles every pending event at or before `t`.
    fn advance(&mut self, t: u64, st: &mut MachineState) -> Result<(), RunError> {
        while let Some((&(time, kind, _), &id)) = self.events.first_key_value() {
            if time > t {
                break;
            }
            self.events.pop_first();
            match kind {
                EventKind::Start => self.start(id, st)?,
                EventKind::Commit => self.commit(id, st)?,
            }
        }
        Ok(())
    }

    fn start(&mut self, id: u64, st: &MachineState) -> Result<(), RunError> {
        let f = self.inflight.get_mut(&id).expect("in flight");
        f.effects = semantics::compute(&f.instr, &f.plan, &f.snap, st).map_err(|source| RunError::Fault { pc: f.pc, source })?;
        if let Some(slot) = self.monitor.get_mut(id) {
            slot.state = SlotState::Executing;
        }
        if self.opts.trace {
            let (seq, name, unit, start, end) = (f.seq, f.instr.mnemonic.name(), f.plan.unit.name(), f.start, f.start + f.plan.cycles);
            for c in start..end {
                self.emit(c, unit, seq, name, TraceKind::Uop);
            }
        }
        Ok(())
    }

    fn commit(&mut self, id: u64, st: &mut MachineState) -> Result<(), RunError> {
        let f = self.inflight.remove(&id).expect("in flight");
        let pc = f.pc;
        semantics::apply(f.effects, st).map_err(|e| RunError::Fault { pc, source: e.into() })?;
        self.validity.clear(id, &f.plan.reads, &f.plan.writes);
        self.hazards.retire(id);
        if let Some(slot) = self.monitor.get_mut(id) {
            slot.state = SlotState::Committed;
        }
        self.monitor.release(id);
        self.emit(f.commit, f.plan.unit.name(), f.seq, f.instr.mnemonic.name(), TraceKind::Commit);
        Ok(())
    }

    fn active_ids(&self) -> u64 {
        self.inflight.keys().fold(0, |a, &id| a | id)
    }

    fn earliest_commit(&self, ids: u64) -> u64 {
        self.inflight.iter().filter(|(&id, _)| id & ids != 0).map(|(_, f)| f.commit).min().expect("waiting on in-flight ids")
    }

    /// Waits until no in-flight instruction touches the resource range.
    fn drain_resource(&mut self, r: u32, st: &mut MachineState) -> Result<(), RunError> {
        let busy = self.validity.check(&[], &[(r, r)]);
        if busy != 0 {
            let t = self.inflight.iter().filter(|(&id, _)| id & busy != 0).map(|(_, f)| f.commit).max().unwrap();
            if t > self.now {
                self.stall_cycles += t - self.now;
                self.now = t;
            }
            self.advance(self.now, st)?;
        }
        Ok(())
    }

    fn issue_vector(&mut self, pc: usize, instr: DecodedInstr, st: &mut MachineState) -> Result<(), RunError> {
        let name = instr.mnemonic.name();
        if instr.mnemonic == Mnemonic::VsetCsr {
            semantics::write_csr(&instr, st).map_err(|e| RunError::Fault { pc, source: e.into() })?;
            self.emit(self.now, "CSR", self.seq, name, TraceKind::Issue);
            self.seq += 1;
            self.now += 1;
            return Ok(());
        }
        let snap = Snapshot::take(&instr, st);
        let plan = semantics::plan(&instr, &snap, &st.cfg).map_err(|e| RunError::Fault { pc, source: e.into() })?;
        let Some(plan) = plan else {
            // zero-length instruction
            self.emit(self.now, "LANES", self.seq, name, TraceKind::Issue);
            self.seq += 1;
            self.now += 1;
            return Ok(());
        };
        let mut t = self.now;
        let mut stalled = false;
        loop {
            self.advance(t, st)?;
            let conflicts = match self.opts.mode {
                ScheduleMode::Pipelined => self.validity.check(&plan.reads, &plan.writes),
                ScheduleMode::Serial => self.active_ids(),
                ScheduleMode::Unchecked => 0,
            };
            let waiting = if conflicts != 0 {
                conflicts
            } else if self.monitor.is_full() {
                self.active_ids()
            } else {
                break;
            };
            if !stalled {
                self.emit(t, plan.unit.name(), self.seq, name, TraceKind::Stall);
                stalled = true;
            }
            let next = self.earliest_commit(waiting);
            self.stall_cycles += next - t;
            t = next;
        }
        let seq = self.seq;
        self.seq += 1;
        let slot = MonitorSlot { seq, pc, reads: plan.reads.clone(), writes: plan.writes.clone(), state: SlotState::Issued };
        let id = self.monitor.allocate(slot).expect("slot checked free");
        self.validity.mark(id, &plan.reads, &plan.writes);
        self.emit(t, plan.unit.name(), seq, name, TraceKind::Issue);

        let mut start = t + 1;
        let mut deps = 0;
        for &u in unit_slots(plan.unit) {
            let (free, owner) = self.units[u];
            if self.inflight.contains_key(&owner) {
                deps |= owner;
            }
            start = start.max(free);
        }
        let end = start + plan.cycles;
        for &u in unit_slots(plan.unit) {
            self.units[u] = (end, id);
        }
        self.hazards.set_row(id, deps & !id);
        let commit = end.max(self.last_commit);
        self.last_commit = commit;
        self.events.insert((start, EventKind::Start, seq), id);
        self.events.insert((commit, EventKind::Commit, seq), id);
        self.inflight.insert(id, InFlight { seq, pc, instr, snap, plan, effects: Vec::new(), start, commit });
        self.now = t + 1;
        Ok(())
    }

    /// Runs the program to completion from statement 0.
    pub fn run(&mut self, prog: &AsmProgram, st: &mut MachineState) -> Result<RunReport, RunError> {
        let mut pc = 0usize;
        let mut counts: BTreeMap<String, u64> = BTreeMap::new();
        let (mut steps, mut vector, mut scalar) = (0u64, 0u64, 0u64);
        while pc < prog.statements.len() {
            if steps >= self.opts.max_steps {
                return Err(RunError::StepLimit(self.opts.max_steps));
            }
            steps += 1;
            self.advance(self.now, st)?;
            match prog.statements[pc] {
                Statement::Raw(word) => return Err(RunError::IllegalInstruction { pc, word }),
                Statement::Scalar(ScalarOp::Vsetvli { .. }) => {
                    let word = prog.statements[pc].to_word(pc).unwrap_or(0);
                    return Err(RunError::IllegalInstruction { pc, word });
                }
                Statement::Scalar(op) => {
                    if matches!(op, ScalarOp::Lw { .. } | ScalarOp::Sw { .. }) {
                        self.drain_resource(semantics::mem_resource(&st.cfg), st)?;
                    }
                    *counts.entry(scalar_name(&op).to_string()).or_default() += 1;
                    self.emit(self.now, "SCALAR", u64::MAX, scalar_name(&op), TraceKind::Issue);
                    scalar += 1;
                    self.now += 1;
                    pc = exec_scalar(&op, pc, st).map_err(|e| RunError::Fault { pc, source: e.into() })?;
                }
                Statement::Uvp(instr) => {
                    *counts.entry(instr.mnemonic.name().to_string()).or_default() += 1;
                    vector += 1;
                    self.issue_vector(pc, instr, st)?;
                    pc += 1;
                }
            }
        }
        self.advance(u64::MAX, st)?;
        let cycles = self.now.max(self.last_commit);
        st.cycles = cycles;
        st.instret += steps;
        Ok(RunReport {
            cycles,
            statements: steps,
            vector_instructions: vector,
            scalar_instructions: scalar,
            stall_cycles: self.stall_cycles,
            mnemonic_counts: counts,
            div_fault: st.div_fault,
            digest: st.digest(),
        })
    }

    /// True once nothing is in flight and all tables are clear.
    pub fn is_quiescent(&self) -> bool {
        self.inflight.is_empty() && self.monitor.active() == 0 && self.validity.all_invalid() && self.hazards.is_zero()
    }
}

pub fn scalar_name(op: &ScalarOp) -> &'static str {
    match op {
        ScalarOp::Add { .. } => "add",
        ScalarOp::Sub { .. } => "sub",
        ScalarOp::Addi { .. } => "addi",
        ScalarOp::Slli { .. } => "slli",
        ScalarOp::Srli { .. } => "srli",
        ScalarOp::Lui { .. } => "lui",
        ScalarOp::Lw { .. } => "lw",
        ScalarOp::Sw { .. } => "sw",
        ScalarOp::Branch { cond, .. } => cond.name(),
        ScalarOp::Jal { .. } => "jal",
        ScalarOp::Vsetvli { .. } => "vsetvli",
    }
}

/// Executes one scalar statement and returns the next statement index.
pub fn exec_scalar(op: &ScalarOp, pc: usize, st: &mut MachineState) -> Result<usize, MachineError> {
    let x = |r: u8| st.xreg(r);
    match *op {
        ScalarOp::Add { rd, rs1, rs2 } => st.set_xreg(rd, x(rs1).wrapping_add(x(rs2))),
        ScalarOp::Sub { rd, rs1, rs2 } => st.set_xreg(rd, x(rs1).wrapping_sub(x(rs2))),
        ScalarOp::Addi { rd, rs1, imm } => st.set_xreg(rd, x(rs1).wrapping_add(imm as u32)),
        ScalarOp::Slli { rd, rs1, shamt } => st.set_xreg(rd, x(rs1) << (shamt & 31)),
        ScalarOp::Srli { rd, rs1, shamt } => st.set_xreg(rd, x(rs1) >> (shamt & 31)),
        ScalarOp::Lui { rd, imm20 } => st.set_xreg(rd, imm20 << 12),
        ScalarOp::Lw { rd, rs1, imm } => {
            let v = st.mem.read_u32(x(rs1).wrapping_add(imm as u32) as u64)?;
            st.set_xreg(rd, v);
        }
        ScalarOp::Sw { rs2, rs1, imm } => {
            let v = x(rs2);
            st.mem.write_u32(x(rs1).wrapping_add(imm as u32) as u64, v)?;
        }
        ScalarOp::Branch { cond, rs1, rs2, target } => {
            if cond.holds(x(rs1), x(rs2)) {
                return Ok(target);
            }
        }
        ScalarOp::Jal { rd, target } => {
            st.set_xreg(rd, ((pc + 1) * 4) as u32);
            return Ok(target);
        }
        ScalarOp::Vsetvli { .. } => unreachable!("rejected before execution"),
    }
    Ok(pc + 1)
}

/// Convenience wrapper: runs `prog` on `st` with the given options.
pub fn run(prog: &AsmProgram, st: &mut MachineState, opts: SimOptions) -> Result<(RunReport, Vec<TraceEvent>), RunError> {
    let mut seq = Sequencer::new(st, opts);
    let report = seq.run(prog, st)?;
    Ok((report, seq.trace))
}
