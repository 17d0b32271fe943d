//! Element exchange engine: register-resident gather/scatter with independent
//! source and destination lengths, the three-stage FSM timing model, and the
//! inter-lane reduction tree.
//!
//! Index vectors are always 16-bit and read as unsigned.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::datapath::{sat_addsub, AddSub, ElemWidth};
use crate::machine::{MachineError, MachineState, RegGroup};

/// Cycles spent decoding the command and loading PE thresholds.
pub const CONFIG_CYCLES: u64 = 2;
/// Cycles per lockstep round (read index, route, write back).
pub const ROUND_CYCLES: u64 = 3;
/// Cycles spent signalling completion to the main sequencer.
pub const COMMIT_CYCLES: u64 = 1;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ExeError {
    #[error("index {index} at position {position} outside source/destination of length {len}")]
    IndexFault { position: u32, index: u32, len: u32 },
    #[error(transparent)]
    Machine(#[from] MachineError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FsmStage {
    Idle,
    Configuration,
    DataMovement,
    Commit,
}

/// Per-PE counter/threshold pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PeState {
    pub counter: u32,
    pub threshold: u32,
}

/// Timing model of the EXE state machine. Movements are dealt round-robin
/// to one PE per lane; every round all PEs advance together.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExeFsm {
    pub stage: FsmStage,
    pub round: u32,
    pub pes: Vec<PeState>,
    /// Stages visited so far, in order.
    pub history: Vec<FsmStage>,
}

impl ExeFsm {
    pub fn new(n_pe: u32) -> Self {
        Self { stage: FsmStage::Idle, round: 0, pes: vec![PeState::default(); n_pe as usize], history: vec![FsmStage::Idle] }
    }

    fn enter(&mut self, s: FsmStage) {
        let legal = matches!(
            (self.stage, s),
            (FsmStage::Idle, FsmStage::Configuration)
                | (FsmStage::Configuration, FsmStage::DataMovement)
                | (FsmStage::DataMovement, FsmStage::Commit)
                | (FsmStage::Commit, FsmStage::Idle)
        );
        assert!(legal, "illegal EXE transition {:?} -> {:?}", self.stage, s);
        self.stage = s;
        self.history.push(s);
    }

    /// Runs one command moving `n_moves` elements and returns its cycle cost.
    pub fn run(&mut self, n_moves: u32) -> u64 {
        let n_pe = self.pes.len() as u32;
        self.enter(FsmStage::Configuration);
        for (p, pe) in self.pes.iter_mut().enumerate() {
            pe.counter = 0;
            pe.threshold = n_moves / n_pe + u32::from((p as u32) < n_moves % n_pe);
        }
        self.enter(FsmStage::DataMovement);
        self.round = 0;
        while self.pes.iter().any(|pe| pe.counter < pe.threshold) {
            for pe in self.pes.iter_mut() {
                if pe.counter < pe.threshold {
                    pe.counter += 1;
                }
                debug_assert!(pe.counter <= pe.threshold);
            }
            self.round += 1;
        }
        self.enter(FsmStage::Commit);
        self.enter(FsmStage::Idle);
        CONFIG_CYCLES + ROUND_CYCLES * self.round as u64 + COMMIT_CYCLES
    }
}

/// Closed form of [`ExeFsm::run`]: depends only on the move count and lane count.
pub fn permute_cycles(n_moves: u32, n_lane: u32) -> u64 {
    CONFIG_CYCLES + ROUND_CYCLES * n_moves.div_ceil(n_lane) as u64 + COMMIT_CYCLES
}

/// Interprets a stored 16-bit index element.
#[inline]
pub fn index_value(raw: i32) -> u32 {
    raw as u16 as u32
}

/// `out[i] = src[idx[i]]` for `i < n_out`. Positions whose mask bit is clear
/// keep `prev[i]`.
pub fn gather(src: &[i32], idx: &[i32], n_out: u32, prev: &[i32], mask: Option<&[bool]>) -> Result<Vec<i32>, ExeError> {
    let mut out = prev[..n_out as usize].to_vec();
    for i in 0..n_out as usize {
        if mask.is_some_and(|m| !m[i]) {
            continue;
        }
        let k = index_value(idx[i]);
        let v = *src.get(k as usize).ok_or(ExeError::IndexFault { position: i as u32, index: k, len: src.len() as u32 })?;
        out[i] = v;
    }
    Ok(out)
}

/// `dst[idx[i]] = src[i]` for every source position; later positions win on
/// duplicate indices. Masked-off source positions are skipped.
pub fn scatter(dst: &mut [i32], src: &[i32], idx: &[i32], mask: Option<&[bool]>) -> Result<(), ExeError> {
    // all indices are checked before anything is written
    for (i, &raw) in idx.iter().enumerate().take(src.len()) {
        let k = index_value(raw);
        if k as usize >= dst.len() {
            return Err(ExeError::IndexFault { position: i as u32, index: k, len: dst.len() as u32 });
        }
    }
    for (i, &v) in src.iter().enumerate() {
        if mask.is_some_and(|m| !m[i]) {
            continue;
        }
        dst[index_value(idx[i]) as usize] = v;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ReduceOp {
    Sum,
    Min,
    Max,
}

impl ReduceOp {
    pub fn identity(self, w: ElemWidth) -> i32 {
        match self {
            ReduceOp::Sum => 0,
            ReduceOp::Min => w.max(),
            ReduceOp::Max => w.min(),
        }
    }

    #[inline]
    pub fn apply(self, a: i32, b: i32, w: ElemWidth) -> i32 {
        match self {
            ReduceOp::Sum => sat_addsub(a, b, AddSub::Add, w),
            ReduceOp::Min => a.min(b),
            ReduceOp::Max => a.max(b),
        }
    }
}

/// One operand move of the inter-lane tree: lane `src` is folded into lane `dst`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReduceStep {
    pub src: u32,
    pub dst: u32,
    pub value: i32,
}

/// First stage: each lane folds its own elements in order (element `e`
/// lives in lane `e % n_lane`).
pub fn intra_lane_partials(values: &[i32], n_lane: u32, op: ReduceOp, w: ElemWidth) -> Vec<i32> {
    let mut partials = vec![op.identity(w); n_lane as usize];
    for (e, &v) in values.iter().enumerate() {
        let lane = e % n_lane as usize;
        partials[lane] = op.apply(partials[lane], v, w);
    }
    partials
}

/// Second stage: over `log2(n_lane)` rounds, lane `m*2^(n+1) + 2^n` is folded
/// into lane `m*2^(n+1)`. Returns lane 0's value and the per-round moves.
pub fn inter_lane_reduce(op: ReduceOp, partials: &[i32], w: ElemWidth) -> (i32, Vec<Vec<ReduceStep>>) {
    let n_lane = partials.len();
    assert!(n_lane.is_power_of_two(), "lane count must be a power of two");
    let mut lanes = partials.to_vec();
    let mut rounds = Vec::new();
    let mut stride = 1;
    while stride < n_lane {
        let mut steps = Vec::new();
        for dst in (0..n_lane).step_by(2 * stride) {
            let src = dst + stride;
            lanes[dst] = op.apply(lanes[dst], lanes[src], w);
            steps.push(ReduceStep { src: src as u32, dst: dst as u32, value: lanes[dst] });
        }
        rounds.push(steps);
        stride *= 2;
    }
    (lanes[0], rounds)
}

/// Full two-stage reduction.
pub fn reduce(values: &[i32], n_lane: u32, op: ReduceOp, w: ElemWidth) -> i32 {
    inter_lane_reduce(op, &intra_lane_partials(values, n_lane, op, w), w).0
}

/// Cycle cost of a reduction: the lanes' own pass, then the EXE tree.
pub fn reduce_cycles(avl: u32, n_lane: u32, simd: u32) -> u64 {
    let vl_max = avl.div_ceil(n_lane);
    vl_max.div_ceil(simd) as u64 + CONFIG_CYCLES + ROUND_CYCLES * n_lane.trailing_zeros() as u64 + COMMIT_CYCLES
}

/// Gather directly on machine state; `vd` holds `n_out` elements.
pub fn exec_gather(st: &mut MachineState, vd: &RegGroup, vs1: &RegGroup, vs2: &RegGroup) -> Result<u64, ExeError> {
    let src = st.read_group(vs1);
    let idx = st.read_group(vs2);
    let prev = st.read_group(vd);
    let out = gather(&src, &idx, vd.avl, &prev, None)?;
    st.write_group(vd, &out, None);
    Ok(permute_cycles(vd.avl, st.cfg.n_lane))
}

/// Scatter directly on machine state; `vs1`/`vs2` hold the `n_in` source elements.
pub fn exec_scatter(st: &mut MachineState, vd: &RegGroup, vs1: &RegGroup, vs2: &RegGroup) -> Result<u64, ExeError> {
    let src = st.read_group(vs1);
    let idx = st.read_group(vs2);
    let mut dst = st.read_group(vd);
    scatter(&mut dst, &src, &idx, None)?;
    st.write_group(vd, &dst, None);
    Ok(permute_cycles(vs1.avl, st.cfg.n_lane))
}
