//! RVV-style strip-mining baseline: 32 architectural registers grouped by a
//! power-of-two LMUL, software strip loops with `vsetvli`, and spill/fill to
//! memory when live values outgrow the register file.
//!
//! Kernels are generated as a fully unrolled stream over virtual values. A
//! furthest-next-use allocator maps them onto LMUL-aligned register groups and
//! inserts spills and fills. The resulting stream runs functionally with the
//! same datapath as UVP and is timed with the same lane, memory and issue
//! rules.

use std::collections::{HashMap, VecDeque};

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::kernels::{bit_reverse, load_elems, store_elems, twiddle, FFT_SHIFT, TWIDDLE_ONE};
use super::{result_digest, BenchError, InstrBreakdown, InstrCategory, KernelKind, KernelSpec, RunReport};
use crate::datapath::{mul_shift, sat_addsub, saturate, AddSub, ElemWidth};
use crate::exe;
use crate::machine::{MachineConfig, MemoryModel};

/// How the baseline computes a matrix product.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatmulStyle {
    /// The same shuffle-multiply-accumulate algorithm as UVP, strip-mined over
    /// the `m·k` output with indexed loads doing the shuffles.
    #[default]
    Hadamard,
    /// Row-broadcast kernel: four output rows in registers, one row of B
    /// loaded per step and multiplied by scalar elements of A.
    RowBroadcast,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct BaselineConfig {
    pub n_lane: u32,
    pub vlen_bits: u32,
    pub n_regs: u32,
    pub mem_latency_cycles: u32,
    pub lane_word_bits: u32,
    pub n_id: u32,
    /// Fixed register grouping; `None` tries 1, 2, 4 and 8 and keeps the fastest.
    pub lmul: Option<u32>,
    pub matmul: MatmulStyle,
    /// What "best" means when several LMUL values are tried.
    pub select: Objective,
    pub mem_bytes: u64,
}

/// Selection rule across LMUL candidates. Each metric is compared against
/// the baseline variant that is strongest at that metric.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    #[default]
    Cycles,
    Instructions,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            n_lane: 4,
            vlen_bits: 4096,
            n_regs: 32,
            mem_latency_cycles: 4,
            lane_word_bits: 64,
            n_id: 8,
            lmul: None,
            matmul: MatmulStyle::Hadamard,
            select: Objective::Cycles,
            mem_bytes: 1 << 20,
        }
    }
}

impl BaselineConfig {
    /// Baseline with `1/ratio` of the UVP lanes and otherwise identical lanes
    /// and memory.
    pub fn matched(uvp: &MachineConfig, ratio: u32) -> Self {
        Self {
            n_lane: (uvp.n_lane / ratio.max(1)).max(1),
            mem_latency_cycles: uvp.mem_latency_cycles,
            lane_word_bits: uvp.lane_word_bits,
            n_id: uvp.n_id,
            mem_bytes: uvp.mem_bytes,
            ..Self::default()
        }
    }

    fn vlmax(&self, lmul: u32, w: ElemWidth) -> u32 {
        self.vlen_bits * lmul / w.bits()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VArith {
    /// Saturating add.
    SAdd,
    /// Saturating subtract, `vs1 − vs2`.
    SSub,
    /// Product shifted right, then saturated.
    Mul { shift: u32 },
    /// Wrapping 16-bit add, for index vectors.
    IAdd,
}

/// One baseline instruction. Register fields hold virtual value ids before
/// allocation and group head registers after.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum BInstr {
    Vsetvli { vl: u32, lmul: u32 },
    /// Loop control with no architectural effect in the model.
    Scalar { name: String },
    Li { xr: u8, value: i32 },
    Lh { xr: u8, addr: u64 },
    /// `stride == 0` is unit stride; otherwise a byte stride.
    Vle { vd: u32, addr: u64, stride: u32 },
    Vse { vs: u32, addr: u64, stride: u32 },
    /// Indexed load with 16-bit byte offsets.
    Vlxe { vd: u32, base: u64, idx: u32 },
    Arith { op: VArith, vd: u32, vs1: u32, vs2: u32 },
    ArithX { op: VArith, vd: u32, vs: u32, xr: u8 },
    Splat { vd: u32, value: i32 },
    /// Widening product.
    Wmul { vd: u32, vs1: u32, vs2: u32 },
    Wadd { vd: u32, vs1: u32, vs2: u32 },
    Wsub { vd: u32, vs1: u32, vs2: u32 },
    /// Narrowing shift with saturation, truncating.
    Nclip { vd: u32, vs: u32, shift: u32 },
    /// `vd[0] = acc[0] + Σ vs`.
    Redsum { vd: u32, vs: u32, acc: u32 },
    Spill { vs: u32, slot: u64, len: u32, wide: bool },
    Fill { vd: u32, slot: u64, len: u32, wide: bool },
}

impl BInstr {
    pub fn category(&self) -> InstrCategory {
        use BInstr::*;
        match self {
            Vsetvli { .. } => InstrCategory::Configuration,
            Scalar { .. } | Li { .. } | Lh { .. } => InstrCategory::Scalar,
            Vle { .. } | Vse { .. } | Vlxe { .. } => InstrCategory::Mem,
            Spill { .. } | Fill { .. } => InstrCategory::SpillFill,
            _ => InstrCategory::Arithmetic,
        }
    }

    pub fn srcs(&self) -> Vec<u32> {
        use BInstr::*;
        let mut v = match *self {
            Vse { vs, .. } | ArithX { vs, .. } | Nclip { vs, .. } | Spill { vs, .. } => vec![vs],
            Vlxe { idx, .. } => vec![idx],
            Arith { vs1, vs2, .. } | Wmul { vs1, vs2, .. } | Wadd { vs1, vs2, .. } | Wsub { vs1, vs2, .. } => vec![vs1, vs2],
            Redsum { vs, acc, .. } => vec![vs, acc],
            _ => vec![],
        };
        v.dedup();
        v
    }

    pub fn dst(&self) -> Option<u32> {
        use BInstr::*;
        match *self {
            Vle { vd, .. }
            | Vlxe { vd, .. }
            | Arith { vd, .. }
            | ArithX { vd, .. }
            | Splat { vd, .. }
            | Wmul { vd, .. }
            | Wadd { vd, .. }
            | Wsub { vd, .. }
            | Nclip { vd, .. }
            | Redsum { vd, .. }
            | Fill { vd, .. } => Some(vd),
            _ => None,
        }
    }

    /// Whether the destination may share registers with a dying source.
    fn dst_may_overlap(&self) -> bool {
        !matches!(self, BInstr::Wmul { .. } | BInstr::Nclip { .. } | BInstr::Redsum { .. })
    }

    fn map_regs(&self, f: impl Fn(u32) -> u32) -> BInstr {
        use BInstr::*;
        let mut i = self.clone();
        match &mut i {
            Vle { vd, .. } | Splat { vd, .. } | Fill { vd, .. } => *vd = f(*vd),
            Vse { vs, .. } | Spill { vs, .. } => *vs = f(*vs),
            Vlxe { vd, idx, .. } => (*vd, *idx) = (f(*vd), f(*idx)),
            Arith { vd, vs1, vs2, .. } | Wmul { vd, vs1, vs2 } | Wadd { vd, vs1, vs2 } | Wsub { vd, vs1, vs2 } => {
                (*vd, *vs1, *vs2) = (f(*vd), f(*vs1), f(*vs2))
            }
            ArithX { vd, vs, .. } | Nclip { vd, vs, .. } => (*vd, *vs) = (f(*vd), f(*vs)),
            Redsum { vd, vs, acc } => (*vd, *vs, *acc) = (f(*vd), f(*vs), f(*acc)),
            Vsetvli { .. } | Scalar { .. } | Li { .. } | Lh { .. } => {}
        }
        i
    }
}

#[derive(Debug, Clone, Copy)]
struct Val {
    wide: bool,
    len: u32,
}

/// Stream generator over virtual values.
struct Gen {
    ops: Vec<BInstr>,
    vals: Vec<Val>,
    vl: u32,
    lmul: u32,
}

impl Gen {
    fn new(lmul: u32) -> Self {
        Self { ops: Vec::new(), vals: Vec::new(), vl: 0, lmul }
    }

    fn val(&mut self, wide: bool) -> u32 {
        self.vals.push(Val { wide, len: self.vl });
        self.vals.len() as u32 - 1
    }

    fn vsetvli(&mut self, vl: u32) {
        self.vl = vl;
        self.ops.push(BInstr::Vsetvli { vl, lmul: self.lmul });
    }

    fn scalar(&mut self, names: &[&str]) {
        for n in names {
            self.ops.push(BInstr::Scalar { name: n.to_string() });
        }
    }

    fn li(&mut self, xr: u8, value: i32) {
        self.ops.push(BInstr::Li { xr, value });
    }

    fn lh(&mut self, xr: u8, addr: u64) {
        self.ops.push(BInstr::Lh { xr, addr });
    }

    fn vle(&mut self, addr: u64, stride: u32) -> u32 {
        let vd = self.val(false);
        self.ops.push(BInstr::Vle { vd, addr, stride });
        vd
    }

    fn vse(&mut self, vs: u32, addr: u64, stride: u32) {
        self.ops.push(BInstr::Vse { vs, addr, stride });
    }

    fn vlxe(&mut self, base: u64, idx: u32) -> u32 {
        let vd = self.val(false);
        self.ops.push(BInstr::Vlxe { vd, base, idx });
        vd
    }

    fn arith(&mut self, op: VArith, vs1: u32, vs2: u32) -> u32 {
        let vd = self.val(false);
        self.ops.push(BInstr::Arith { op, vd, vs1, vs2 });
        vd
    }

    fn arith_x(&mut self, op: VArith, vs: u32, xr: u8) -> u32 {
        let vd = self.val(false);
        self.ops.push(BInstr::ArithX { op, vd, vs, xr });
        vd
    }

    fn splat(&mut self, value: i32) -> u32 {
        let vd = self.val(false);
        self.ops.push(BInstr::Splat { vd, value });
        vd
    }

    fn widening(&mut self) -> Result<(), BenchError> {
        if self.lmul * 2 > 8 {
            return Err(BenchError::UnsupportedKernel(format!("widening needs LMUL ≤ 4, have {}", self.lmul)));
        }
        Ok(())
    }

    fn wmul(&mut self, vs1: u32, vs2: u32) -> Result<u32, BenchError> {
        self.widening()?;
        let vd = self.val(true);
        self.ops.push(BInstr::Wmul { vd, vs1, vs2 });
        Ok(vd)
    }

    fn wadd(&mut self, vs1: u32, vs2: u32, sub: bool) -> u32 {
        let vd = self.val(true);
        self.ops.push(if sub { BInstr::Wsub { vd, vs1, vs2 } } else { BInstr::Wadd { vd, vs1, vs2 } });
        vd
    }

    fn nclip(&mut self, vs: u32, shift: u32) -> u32 {
        let vd = self.val(false);
        self.ops.push(BInstr::Nclip { vd, vs, shift });
        vd
    }

    fn redsum(&mut self, vs: u32, acc: u32) -> u32 {
        self.vals.push(Val { wide: false, len: 1 });
        let vd = self.vals.len() as u32 - 1;
        self.ops.push(BInstr::Redsum { vd, vs, acc });
        vd
    }
}

/// Output of the register allocator.
pub struct Allocated {
    pub ops: Vec<BInstr>,
    pub spill_bytes: u64,
}

/// Maps virtual values onto `n_regs / lmul` aligned groups, evicting the
/// resident value whose next use is furthest away.
fn allocate(g: &Gen, n_regs: u32, spill_base: u64) -> Result<Allocated, BenchError> {
    let lmul = g.lmul;
    let units = (n_regs / lmul) as usize;
    let size = |v: u32| if g.vals[v as usize].wide { 2usize } else { 1 };
    let mut uses: Vec<Vec<usize>> = vec![Vec::new(); g.vals.len()];
    for (i, op) in g.ops.iter().enumerate() {
        for s in op.srcs() {
            uses[s as usize].push(i);
        }
    }
    let mut ptr = vec![0usize; g.vals.len()];
    let next_use = |ptr: &[usize], v: u32| uses[v as usize].get(ptr[v as usize]).copied().unwrap_or(usize::MAX);
    let mut owner: Vec<Option<u32>> = vec![None; units];
    let mut loc: HashMap<u32, usize> = HashMap::new();
    let mut slot: HashMap<u32, u64> = HashMap::new();
    let mut next_slot = spill_base;
    let mut out = Vec::with_capacity(g.ops.len());

    struct Ctx<'a> {
        owner: &'a mut Vec<Option<u32>>,
        loc: &'a mut HashMap<u32, usize>,
        slot: &'a mut HashMap<u32, u64>,
        next_slot: &'a mut u64,
        out: &'a mut Vec<BInstr>,
    }

    let place = |c: &mut Ctx, sz: usize, pinned: &[usize], ptr: &[usize]| -> Result<usize, BenchError> {
        let mut best: Option<(bool, usize, usize)> = None;
        for p in (0..units).step_by(sz) {
            let range = p..p + sz;
            if range.end > units || pinned.iter().any(|u| range.contains(u)) {
                continue;
            }
            let occ: Vec<u32> = c.owner[range.clone()].iter().flatten().copied().collect();
            let free = occ.is_empty();
            let score = occ.iter().map(|&v| next_use(ptr, v)).min().unwrap_or(usize::MAX);
            if best.is_none_or(|(bf, bs, _)| (free, score) > (bf, bs)) {
                best = Some((free, score, p));
            }
        }
        let (_, _, p) = best.ok_or_else(|| BenchError::UnsupportedKernel("register file too small for live values".into()))?;
        let mut occ: Vec<u32> = c.owner[p..p + sz].iter().flatten().copied().collect();
        occ.dedup();
        for v in occ {
            let at = c.loc.remove(&v).expect("resident");
            let vsz = size(v);
            for o in &mut c.owner[at..at + vsz] {
                *o = None;
            }
            if next_use(ptr, v) != usize::MAX && !c.slot.contains_key(&v) {
                let val = g.vals[v as usize];
                let s = *c.next_slot;
                *c.next_slot += val.len as u64 * if val.wide { 4 } else { 2 };
                *c.next_slot = c.next_slot.next_multiple_of(64);
                c.slot.insert(v, s);
                c.out.push(BInstr::Spill { vs: (at as u32) * lmul, slot: s, len: val.len, wide: val.wide });
            }
        }
        Ok(p)
    };

    for op in &g.ops {
        let mut c = Ctx { owner: &mut owner, loc: &mut loc, slot: &mut slot, next_slot: &mut next_slot, out: &mut out };
        let srcs = op.srcs();
        let mut pinned: Vec<usize> = Vec::new();
        for &s in &srcs {
            if let Some(&u) = c.loc.get(&s) {
                pinned.extend(u..u + size(s));
            }
        }
        for &s in &srcs {
            if c.loc.contains_key(&s) {
                continue;
            }
            let sl = *c.slot.get(&s).expect("value was spilled before use");
            let sz = size(s);
            let p = place(&mut c, sz, &pinned, &ptr)?;
            for o in &mut c.owner[p..p + sz] {
                *o = Some(s);
            }
            c.loc.insert(s, p);
            pinned.extend(p..p + sz);
            let val = g.vals[s as usize];
            c.out.push(BInstr::Fill { vd: p as u32 * lmul, slot: sl, len: val.len, wide: val.wide });
        }
        let src_heads: HashMap<u32, u32> = srcs.iter().map(|&s| (s, c.loc[&s] as u32 * lmul)).collect();
        for &s in &srcs {
            ptr[s as usize] += 1;
        }
        let dying: Vec<u32> = srcs.iter().copied().filter(|&s| next_use(&ptr, s) == usize::MAX).collect();
        let free = |c: &mut Ctx, v: u32| {
            if let Some(at) = c.loc.remove(&v) {
                for o in &mut c.owner[at..at + size(v)] {
                    *o = None;
                }
            }
        };
        let mut dst_head = None;
        if let Some(d) = op.dst() {
            let sz = size(d);
            if op.dst_may_overlap() {
                for &s in &dying {
                    free(&mut c, s);
                }
                pinned.retain(|u| c.owner[*u].is_some());
            }
            let p = place(&mut c, sz, &pinned, &ptr)?;
            for o in &mut c.owner[p..p + sz] {
                *o = Some(d);
            }
            c.loc.insert(d, p);
            dst_head = Some(p as u32 * lmul);
        }
        for &s in &dying {
            free(&mut c, s);
        }
        let mapped = op.map_regs(|v| if Some(v) == op.dst() { dst_head.expect("dst") } else { src_heads[&v] });
        c.out.push(mapped);
        if let Some(d) = op.dst() {
            if uses[d as usize].is_empty() {
                free(&mut c, d);
            }
        }
    }
    Ok(Allocated { ops: out, spill_bytes: next_slot - spill_base })
}

type Span = (u32, u32);

fn overlaps(a: &[Span], b: &[Span]) -> bool {
    a.iter().any(|&(al, ah)| b.iter().any(|&(bl, bh)| al <= bh && bl <= ah))
}

struct InFlight {
    commit: u64,
    reads: Vec<Span>,
    writes: Vec<Span>,
}

/// Functional execution and timing of an allocated stream.
struct Exec<'a> {
    cfg: &'a BaselineConfig,
    lmul: u32,
    w: ElemWidth,
    regs: HashMap<u32, (Vec<i64>, bool)>,
    x: [i32; 32],
    mem: MemoryModel,
    vl: u32,
    next_issue: u64,
    unit_free: [u64; 2],
    last_commit: u64,
    inflight: VecDeque<InFlight>,
    breakdown: InstrBreakdown,
    strips: u64,
}

const LANES: usize = 0;
const MEM: usize = 1;

impl<'a> Exec<'a> {
    fn mem_res(&self) -> Span {
        (self.cfg.n_regs, self.cfg.n_regs)
    }

    fn span(&self, head: u32, wide: bool) -> Span {
        let n = self.lmul * if wide { 2 } else { 1 };
        (head, head + n - 1)
    }

    fn read(&self, h: u32) -> &[i64] {
        &self.regs.get(&h).expect("register holds a value").0
    }

    fn wide_at(&self, h: u32) -> bool {
        self.regs.get(&h).is_some_and(|r| r.1)
    }

    fn write(&mut self, h: u32, vals: Vec<i64>, wide: bool) {
        let s = self.span(h, wide);
        let lmul = self.lmul;
        self.regs.retain(|&k, v| {
            let e = k + lmul * if v.1 { 2 } else { 1 } - 1;
            !(k <= s.1 && s.0 <= e)
        });
        self.regs.insert(h, (vals, wide));
    }

    fn lane_cycles(&self, vl: u32, bits: u32) -> u64 {
        let simd = (self.cfg.lane_word_bits / bits).max(1);
        vl.div_ceil(self.cfg.n_lane).div_ceil(simd) as u64
    }

    fn unit_stride(&self, vl: u32, wide: bool) -> u64 {
        let beats = vl.div_ceil(self.cfg.n_lane) as u64 * if wide { 2 } else { 1 };
        self.cfg.mem_latency_cycles as u64 + beats
    }

    fn element_serial(&self, vl: u32) -> u64 {
        self.cfg.mem_latency_cycles as u64 + vl as u64
    }

    fn drain(&mut self, t: u64) {
        while self.inflight.front().is_some_and(|f| f.commit <= t) {
            self.inflight.pop_front();
        }
    }

    fn issue_scalar(&mut self, touches_mem: bool) {
        let mut t = self.next_issue;
        if touches_mem {
            let m = [self.mem_res()];
            if let Some(c) = self.inflight.iter().filter(|f| overlaps(&f.reads, &m) || overlaps(&f.writes, &m)).map(|f| f.commit).max() {
                t = t.max(c);
            }
        }
        self.next_issue = t + 1;
    }

    fn issue_vector(&mut self, unit: usize, cost: u64, reads: Vec<Span>, writes: Vec<Span>) {
        let mut t = self.next_issue;
        loop {
            self.drain(t);
            let conflict = self
                .inflight
                .iter()
                .filter(|f| overlaps(&f.writes, &reads) || overlaps(&f.writes, &writes) || overlaps(&f.reads, &writes))
                .map(|f| f.commit)
                .max();
            if let Some(c) = conflict {
                t = c;
                continue;
            }
            if self.inflight.len() >= self.cfg.n_id as usize {
                t = self.inflight.front().expect("nonempty").commit;
                continue;
            }
            break;
        }
        let start = (t + 1).max(self.unit_free[unit]);
        let end = start + cost;
        self.unit_free[unit] = end;
        let commit = end.max(self.last_commit);
        self.last_commit = commit;
        self.inflight.push_back(InFlight { commit, reads, writes });
        self.next_issue = t + 1;
    }

    fn load(&self, addr: u64, n: u32, stride: u32) -> Result<Vec<i64>, BenchError> {
        if stride == 0 {
            return Ok(load_elems(&self.mem, addr, n as usize, self.w)?.into_iter().map(i64::from).collect());
        }
        (0..n as u64).map(|i| Ok(load_elems(&self.mem, addr + i * stride as u64, 1, self.w)?[0] as i64)).collect()
    }

    fn store(&mut self, addr: u64, vals: &[i64], stride: u32) -> Result<(), BenchError> {
        let v32: Vec<i32> = vals.iter().map(|&v| v as i32).collect();
        if stride == 0 {
            store_elems(&mut self.mem, addr, &v32, self.w)?;
        } else {
            for (i, &v) in v32.iter().enumerate() {
                store_elems(&mut self.mem, addr + i as u64 * stride as u64, &[v], self.w)?;
            }
        }
        Ok(())
    }

    fn arith(&self, op: VArith, a: i64, b: i64) -> i64 {
        let w = self.w;
        (match op {
            VArith::SAdd => sat_addsub(a as i32, b as i32, AddSub::Add, w),
            VArith::SSub => sat_addsub(a as i32, b as i32, AddSub::Sub, w),
            VArith::Mul { shift } => mul_shift(a as i32, b as i32, shift, w),
            VArith::IAdd => (a as i32).wrapping_add(b as i32) as i16 as i32,
        }) as i64
    }

    fn step(&mut self, op: &BInstr) -> Result<(), BenchError> {
        use BInstr::*;
        *self.breakdown.get_mut(op.category()) += 1;
        let vl = self.vl;
        let bits = self.w.bits();
        match *op {
            Vsetvli { vl, .. } => {
                self.vl = vl;
                self.strips += 1;
                self.issue_scalar(false);
            }
            Scalar { .. } => self.issue_scalar(false),
            Li { xr, value } => {
                self.x[xr as usize] = value;
                self.issue_scalar(false);
            }
            Lh { xr, addr } => {
                self.x[xr as usize] = load_elems(&self.mem, addr, 1, ElemWidth::E16)?[0];
                self.issue_scalar(true);
            }
            Vle { vd, addr, stride } => {
                let vals = self.load(addr, vl, stride)?;
                self.write(vd, vals, false);
                let cost = if stride == 0 { self.unit_stride(vl, false) } else { self.element_serial(vl) };
                self.issue_vector(MEM, cost, vec![self.mem_res()], vec![self.span(vd, false)]);
            }
            Vse { vs, addr, stride } => {
                let vals = self.read(vs)[..vl as usize].to_vec();
                self.store(addr, &vals, stride)?;
                let cost = if stride == 0 { self.unit_stride(vl, false) } else { self.element_serial(vl) };
                self.issue_vector(MEM, cost, vec![self.span(vs, false)], vec![self.mem_res()]);
            }
            Vlxe { vd, base, idx } => {
                let offs: Vec<u64> = self.read(idx)[..vl as usize].iter().map(|&o| exe::index_value(o as i32) as u64).collect();
                let mut vals = Vec::with_capacity(offs.len());
                for o in offs {
                    vals.push(load_elems(&self.mem, base + o, 1, self.w)?[0] as i64);
                }
                self.write(vd, vals, false);
                let cost = self.element_serial(vl);
                self.issue_vector(MEM, cost, vec![self.mem_res(), self.span(idx, false)], vec![self.span(vd, false)]);
            }
            Arith { op, vd, vs1, vs2 } => {
                let vals = (0..vl as usize).map(|i| self.arith(op, self.read(vs1)[i], self.read(vs2)[i])).collect();
                let reads = vec![self.span(vs1, false), self.span(vs2, false)];
                self.write(vd, vals, false);
                self.issue_vector(LANES, self.lane_cycles(vl, bits), reads, vec![self.span(vd, false)]);
            }
            ArithX { op, vd, vs, xr } => {
                let s = saturate(self.x[xr as usize] as i64, self.w) as i64;
                let s = if op == VArith::IAdd { self.x[xr as usize] as i64 } else { s };
                let vals = (0..vl as usize).map(|i| self.arith(op, self.read(vs)[i], s)).collect();
                let reads = vec![self.span(vs, false)];
                self.write(vd, vals, false);
                self.issue_vector(LANES, self.lane_cycles(vl, bits), reads, vec![self.span(vd, false)]);
            }
            Splat { vd, value } => {
                self.write(vd, vec![value as i64; vl as usize], false);
                self.issue_vector(LANES, self.lane_cycles(vl, bits), vec![], vec![self.span(vd, false)]);
            }
            Wmul { vd, vs1, vs2 } => {
                let vals = (0..vl as usize).map(|i| self.read(vs1)[i] * self.read(vs2)[i]).collect();
                let reads = vec![self.span(vs1, false), self.span(vs2, false)];
                self.write(vd, vals, true);
                self.issue_vector(LANES, self.lane_cycles(vl, 2 * bits), reads, vec![self.span(vd, true)]);
            }
            Wadd { vd, vs1, vs2 } | Wsub { vd, vs1, vs2 } => {
                let sub = matches!(op, Wsub { .. });
                let vals =
                    (0..vl as usize).map(|i| if sub { self.read(vs1)[i] - self.read(vs2)[i] } else { self.read(vs1)[i] + self.read(vs2)[i] }).collect();
                let reads = vec![self.span(vs1, true), self.span(vs2, true)];
                self.write(vd, vals, true);
                self.issue_vector(LANES, self.lane_cycles(vl, 2 * bits), reads, vec![self.span(vd, true)]);
            }
            Nclip { vd, vs, shift } => {
                let vals = (0..vl as usize).map(|i| saturate(self.read(vs)[i] >> shift, self.w) as i64).collect();
                let reads = vec![self.span(vs, true)];
                self.write(vd, vals, false);
                self.issue_vector(LANES, self.lane_cycles(vl, 2 * bits), reads, vec![self.span(vd, false)]);
            }
            Redsum { vd, vs, acc } => {
                let mut s = self.read(acc)[0] as i32;
                for &v in &self.read(vs)[..vl as usize] {
                    s = sat_addsub(s, v as i32, AddSub::Add, self.w);
                }
                let reads = vec![self.span(vs, false), self.span(acc, false)];
                self.write(vd, vec![s as i64], false);
                let simd = (self.cfg.lane_word_bits / bits).max(1);
                self.issue_vector(LANES, exe::reduce_cycles(vl, self.cfg.n_lane, simd), reads, vec![self.span(vd, false)]);
            }
            Spill { vs, slot, len, wide } => {
                debug_assert_eq!(self.wide_at(vs), wide);
                let vals = self.read(vs)[..len as usize].to_vec();
                let bytes: Vec<u8> = if wide {
                    vals.iter().flat_map(|&v| (v as i32).to_le_bytes()).collect()
                } else {
                    vals.iter().flat_map(|&v| (v as i16).to_le_bytes()).collect()
                };
                self.mem.write(slot, &bytes)?;
                let cost = self.unit_stride(len, wide);
                self.issue_vector(MEM, cost, vec![self.span(vs, wide)], vec![self.mem_res()]);
            }
            Fill { vd, slot, len, wide } => {
                let eb = if wide { 4 } else { 2 };
                let raw = self.mem.peek(slot, len as u64 * eb)?;
                let vals: Vec<i64> = if wide {
                    raw.chunks_exact(4).map(|c| i32::from_le_bytes([c[0], c[1], c[2], c[3]]) as i64).collect()
                } else {
                    raw.chunks_exact(2).map(|c| i16::from_le_bytes([c[0], c[1]]) as i64).collect()
                };
                self.write(vd, vals, wide);
                let cost = self.unit_stride(len, wide);
                self.issue_vector(MEM, cost, vec![self.mem_res()], vec![self.span(vd, wide)]);
            }
        }
        Ok(())
    }

    fn cycles(&self) -> u64 {
        self.next_issue.max(self.last_commit)
    }
}

/// Memory bump allocator shared by the code generators.
struct Mem {
    next: u64,
}

impl Mem {
    fn take(&mut self, bytes: u64) -> u64 {
        let a = self.next;
        self.next = (a + bytes).next_multiple_of(64);
        a
    }
}

/// A generated kernel: stream, memory image and output location.
struct Generated {
    gen: Gen,
    image: Vec<(u64, Vec<i32>)>,
    out_addr: u64,
    out_len: usize,
    mem_end: u64,
}

// scalar registers used by the generated code
const X_ROW: u8 = 10;
const X_STEP_A: u8 = 20;
const X_STEP_B: u8 = 21;
const X_HALF: u8 = 22;

#[allow(clippy::too_many_arguments)]
fn gen_matmul(cfg: &BaselineConfig, lmul: u32, style: MatmulStyle, m: u32, n: u32, k: u32, a: &[i32], b: &[i32]) -> Result<Generated, BenchError> {
    let w = ElemWidth::E16;
    let eb = 2u64;
    let mut mem = Mem { next: 0x1000 };
    let addr_a = mem.take((m * n) as u64 * eb);
    let addr_b = mem.take((n * k) as u64 * eb);
    let addr_c = mem.take((m * k) as u64 * eb);
    let mut image = vec![(addr_a, a.to_vec()), (addr_b, b.to_vec())];
    let mut g = Gen::new(lmul);
    let strip = cfg.vlmax(lmul, w);
    match style {
        MatmulStyle::Hadamard => {
            let mk = m * k;
            if (m * n).max(n * k) as u64 * eb > u16::MAX as u64 {
                return Err(BenchError::UnsupportedKernel("matmul operands exceed 16-bit offsets".into()));
            }
            let idx_a: Vec<i32> = (0..mk).map(|i| ((i / k) * n * 2) as i16 as i32).collect();
            let idx_b: Vec<i32> = (0..mk).map(|i| ((i % k) * 2) as i16 as i32).collect();
            let (addr_ia, addr_ib) = (mem.take(mk as u64 * 2), mem.take(mk as u64 * 2));
            image.push((addr_ia, idx_a));
            image.push((addr_ib, idx_b));
            g.li(X_STEP_A, 2);
            g.li(X_STEP_B, (2 * k) as i32);
            g.scalar(&["li"]);
            for s0 in (0..mk).step_by(strip as usize) {
                g.vsetvli(strip.min(mk - s0));
                let off = s0 as u64 * eb;
                let mut ia = g.vle(addr_ia + off, 0);
                let mut ib = g.vle(addr_ib + off, 0);
                let mut c = g.splat(0);
                for _ in 0..n {
                    let asv = g.vlxe(addr_a, ia);
                    let bsv = g.vlxe(addr_b, ib);
                    let p = g.arith(VArith::Mul { shift: 0 }, asv, bsv);
                    c = g.arith(VArith::SAdd, c, p);
                    ia = g.arith_x(VArith::IAdd, ia, X_STEP_A);
                    ib = g.arith_x(VArith::IAdd, ib, X_STEP_B);
                    g.scalar(&["addi", "bne"]);
                }
                g.vse(c, addr_c + off, 0);
                g.scalar(&["sub", "add", "add", "add", "bnez"]);
            }
        }
        MatmulStyle::RowBroadcast => {
            for rb in (0..m).step_by(4) {
                let rows = 4.min(m - rb);
                for c0 in (0..k).step_by(strip as usize) {
                    g.vsetvli(strip.min(k - c0));
                    let mut acc: Vec<u32> = (0..rows).map(|_| g.splat(0)).collect();
                    for j in 0..n {
                        let bv = g.vle(addr_b + (j * k + c0) as u64 * eb, 0);
                        for (r, c) in acc.iter_mut().enumerate() {
                            let xr = X_ROW + r as u8;
                            g.lh(xr, addr_a + ((rb + r as u32) * n + j) as u64 * eb);
                            let t = g.arith_x(VArith::Mul { shift: 0 }, bv, xr);
                            *c = g.arith(VArith::SAdd, *c, t);
                        }
                        g.scalar(&["addi", "add", "bne"]);
                    }
                    for (r, &c) in acc.iter().enumerate() {
                        g.vse(c, addr_c + ((rb + r as u32) * k + c0) as u64 * eb, 0);
                    }
                    g.scalar(&["sub", "add", "add", "bnez"]);
                }
                g.scalar(&["addi", "add", "bne"]);
            }
        }
    }
    Ok(Generated { gen: g, image, out_addr: addr_c, out_len: (m * k) as usize, mem_end: mem.next })
}

/// Constant-geometry radix-2 DIF FFT on split real and imaginary arrays:
/// every stage pairs `j` with `j + N/2` and writes `2j`, `2j+1`. The twiddle
/// exponents and the final reordering come from tracking which in-place
/// position each slot holds.
fn gen_fft(cfg: &BaselineConfig, lmul: u32, n: u32, x: &[i32]) -> Result<Generated, BenchError> {
    let w = ElemWidth::E16;
    let stages = n.trailing_zeros();
    let half_n = n / 2;
    let mut mem = Mem { next: 0x1000 };
    let addr_x = mem.take(4 * n as u64);
    let addr_y = mem.take(4 * n as u64);
    let bufs = [[mem.take(2 * n as u64), mem.take(2 * n as u64)], [mem.take(2 * n as u64), mem.take(2 * n as u64)]];
    let mut image = vec![(addr_x, x.to_vec())];

    // slot p holds in-place position held[p]
    let mut held: Vec<u32> = (0..n).collect();
    let mut tw_addr = Vec::new();
    for s in 0..stages {
        let h = n >> (s + 1);
        let mut re = Vec::with_capacity(half_n as usize);
        let mut im = Vec::with_capacity(half_n as usize);
        let mut next = vec![0; n as usize];
        for j in 0..half_n {
            let (a, b) = (held[j as usize], held[(j + half_n) as usize]);
            debug_assert!(b == a + h && a % (2 * h) < h);
            let (tr, ti) = twiddle((a % (2 * h)) << s, n);
            re.push(tr);
            im.push(ti);
            next[2 * j as usize] = a;
            next[2 * j as usize + 1] = b;
        }
        held = next;
        if s + 1 < stages {
            let (ar, ai) = (mem.take(2 * half_n as u64), mem.take(2 * half_n as u64));
            image.push((ar, re));
            image.push((ai, im));
            tw_addr.push((ar, ai));
        }
    }
    let mut slot_of = vec![0u32; n as usize];
    for (p, &q) in held.iter().enumerate() {
        slot_of[bit_reverse(q, stages) as usize] = p as u32;
    }
    let addr_perm = mem.take(2 * n as u64);
    image.push((addr_perm, slot_of.iter().map(|&p| (p * 2) as i16 as i32).collect()));

    let mut g = Gen::new(lmul);
    let strip = cfg.vlmax(lmul, w);
    g.li(X_HALF, TWIDDLE_ONE);
    for s in 0..stages {
        let last = s + 1 == stages;
        let (src, dst) = (bufs[(s % 2) as usize], bufs[1 - (s % 2) as usize]);
        g.scalar(&["mv", "mv", "mv", "li"]);
        for j0 in (0..half_n).step_by(strip as usize) {
            g.vsetvli(strip.min(half_n - j0));
            let j = j0 as u64;
            let (ar, ai, br, bi) = if s == 0 {
                let b = addr_x + 4 * half_n as u64;
                (g.vle(addr_x + 4 * j, 4), g.vle(addr_x + 4 * j + 2, 4), g.vle(b + 4 * j, 4), g.vle(b + 4 * j + 2, 4))
            } else {
                let o = 2 * half_n as u64;
                (g.vle(src[0] + 2 * j, 0), g.vle(src[1] + 2 * j, 0), g.vle(src[0] + o + 2 * j, 0), g.vle(src[1] + o + 2 * j, 0))
            };
            let sr = g.arith(VArith::SAdd, ar, br);
            let sr = g.arith_x(VArith::Mul { shift: FFT_SHIFT }, sr, X_HALF);
            g.vse(sr, dst[0] + 4 * j, 4);
            let si = g.arith(VArith::SAdd, ai, bi);
            let si = g.arith_x(VArith::Mul { shift: FFT_SHIFT }, si, X_HALF);
            g.vse(si, dst[1] + 4 * j, 4);
            let dr = g.arith(VArith::SSub, ar, br);
            let di = g.arith(VArith::SSub, ai, bi);
            let (yr, yi) = if last {
                (g.arith_x(VArith::Mul { shift: FFT_SHIFT }, dr, X_HALF), g.arith_x(VArith::Mul { shift: FFT_SHIFT }, di, X_HALF))
            } else {
                let (ta, tb) = tw_addr[s as usize];
                let twr = g.vle(ta + 2 * j, 0);
                let twi = g.vle(tb + 2 * j, 0);
                let p1 = g.wmul(dr, twr)?;
                let p2 = g.wmul(di, twi)?;
                let re = g.wadd(p1, p2, true);
                let yr = g.nclip(re, FFT_SHIFT);
                let p3 = g.wmul(dr, twi)?;
                let p4 = g.wmul(di, twr)?;
                let im = g.wadd(p3, p4, false);
                (yr, g.nclip(im, FFT_SHIFT))
            };
            g.vse(yr, dst[0] + 4 * j + 2, 4);
            g.vse(yi, dst[1] + 4 * j + 2, 4);
            g.scalar(&["sub", "slli", "add", "add", "add", "bnez"]);
        }
    }
    // natural order, interleaved
    let fin = bufs[(stages % 2) as usize];
    g.scalar(&["mv", "li"]);
    for f0 in (0..n).step_by(strip as usize) {
        g.vsetvli(strip.min(n - f0));
        let f = f0 as u64;
        let idx = g.vle(addr_perm + 2 * f, 0);
        let re = g.vlxe(fin[0], idx);
        let im = g.vlxe(fin[1], idx);
        g.vse(re, addr_y + 4 * f, 4);
        g.vse(im, addr_y + 4 * f + 2, 4);
        g.scalar(&["sub", "slli", "add", "add", "bnez"]);
    }
    Ok(Generated { gen: g, image, out_addr: addr_y, out_len: 2 * n as usize, mem_end: mem.next })
}

/// Strip loop of loads, each folded into a running reduction.
fn gen_redsum(cfg: &BaselineConfig, lmul: u32, m: u32, x: &[i32]) -> Result<Generated, BenchError> {
    let w = ElemWidth::E16;
    let mut mem = Mem { next: 0x1000 };
    let addr_x = mem.take(m as u64 * 2);
    let addr_out = mem.take(64);
    let mut g = Gen::new(lmul);
    let strip = cfg.vlmax(lmul, w);
    g.vsetvli(1);
    let mut acc = g.splat(0);
    for s0 in (0..m).step_by(strip as usize) {
        g.vsetvli(strip.min(m - s0));
        let v = g.vle(addr_x + s0 as u64 * 2, 0);
        acc = g.redsum(v, acc);
        g.scalar(&["sub", "slli", "add", "bnez"]);
    }
    g.vsetvli(1);
    g.vse(acc, addr_out, 0);
    Ok(Generated { gen: g, image: vec![(addr_x, x.to_vec())], out_addr: addr_out, out_len: 1, mem_end: mem.next })
}

/// Result of one baseline run.
#[derive(Debug, Clone)]
pub struct BaselineRun {
    pub output: Vec<i32>,
    pub report: RunReport,
    pub lmul: u32,
    /// Executed `vsetvli` count.
    pub strips: u64,
    /// The allocated instruction stream.
    pub stream: Vec<BInstr>,
}

fn run_with_lmul(spec: &KernelSpec, cfg: &BaselineConfig, lmul: u32, inputs: &[Vec<i32>]) -> Result<BaselineRun, BenchError> {
    let gen = match spec.kind {
        KernelKind::Matmul { m, n, k } => gen_matmul(cfg, lmul, cfg.matmul, m, n, k, &inputs[0], &inputs[1])?,
        KernelKind::Fft { n } => gen_fft(cfg, lmul, n, &inputs[0])?,
        KernelKind::Redsum { m } => gen_redsum(cfg, lmul, m, &inputs[0])?,
    };
    let alloc = allocate(&gen.gen, cfg.n_regs, gen.mem_end)?;
    let mem_end = gen.mem_end + alloc.spill_bytes;
    if mem_end > cfg.mem_bytes {
        return Err(BenchError::UnsupportedKernel(format!("needs {mem_end} bytes of memory, baseline has {}", cfg.mem_bytes)));
    }
    let mut ex = Exec {
        cfg,
        lmul,
        w: ElemWidth::E16,
        regs: HashMap::new(),
        x: [0; 32],
        mem: MemoryModel::new(0, cfg.mem_bytes),
        vl: 0,
        next_issue: 0,
        unit_free: [0; 2],
        last_commit: 0,
        inflight: VecDeque::new(),
        breakdown: InstrBreakdown::default(),
        strips: 0,
    };
    for (addr, vals) in &gen.image {
        store_elems(&mut ex.mem, *addr, vals, ElemWidth::E16)?;
    }
    for op in &alloc.ops {
        ex.step(op)?;
    }
    let output = load_elems(&ex.mem, gen.out_addr, gen.out_len, ElemWidth::E16)?;
    let report = RunReport {
        kernel: spec.name(),
        config: json!({
            "machine": "baseline",
            "n_lane": cfg.n_lane,
            "n_regs": cfg.n_regs,
            "vlen_bits": cfg.vlen_bits,
            "lane_word_bits": cfg.lane_word_bits,
            "mem_latency_cycles": cfg.mem_latency_cycles,
            "n_id": cfg.n_id,
            "lmul": lmul,
            "matmul_style": cfg.matmul,
            "select": cfg.select,
            "vew": 16,
            "seed": spec.seed,
        }),
        cycles: ex.cycles(),
        breakdown: ex.breakdown,
        digest: result_digest(&output, ElemWidth::E16),
    };
    Ok(BaselineRun { output, report, lmul, strips: ex.strips, stream: alloc.ops })
}

/// Runs `spec` on the baseline with the seeded inputs.
pub fn run_baseline(spec: &KernelSpec, cfg: &BaselineConfig) -> Result<BaselineRun, BenchError> {
    run_baseline_with(spec, cfg, &spec.inputs())
}

/// Runs `spec` on caller-provided inputs. Without a fixed LMUL every legal
/// grouping is tried and the best under `cfg.select` wins, ties broken by the
/// other metric and then by the smaller LMUL.
pub fn run_baseline_with(spec: &KernelSpec, cfg: &BaselineConfig, inputs: &[Vec<i32>]) -> Result<BaselineRun, BenchError> {
    spec.validate()?;
    if spec.vew != ElemWidth::E16 {
        return Err(BenchError::UnsupportedKernel(format!("{}: baseline models 16-bit elements only", spec.name())));
    }
    let candidates: Vec<u32> = match cfg.lmul {
        Some(l) if [1, 2, 4, 8].contains(&l) => vec![l],
        Some(l) => return Err(BenchError::UnsupportedKernel(format!("LMUL {l} is not a power of two up to 8"))),
        None => vec![1, 2, 4, 8],
    };
    let mut best: Option<BaselineRun> = None;
    let mut last_err = None;
    for l in candidates {
        match run_with_lmul(spec, cfg, l, inputs) {
            Ok(r) => {
                let key = |r: &BaselineRun| match cfg.select {
                    Objective::Cycles => (r.report.cycles, r.report.breakdown.total()),
                    Objective::Instructions => (r.report.breakdown.total(), r.report.cycles),
                };
                if best.as_ref().is_none_or(|b| key(&r) < key(b)) {
                    best = Some(r);
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    best.ok_or_else(|| last_err.expect("at least one candidate"))
}
