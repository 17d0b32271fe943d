//! UVP kernel programs: Hadamard-product matmul, DIF FFT and reduction sum.

use std::f64::consts::PI;

use serde_json::json;

use super::{result_digest, BenchError, InstrBreakdown, KernelKind, KernelRun, KernelSpec, RunReport};
use crate::datapath::ElemWidth;
use crate::frontend::scalar::{self, BranchCond, ScalarOp};
use crate::frontend::{AsmProgram, Statement};
use crate::isa::{CsrId, DecodedInstr, Mnemonic, REG_INDEX_MAX};
use crate::machine::{MachineConfig, MachineError, MachineState, MemoryModel};
use crate::sequencer::{self, SimOptions};

/// Q14 one, the twiddle scale.
pub const TWIDDLE_ONE: i32 = 1 << 14;
/// Multiply shift used by every FFT stage: Q14 twiddles plus one bit of
/// per-stage scaling.
pub const FFT_SHIFT: u32 = 15;

// scalar register assignment
const T0: u8 = 5;
const T1: u8 = 6;
const T2: u8 = 7;
const T3: u8 = 28;
const S0: u8 = 8;
const S1: u8 = 9;
const S2: u8 = 18;
const S3: u8 = 19;
const S4: u8 = 20;
const A1: u8 = 11;
const A2: u8 = 12;
const A3: u8 = 13;
const A4: u8 = 14;

/// Writes elements of width `w` at `addr`.
pub fn store_elems(mem: &mut MemoryModel, addr: u64, vals: &[i32], w: ElemWidth) -> Result<(), MachineError> {
    match w {
        ElemWidth::E8 => mem.write(addr, &vals.iter().map(|&v| v as i8 as u8).collect::<Vec<_>>()),
        ElemWidth::E16 => mem.write_i16s(addr, &vals.iter().map(|&v| v as i16).collect::<Vec<_>>()),
    }
}

pub fn load_elems(mem: &MemoryModel, addr: u64, n: usize, w: ElemWidth) -> Result<Vec<i32>, MachineError> {
    Ok(match w {
        ElemWidth::E8 => mem.peek(addr, n as u64)?.iter().map(|&b| b as i8 as i32).collect(),
        ElemWidth::E16 => mem.read_i16s(addr, n)?.into_iter().map(i32::from).collect(),
    })
}

/// Bump allocator for register groups and memory buffers.
struct Layout {
    next_reg: u32,
    reg_bytes: u32,
    next_addr: u64,
}

impl Layout {
    fn new(cfg: &MachineConfig) -> Self {
        Self { next_reg: 0, reg_bytes: cfg.vlen_bits / 8, next_addr: 0x1000 }
    }

    fn regs(&mut self, elems: u32, w: ElemWidth) -> u16 {
        let head = self.next_reg;
        self.next_reg += (elems * w.bytes() as u32).div_ceil(self.reg_bytes);
        head.min(u16::MAX as u32) as u16
    }

    fn mem(&mut self, bytes: u64) -> u64 {
        let a = self.next_addr;
        self.next_addr = (a + bytes).next_multiple_of(64);
        a
    }

    fn check(&self, cfg: &MachineConfig) -> Result<(), BenchError> {
        let have = (cfg.vrf_depth as u64).min(REG_INDEX_MAX as u64 + 1);
        if self.next_reg as u64 > have {
            return Err(BenchError::GroupOverflow { need: self.next_reg as u64, have });
        }
        if self.next_addr > cfg.mem_bytes {
            return Err(BenchError::Machine(MachineError::InvalidConfig(format!(
                "kernel needs {} bytes of memory, machine has {}",
                self.next_addr, cfg.mem_bytes
            ))));
        }
        Ok(())
    }
}

/// Statement list under construction.
struct Builder {
    out: Vec<Statement>,
    w: ElemWidth,
}

impl Builder {
    fn new(w: ElemWidth) -> Self {
        Self { out: Vec::new(), w }
    }

    fn here(&self) -> usize {
        self.out.len()
    }

    fn s(&mut self, op: ScalarOp) {
        self.out.push(Statement::Scalar(op));
    }

    fn li(&mut self, rd: u8, v: u64) {
        for op in scalar::li(rd, v as i32) {
            self.s(op);
        }
    }

    fn v(&mut self, m: Mnemonic, vd: u16, vs1: u16, vs2: u16, avl: u8) {
        self.vw(m, self.w, vd, vs1, vs2, avl);
    }

    fn vw(&mut self, m: Mnemonic, w: ElemWidth, vd: u16, vs1: u16, vs2: u16, avl: u8) {
        self.out.push(Statement::Uvp(DecodedInstr::new(m, w, false, vd, vs1, vs2, avl)));
    }

    fn csr(&mut self, c: CsrId, rs: u8) {
        self.v(Mnemonic::VsetCsr, c.index(), rs as u16, 0, 0);
    }

    fn vle(&mut self, vd: u16, addr_reg: u8, avl: u8) {
        self.v(Mnemonic::Vle, vd, addr_reg as u16, 0, avl);
    }

    fn vse(&mut self, vs: u16, addr_reg: u8, avl: u8) {
        self.v(Mnemonic::Vse, 0, addr_reg as u16, vs, avl);
    }

    fn finish(self) -> AsmProgram {
        AsmProgram::new(self.out)
    }
}

/// A built kernel: program, initial memory and where the result lands.
pub struct Prepared {
    pub program: AsmProgram,
    pub state: MachineState,
    pub out_addr: u64,
    pub out_len: usize,
}

/// Permutation vectors for the first accumulation step: `π_A[r·k+c] = r·n`
/// and `π_B[r·k+c] = c`.
pub fn matmul_perms(m: u32, n: u32, k: u32) -> (Vec<i32>, Vec<i32>) {
    let pa = (0..m * k).map(|i| ((i / k) * n) as i32).collect();
    let pb = (0..m * k).map(|i| (i % k) as i32).collect();
    (pa, pb)
}

/// `C = A·B` as `n` rounds of gather, gather, multiply, accumulate. Each round
/// bumps `π_A` by one and `π_B` by `k`.
pub fn prepare_matmul(cfg: &MachineConfig, m: u32, n: u32, k: u32, a: &[i32], b: &[i32], w: ElemWidth) -> Result<Prepared, BenchError> {
    let (mn, nk, mk) = (m * n, n * k, m * k);
    let mut l = Layout::new(cfg);
    let eb = w.bytes() as u64;
    let (addr_a, addr_b) = (l.mem(mn as u64 * eb), l.mem(nk as u64 * eb));
    let (addr_pa, addr_pb) = (l.mem(mk as u64 * 2), l.mem(mk as u64 * 2));
    let addr_c = l.mem(mk as u64 * eb);
    let (ra, rb) = (l.regs(mn, w), l.regs(nk, w));
    let (rpa, rpb) = (l.regs(mk, ElemWidth::E16), l.regs(mk, ElemWidth::E16));
    let (ras, rbs, rp, rc) = (l.regs(mk, w), l.regs(mk, w), l.regs(mk, w), l.regs(mk, w));
    l.check(cfg)?;
    if mn.max(nk) > u16::MAX as u32 + 1 {
        return Err(BenchError::UnsupportedKernel(format!("matmul({m},{n},{k}): operands exceed 16-bit indexing")));
    }

    let mut st = MachineState::new(cfg.clone())?;
    let (pa, pb) = matmul_perms(m, n, k);
    store_elems(&mut st.mem, addr_a, a, w)?;
    store_elems(&mut st.mem, addr_b, b, w)?;
    store_elems(&mut st.mem, addr_pa, &pa, ElemWidth::E16)?;
    store_elems(&mut st.mem, addr_pb, &pb, ElemWidth::E16)?;

    let mut p = Builder::new(w);
    use Mnemonic::*;
    p.li(T0, mn as u64);
    p.li(T1, nk as u64);
    p.li(T2, mk as u64);
    p.li(S0, addr_a);
    p.vle(ra, S0, T0);
    p.li(S0, addr_b);
    p.vle(rb, S0, T1);
    p.li(S0, addr_pa);
    p.vw(Vle, ElemWidth::E16, rpa, S0 as u16, 0, T2);
    p.li(S0, addr_pb);
    p.vw(Vle, ElemWidth::E16, rpb, S0 as u16, 0, T2);
    p.csr(CsrId::Vsglen, T2);
    p.li(S3, k as u64);
    p.li(S4, 1);
    p.v(MovS, rc, 0, 0, T2);
    p.li(S1, 0);
    p.li(S2, n as u64);
    let top = p.here();
    p.v(Gather, ras, ra, rpa, T0);
    p.v(Gather, rbs, rb, rpb, T1);
    p.v(Mul, rp, ras, rbs, T2);
    p.v(Add, rc, rc, rp, T2);
    p.vw(AddS, ElemWidth::E16, rpa, S4 as u16, rpa, T2);
    p.vw(AddS, ElemWidth::E16, rpb, S3 as u16, rpb, T2);
    p.s(ScalarOp::Addi { rd: S1, rs1: S1, imm: 1 });
    p.s(ScalarOp::Branch { cond: BranchCond::Ne, rs1: S1, rs2: S2, target: top });
    p.li(S0, addr_c);
    p.vse(rc, S0, T2);
    Ok(Prepared { program: p.finish(), state: st, out_addr: addr_c, out_len: mk as usize })
}

/// Twiddle `W_N^e` in Q14: `round(cos) − i·round(sin)`.
pub fn twiddle(e: u32, n: u32) -> (i32, i32) {
    let th = 2.0 * PI * e as f64 / n as f64;
    ((TWIDDLE_ONE as f64 * th.cos()).round() as i32, -(TWIDDLE_ONE as f64 * th.sin()).round() as i32)
}

pub fn bit_reverse(x: u32, bits: u32) -> u32 {
    if bits == 0 {
        0
    } else {
        x.reverse_bits() >> (32 - bits)
    }
}

/// Geometry of the UVP FFT: the top halves of all butterflies of a stage sit
/// contiguously in `T[0..N)` and the bottom halves in `T[P..P+N)`, both as
/// interleaved complex int16.
#[derive(Debug, Clone, Copy)]
pub struct FftGeometry {
    pub n: u32,
    pub p: u32,
    pub stages: u32,
}

impl FftGeometry {
    pub fn new(n: u32, elems_per_reg: u32) -> Self {
        Self { n, p: n.next_multiple_of(elems_per_reg), stages: n.trailing_zeros() }
    }

    fn half(&self, s: u32) -> u32 {
        self.n >> (s + 1)
    }

    /// Array position of the top element of butterfly `k` in stage `s`.
    pub fn top(&self, s: u32, k: u32) -> u32 {
        let h = self.half(s);
        (k / h) * 2 * h + k % h
    }

    /// Where array position `pos` lives in the stage-`s` layout (real part).
    pub fn loc(&self, s: u32, pos: u32) -> u32 {
        let h = self.half(s);
        let (b, r) = (pos / (2 * h), pos % (2 * h));
        if r < h {
            2 * (b * h + r)
        } else {
            self.p + 2 * (b * h + r - h)
        }
    }

    /// Scatter indices moving stage `s` outputs into the stage `s+1` layout.
    /// Padding between the halves maps onto itself.
    pub fn sigma(&self, s: u32) -> Vec<i32> {
        let (n, p) = (self.n, self.p);
        let mut v: Vec<i32> = (0..p + n).map(|i| i as i32).collect();
        let h = self.half(s);
        for k in 0..n / 2 {
            let t = self.top(s, k);
            let (lt, lb) = (self.loc(s + 1, t), self.loc(s + 1, t + h));
            v[2 * k as usize] = lt as i32;
            v[2 * k as usize + 1] = lt as i32 + 1;
            v[(p + 2 * k) as usize] = lb as i32;
            v[(p + 2 * k) as usize + 1] = lb as i32 + 1;
        }
        v
    }

    /// Stage-`s` twiddles for the bottom halves, interleaved.
    pub fn twiddles(&self, s: u32) -> Vec<i32> {
        let h = self.half(s);
        (0..self.n / 2)
            .flat_map(|k| {
                let (re, im) = twiddle((k % h) << s, self.n);
                [re, im]
            })
            .collect()
    }

    /// Final gather: natural-order output from the last stage's layout.
    pub fn beta(&self) -> Vec<i32> {
        let last = self.stages - 1;
        (0..self.n)
            .flat_map(|f| {
                let l = self.loc(last, bit_reverse(f, self.stages)) as i32;
                [l, l + 1]
            })
            .collect()
    }
}

/// Radix-2 DIF FFT with the butterfly top scaled by one half and the bottom
/// multiplied by the Q14 twiddle with a 15-bit shift, one stage at a time:
/// butterflies, then a scatter into the next stage's layout. Two stages per
/// loop iteration ping-pong between the two buffers.
pub fn prepare_fft(cfg: &MachineConfig, n: u32, x: &[i32]) -> Result<Prepared, BenchError> {
    let w = ElemWidth::E16;
    let g = FftGeometry::new(n, cfg.elems_per_reg(w));
    let (p, s_total) = (g.p, g.stages);
    let scatter_stages = s_total - 1;
    let mut l = Layout::new(cfg);
    let addr_x = l.mem(2 * n as u64 * 2);
    let addr_y = l.mem(2 * n as u64 * 2);
    let addr_beta = l.mem(2 * n as u64 * 2);
    let sig_bytes = (p + n) as u64 * 2;
    let tw_bytes = n as u64 * 2;
    let addr_sig = l.mem(sig_bytes * scatter_stages.max(1) as u64);
    let addr_tw = l.mem(tw_bytes * scatter_stages.max(1) as u64);
    let t = [l.regs(p + n, w), l.regs(p + n, w)];
    let wtmp = l.regs(n, w);
    let sig = [l.regs(p + n, w), l.regs(p + n, w)];
    let tw = [l.regs(n, w), l.regs(n, w)];
    l.check(cfg)?;
    let v_off = (p * 2 / (cfg.vlen_bits / 8)) as u16;

    let mut st = MachineState::new(cfg.clone())?;
    store_elems(&mut st.mem, addr_x, x, w)?;
    store_elems(&mut st.mem, addr_beta, &g.beta(), w)?;
    for s in 0..scatter_stages {
        store_elems(&mut st.mem, addr_sig + s as u64 * sig_bytes, &g.sigma(s), w)?;
        store_elems(&mut st.mem, addr_tw + s as u64 * tw_bytes, &g.twiddles(s), w)?;
    }

    use Mnemonic::*;
    let mut b = Builder::new(w);
    b.li(T0, n as u64);
    b.li(T1, (p + n) as u64);
    b.li(T2, 2 * n as u64);
    b.li(T3, FFT_SHIFT as u64);
    b.csr(CsrId::Vshamt, T3);
    b.csr(CsrId::Vsglen, T1);
    b.li(S4, TWIDDLE_ONE as u64);
    b.li(A1, addr_sig);
    b.li(A2, addr_tw);
    b.li(A3, sig_bytes);
    b.li(A4, tw_bytes);
    b.li(S0, addr_x);
    b.vle(t[0], S0, T0);
    b.li(S0, addr_x + 2 * n as u64);
    b.vle(t[0] + v_off, S0, T0);

    let stage = |b: &mut Builder, src: usize, buf: usize| {
        let (u, v) = (t[src], t[src] + v_off);
        b.vle(sig[buf], A1, T1);
        b.vle(tw[buf], A2, T0);
        b.v(Sub, wtmp, u, v, T0);
        b.v(Add, u, u, v, T0);
        b.v(MulS, u, S4 as u16, u, T0);
        b.v(CplxMul, v, wtmp, tw[buf], T0);
        b.v(Scatter, t[1 - src], t[src], sig[buf], T1);
        b.s(ScalarOp::Add { rd: A1, rs1: A1, rs2: A3 });
        b.s(ScalarOp::Add { rd: A2, rs1: A2, rs2: A4 });
    };
    let pairs = scatter_stages / 2;
    if pairs > 0 {
        b.li(S1, pairs as u64);
        let top = b.here();
        stage(&mut b, 0, 0);
        stage(&mut b, 1, 1);
        b.s(ScalarOp::Addi { rd: S1, rs1: S1, imm: -1 });
        b.s(ScalarOp::Branch { cond: BranchCond::Ne, rs1: S1, rs2: 0, target: top });
    }
    let mut cur = 0;
    if scatter_stages % 2 == 1 {
        stage(&mut b, 0, 0);
        cur = 1;
    }
    // last stage: every twiddle is one, so both halves just scale
    let (u, v) = (t[cur], t[cur] + v_off);
    b.li(S0, addr_beta);
    b.vle(sig[0], S0, T2);
    b.v(Sub, wtmp, u, v, T0);
    b.v(Add, u, u, v, T0);
    b.v(MulS, u, S4 as u16, u, T0);
    b.v(MulS, v, S4 as u16, wtmp, T0);
    b.csr(CsrId::Vsglen, T2);
    b.v(Gather, t[1 - cur], t[cur], sig[0], T1);
    b.li(S0, addr_y);
    b.vse(t[1 - cur], S0, T2);
    Ok(Prepared { program: b.finish(), state: st, out_addr: addr_y, out_len: 2 * n as usize })
}

/// Load, reduce, store one element.
pub fn prepare_redsum(cfg: &MachineConfig, m: u32, x: &[i32], w: ElemWidth) -> Result<Prepared, BenchError> {
    let mut l = Layout::new(cfg);
    let addr_x = l.mem(m as u64 * w.bytes() as u64);
    let addr_out = l.mem(w.bytes() as u64);
    let (rx, rd) = (l.regs(m, w), l.regs(1, w));
    l.check(cfg)?;
    let mut st = MachineState::new(cfg.clone())?;
    store_elems(&mut st.mem, addr_x, x, w)?;
    let mut b = Builder::new(w);
    b.li(T0, m as u64);
    b.li(T1, 1);
    b.li(S0, addr_x);
    b.vle(rx, S0, T0);
    b.v(Mnemonic::RedSum, rd, 0, rx, T0);
    b.li(S0, addr_out);
    b.vse(rd, S0, T1);
    Ok(Prepared { program: b.finish(), state: st, out_addr: addr_out, out_len: 1 })
}

/// Builds the program for `spec` over the given inputs.
pub fn prepare(spec: &KernelSpec, cfg: &MachineConfig, inputs: &[Vec<i32>]) -> Result<Prepared, BenchError> {
    spec.validate()?;
    match spec.kind {
        KernelKind::Matmul { m, n, k } => prepare_matmul(cfg, m, n, k, &inputs[0], &inputs[1], spec.vew),
        KernelKind::Fft { n } => prepare_fft(cfg, n, &inputs[0]),
        KernelKind::Redsum { m } => prepare_redsum(cfg, m, &inputs[0], spec.vew),
    }
}

/// Runs a prepared kernel and collects its output and report.
pub fn execute(spec: &KernelSpec, cfg: &MachineConfig, prep: Prepared, opts: SimOptions) -> Result<KernelRun, BenchError> {
    let Prepared { program, mut state, out_addr, out_len } = prep;
    let (r, trace) = sequencer::run(&program, &mut state, opts)?;
    let output = load_elems(&state.mem, out_addr, out_len, spec.vew)?;
    let report = RunReport {
        kernel: spec.name(),
        config: json!({
            "machine": "uvp",
            "n_lane": cfg.n_lane,
            "vrf_depth": cfg.vrf_depth,
            "vlen_bits": cfg.vlen_bits,
            "lane_word_bits": cfg.lane_word_bits,
            "mem_latency_cycles": cfg.mem_latency_cycles,
            "n_id": cfg.n_id,
            "vew": spec.vew.bits(),
            "seed": spec.seed,
        }),
        cycles: r.cycles,
        breakdown: InstrBreakdown::from_counts(&r.mnemonic_counts),
        digest: result_digest(&output, spec.vew),
    };
    Ok(KernelRun { output, report, trace })
}

/// Runs `spec` on the seeded inputs.
pub fn run_uvp(spec: &KernelSpec, cfg: &MachineConfig, opts: SimOptions) -> Result<KernelRun, BenchError> {
    let inputs = spec.inputs();
    run_uvp_with(spec, cfg, &inputs, opts)
}

/// Runs `spec` on caller-provided inputs.
pub fn run_uvp_with(spec: &KernelSpec, cfg: &MachineConfig, inputs: &[Vec<i32>], opts: SimOptions) -> Result<KernelRun, BenchError> {
    let prep = prepare(spec, cfg, inputs)?;
    execute(spec, cfg, prep, opts)
}

/// `C = A·B`, row-major.
pub fn kernel_matmul(cfg: &MachineConfig, m: u32, n: u32, k: u32, a: &[i32], b: &[i32]) -> Result<KernelRun, BenchError> {
    run_uvp_with(&KernelSpec::matmul(m, n, k), cfg, &[a.to_vec(), b.to_vec()], SimOptions::default())
}

/// Spectrum of interleaved complex `x`, natural order, scaled by `1/N`.
pub fn kernel_fft(cfg: &MachineConfig, x: &[i32]) -> Result<KernelRun, BenchError> {
    run_uvp_with(&KernelSpec::fft(x.len() as u32 / 2), cfg, &[x.to_vec()], SimOptions::default())
}

pub fn kernel_redsum(cfg: &MachineConfig, x: &[i32]) -> Result<KernelRun, BenchError> {
    run_uvp_with(&KernelSpec::redsum(x.len() as u32), cfg, &[x.to_vec()], SimOptions::default())
}
