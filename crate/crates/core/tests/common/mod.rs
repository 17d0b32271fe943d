//! Independent oracles shared by the integration tests.
//!
//! Nothing here calls into the simulator's arithmetic, EXE or sequencer code;
//! the core types are only used as data carriers.
#![allow(dead_code)]

use std::f64::consts::PI;
use std::fmt::Write as _;

use rand::Rng;
use uvp_core::datapath::ElemWidth;
use uvp_core::frontend::{AsmProgram, BranchCond, ScalarOp, Statement};
use uvp_core::isa::{DecodedInstr, Mnemonic};
use uvp_core::machine::{MachineConfig, MachineState};

// ---- element arithmetic in i128 ----

pub fn lim(bits: u32) -> (i128, i128) {
    (-(1i128 << (bits - 1)), (1i128 << (bits - 1)) - 1)
}

pub fn clamp(v: i128, bits: u32) -> i32 {
    let (lo, hi) = lim(bits);
    v.clamp(lo, hi) as i32
}

pub fn wrap(v: i128, bits: u32) -> i32 {
    let m = 1i128 << bits;
    let r = v.rem_euclid(m);
    (if r >= m / 2 { r - m } else { r }) as i32
}

pub fn o_add(a: i32, b: i32, bits: u32) -> i32 {
    clamp(a as i128 + b as i128, bits)
}

pub fn o_sub(a: i32, b: i32, bits: u32) -> i32 {
    clamp(a as i128 - b as i128, bits)
}

/// Floor division by `2^sh` of the exact product.
pub fn o_mul(a: i32, b: i32, sh: u32, bits: u32) -> i32 {
    let p = a as i128 * b as i128;
    clamp(p.div_euclid(1i128 << sh), bits)
}

pub fn o_cplx(ar: i32, ai: i32, br: i32, bi: i32, sh: u32, bits: u32) -> (i32, i32) {
    let (ar, ai, br, bi) = (ar as i128, ai as i128, br as i128, bi as i128);
    let d = 1i128 << sh;
    (clamp((ar * br - ai * bi).div_euclid(d), bits), clamp((ar * bi + ai * br).div_euclid(d), bits))
}

/// `(value, saturated, divide_by_zero)`. Overflow saturates toward the sign
/// given by XOR of the operand sign bits.
pub fn o_div(d: i32, v: i32, s: u32, bits: u32) -> (i32, bool, bool) {
    let (lo, hi) = lim(bits);
    if v == 0 {
        return (if d < 0 { lo } else { hi } as i32, true, true);
    }
    let num = (d as i128) << s;
    let q = num / v as i128;
    if q < lo || q > hi {
        let neg = (d < 0) != (v < 0);
        (if neg { lo } else { hi } as i32, true, false)
    } else {
        (q as i32, false, false)
    }
}

// ---- EXE ----

pub fn o_gather(src: &[i32], idx: &[u16], n: usize) -> Option<Vec<i32>> {
    let mut out = Vec::with_capacity(n);
    for &i in &idx[..n] {
        out.push(*src.get(i as usize)?);
    }
    Some(out)
}

pub fn o_scatter(dst: &mut [i32], src: &[i32], idx: &[u16]) -> Option<()> {
    if idx[..src.len()].iter().any(|&i| i as usize >= dst.len()) {
        return None;
    }
    for (j, &v) in src.iter().enumerate() {
        dst[idx[j] as usize] = v;
    }
    Some(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Fold {
    Sum,
    Min,
    Max,
}

impl Fold {
    pub fn id(self, bits: u32) -> i32 {
        let (lo, hi) = lim(bits);
        match self {
            Fold::Sum => 0,
            Fold::Min => hi as i32,
            Fold::Max => lo as i32,
        }
    }

    pub fn f(self, a: i32, b: i32, bits: u32) -> i32 {
        match self {
            Fold::Sum => o_add(a, b, bits),
            Fold::Min => a.min(b),
            Fold::Max => a.max(b),
        }
    }
}

/// Element `e` folds into lane `e mod L` in order; then lanes pair up as
/// `(0,1),(2,3),…`, then `(0,2),(4,6),…`, until lane 0 holds the result.
pub fn o_tree_fold(vals: &[i32], n_lane: usize, op: Fold, bits: u32) -> i32 {
    let mut lanes = vec![op.id(bits); n_lane];
    for (e, &v) in vals.iter().enumerate() {
        lanes[e % n_lane] = op.f(lanes[e % n_lane], v, bits);
    }
    let mut level = lanes;
    while level.len() > 1 {
        level = level.chunks(2).map(|p| op.f(p[0], p[1], bits)).collect();
    }
    level[0]
}

// ---- kernels ----

/// Triple loop with per-product saturation and a saturating running sum over `t`.
pub fn o_matmul(m: usize, n: usize, k: usize, a: &[i32], b: &[i32], bits: u32) -> Vec<i32> {
    let mut c = vec![0; m * k];
    for i in 0..m {
        for j in 0..k {
            let mut acc = 0;
            for t in 0..n {
                acc = o_add(acc, o_mul(a[i * n + t], b[t * k + j], 0, bits), bits);
            }
            c[i * k + j] = acc;
        }
    }
    c
}

pub const Q14: i32 = 1 << 14;

pub fn o_twiddle(e: usize, n: usize) -> (i32, i32) {
    let th = 2.0 * PI * e as f64 / n as f64;
    ((th.cos() * Q14 as f64).round() as i32, -(th.sin() * Q14 as f64).round() as i32)
}

/// In-place radix-2 DIF over interleaved int16. Every butterfly halves the
/// top (`×2^14 >> 15`) and multiplies the difference by a Q14 twiddle with
/// a 15-bit shift. Output in natural order.
pub fn o_fft(x: &[i32]) -> Vec<i32> {
    let n = x.len() / 2;
    let mut re: Vec<i32> = x.iter().step_by(2).copied().collect();
    let mut im: Vec<i32> = x.iter().skip(1).step_by(2).copied().collect();
    let mut h = n / 2;
    let mut stride = 1;
    while h >= 1 {
        for base in (0..n).step_by(2 * h) {
            for r in 0..h {
                let (t, b) = (base + r, base + r + h);
                let (sr, si) = (o_add(re[t], re[b], 16), o_add(im[t], im[b], 16));
                let (dr, di) = (o_sub(re[t], re[b], 16), o_sub(im[t], im[b], 16));
                let (wr, wi) = o_twiddle(r * stride, n);
                let (br, bi) = o_cplx(dr, di, wr, wi, 15, 16);
                re[t] = o_mul(sr, Q14, 15, 16);
                im[t] = o_mul(si, Q14, 15, 16);
                re[b] = br;
                im[b] = bi;
            }
        }
        h /= 2;
        stride *= 2;
    }
    let bits = n.trailing_zeros();
    let mut out = vec![0; 2 * n];
    for f in 0..n {
        let p = if bits == 0 { 0 } else { f.reverse_bits() >> (usize::BITS - bits) };
        out[2 * f] = re[p];
        out[2 * f + 1] = im[p];
    }
    out
}

/// Double-precision DFT of interleaved input.
pub fn dft(x: &[i32]) -> Vec<(f64, f64)> {
    let n = x.len() / 2;
    (0..n)
        .map(|f| {
            let (mut sr, mut si) = (0.0, 0.0);
            for t in 0..n {
                let th = -2.0 * PI * ((f * t) % n) as f64 / n as f64;
                let (c, s) = (th.cos(), th.sin());
                let (xr, xi) = (x[2 * t] as f64, x[2 * t + 1] as f64);
                sr += xr * c - xi * s;
                si += xr * s + xi * c;
            }
            (sr, si)
        })
        .collect()
}

/// Signal-to-quantization-noise ratio in dB of `got` against `reference`.
pub fn sqnr_db(reference: &[(f64, f64)], got: &[(f64, f64)]) -> f64 {
    let sig: f64 = reference.iter().map(|(r, i)| r * r + i * i).sum();
    let noise: f64 = reference.iter().zip(got).map(|((a, b), (c, d))| (a - c).powi(2) + (b - d).powi(2)).sum();
    10.0 * (sig / noise).log10()
}

// ---- serial reference executor ----

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RefState {
    pub vlen_bytes: usize,
    pub depth: usize,
    pub n_lane: usize,
    pub vrf: Vec<u8>,
    pub mask: Vec<bool>,
    pub x: [u32; 32],
    /// vsglen, vrextra, vshamt
    pub csr: [u32; 3],
    pub mem: Vec<u8>,
    pub div_fault: bool,
}

fn bits_of(w: ElemWidth) -> u32 {
    match w {
        ElemWidth::E8 => 8,
        ElemWidth::E16 => 16,
    }
}

impl RefState {
    pub fn from_machine(st: &MachineState) -> Self {
        let words = st.mask.as_words();
        let n = st.mask.len() as usize;
        Self {
            vlen_bytes: st.cfg.vlen_bits as usize / 8,
            depth: st.cfg.vrf_depth as usize,
            n_lane: st.cfg.n_lane as usize,
            vrf: st.vrf_bytes().to_vec(),
            mask: (0..n).map(|i| words[i / 64] >> (i % 64) & 1 == 1).collect(),
            x: st.xregs,
            csr: [st.csr.vsglen, st.csr.vrextra, st.csr.vshamt],
            mem: st.mem.as_bytes().to_vec(),
            div_fault: st.div_fault,
        }
    }

    fn head(&self, field: u16) -> usize {
        ((self.csr[1] as usize) << 13) | field as usize
    }

    fn check_group(&self, head: usize, n: usize, bits: u32) -> Result<(), String> {
        if n == 0 {
            return Err("empty group".into());
        }
        let regs = (n * bits as usize).div_ceil(self.vlen_bytes * 8);
        if head + regs > self.depth {
            return Err(format!("group v{head}+{regs} exceeds depth {}", self.depth));
        }
        Ok(())
    }

    fn read(&self, head: usize, n: usize, bits: u32) -> Result<Vec<i32>, String> {
        self.check_group(head, n, bits)?;
        let base = head * self.vlen_bytes;
        Ok((0..n)
            .map(|i| match bits {
                8 => self.vrf[base + i] as i8 as i32,
                _ => i16::from_le_bytes([self.vrf[base + 2 * i], self.vrf[base + 2 * i + 1]]) as i32,
            })
            .collect())
    }

    fn write(&mut self, head: usize, bits: u32, vals: &[Option<i32>]) -> Result<(), String> {
        self.check_group(head, vals.len(), bits)?;
        let base = head * self.vlen_bytes;
        for (i, v) in vals.iter().enumerate() {
            let Some(v) = *v else { continue };
            match bits {
                8 => self.vrf[base + i] = v as i8 as u8,
                _ => self.vrf[base + 2 * i..base + 2 * i + 2].copy_from_slice(&(v as i16).to_le_bytes()),
            }
        }
        Ok(())
    }

    fn active(&self, vm: bool, i: usize) -> bool {
        !vm || self.mask[i]
    }

    fn gate(&self, vm: bool, vals: Vec<i32>) -> Vec<Option<i32>> {
        vals.into_iter().enumerate().map(|(i, v)| self.active(vm, i).then_some(v)).collect()
    }

    fn mem_range(&self, addr: usize, len: usize, align: usize) -> Result<(), String> {
        if !addr.is_multiple_of(align) || addr + len > self.mem.len() {
            return Err(format!("memory fault at {addr:#x}+{len}"));
        }
        Ok(())
    }

    fn set_x(&mut self, r: u8, v: u32) {
        if r != 0 {
            self.x[r as usize] = v;
        }
    }

    fn scalar(&mut self, op: &ScalarOp, pc: usize) -> Result<usize, String> {
        let x = self.x;
        match *op {
            ScalarOp::Add { rd, rs1, rs2 } => self.set_x(rd, x[rs1 as usize].wrapping_add(x[rs2 as usize])),
            ScalarOp::Sub { rd, rs1, rs2 } => self.set_x(rd, x[rs1 as usize].wrapping_sub(x[rs2 as usize])),
            ScalarOp::Addi { rd, rs1, imm } => self.set_x(rd, (x[rs1 as usize] as i64 + imm as i64) as u32),
            ScalarOp::Slli { rd, rs1, shamt } => self.set_x(rd, x[rs1 as usize].wrapping_shl(shamt as u32)),
            ScalarOp::Srli { rd, rs1, shamt } => self.set_x(rd, x[rs1 as usize].wrapping_shr(shamt as u32)),
            ScalarOp::Lui { rd, imm20 } => self.set_x(rd, imm20 << 12),
            ScalarOp::Lw { rd, rs1, imm } => {
                let a = (x[rs1 as usize] as i64 + imm as i64) as u32 as usize;
                self.mem_range(a, 4, 4)?;
                let v = u32::from_le_bytes(self.mem[a..a + 4].try_into().unwrap());
                self.set_x(rd, v);
            }
            ScalarOp::Sw { rs2, rs1, imm } => {
                let a = (x[rs1 as usize] as i64 + imm as i64) as u32 as usize;
                self.mem_range(a, 4, 4)?;
                self.mem[a..a + 4].copy_from_slice(&x[rs2 as usize].to_le_bytes());
            }
            ScalarOp::Branch { cond, rs1, rs2, target } => {
                let (a, b) = (x[rs1 as usize], x[rs2 as usize]);
                let taken = match cond {
                    BranchCond::Eq => a == b,
                    BranchCond::Ne => a != b,
                    BranchCond::Lt => (a as i32) < (b as i32),
                    BranchCond::Ge => (a as i32) >= (b as i32),
                };
                if taken {
                    return Ok(target);
                }
            }
            ScalarOp::Jal { rd, target } => {
                self.set_x(rd, 4 * (pc as u32 + 1));
                return Ok(target);
            }
            ScalarOp::Vsetvli { .. } => return Err("vsetvli is not a UVP statement".into()),
        }
        Ok(pc + 1)
    }

    fn vector(&mut self, i: &DecodedInstr) -> Result<(), String> {
        use Mnemonic::*;
        let bits = bits_of(i.vew);
        let avl = self.x[i.rs_avl as usize] as usize;
        if i.mnemonic == VsetCsr {
            let slot = i.vd_head as usize;
            if slot > 2 {
                return Err("bad csr".into());
            }
            self.csr[slot] = self.x[i.vs1_head as usize];
            return Ok(());
        }
        if avl == 0 {
            return Ok(());
        }
        let sh = self.csr[2].min(31);
        let vm = i.vmask;
        let (hd, h1, h2) = (self.head(i.vd_head), self.head(i.vs1_head), self.head(i.vs2_head));
        let sc = || clamp(self.x[i.vs1_head as usize] as i32 as i128, bits);
        let pair = |f: &dyn Fn(i32, i32) -> i32| -> Result<Vec<i32>, String> {
            let (a, b) = (self.read(h1, avl, bits)?, self.read(h2, avl, bits)?);
            Ok(a.iter().zip(&b).map(|(&p, &q)| f(p, q)).collect())
        };
        let cmp = |m: Mnemonic, a: i32, b: i32| match m {
            VSeq | Seq => a == b,
            VSne | Sne => a != b,
            VSlt | Slt => a < b,
            VSle | Sle => a <= b,
            VSgt | Sgt => a > b,
            _ => a >= b,
        };
        match i.mnemonic {
            Add | Sub | Mul | And | Or | Xor | Min | Max | VSeq | VSne | VSlt | VSle | VSgt | VSge => {
                let m = i.mnemonic;
                let out = pair(&|a, b| match m {
                    Add => o_add(a, b, bits),
                    Sub => o_sub(a, b, bits),
                    Mul => o_mul(a, b, sh, bits),
                    And => wrap((a & b) as i128, bits),
                    Or => wrap((a | b) as i128, bits),
                    Xor => wrap((a ^ b) as i128, bits),
                    Min => a.min(b),
                    Max => a.max(b),
                    _ => cmp(m, a, b) as i32,
                })?;
                self.check_group(hd, avl, bits)?;
                let g = self.gate(vm, out);
                self.write(hd, bits, &g)?;
            }
            Div => {
                let (a, b) = (self.read(h1, avl, bits)?, self.read(h2, avl, bits)?);
                let mut out = Vec::new();
                for e in 0..avl {
                    let (q, _, z) = o_div(a[e], b[e], sh, bits);
                    if z && self.active(vm, e) {
                        self.div_fault = true;
                    }
                    out.push(q);
                }
                self.check_group(hd, avl, bits)?;
                let g = self.gate(vm, out);
                self.write(hd, bits, &g)?;
            }
            CplxMul => {
                let (a, b) = (self.read(h1, avl, bits)?, self.read(h2, avl, bits)?);
                let mut out = vec![0; avl];
                for k in (0..avl).step_by(2) {
                    let (ai, bi) = if k + 1 < avl { (a[k + 1], b[k + 1]) } else { (0, 0) };
                    let (r, im) = o_cplx(a[k], ai, b[k], bi, sh, bits);
                    out[k] = r;
                    if k + 1 < avl {
                        out[k + 1] = im;
                    }
                }
                self.check_group(hd, avl, bits)?;
                let g = self.gate(vm, out);
                self.write(hd, bits, &g)?;
            }
            AddS | SubS | MulS | MovS | Vid => {
                let s = sc();
                let out: Vec<i32> = match i.mnemonic {
                    MovS => vec![s; avl],
                    Vid => (0..avl).map(|e| clamp(self.x[i.vs1_head as usize] as i32 as i128 + e as i128, bits)).collect(),
                    m => self
                        .read(h2, avl, bits)?
                        .into_iter()
                        .map(|v| match m {
                            AddS => o_add(v, s, bits),
                            SubS => o_sub(v, s, bits),
                            _ => o_mul(v, s, sh, bits),
                        })
                        .collect(),
                };
                self.check_group(hd, avl, bits)?;
                let g = self.gate(vm, out);
                self.write(hd, bits, &g)?;
            }
            Seq | Sne | Slt | Sle | Sgt | Sge | VmNot => {
                if avl > self.mask.len() {
                    return Err("mask overflow".into());
                }
                let new: Vec<bool> = if i.mnemonic == VmNot {
                    self.mask[..avl].iter().map(|b| !b).collect()
                } else {
                    let (a, b) = (self.read(h1, avl, bits)?, self.read(h2, avl, bits)?);
                    (0..avl).map(|e| cmp(i.mnemonic, a[e], b[e])).collect()
                };
                let old = self.mask.clone();
                for (e, b) in new.into_iter().enumerate() {
                    if !vm || old[e] {
                        self.mask[e] = b;
                    }
                }
            }
            Gather => {
                let n = self.csr[0] as usize;
                let src = self.read(h1, avl, bits)?;
                let idx: Vec<u16> = self.read(h2, n, 16)?.into_iter().map(|v| v as u16).collect();
                self.check_group(hd, n, bits)?;
                let out = o_gather(&src, &idx, n).ok_or("gather index fault")?;
                let g = self.gate(vm, out);
                self.write(hd, bits, &g)?;
            }
            Scatter => {
                let n = self.csr[0] as usize;
                let src = self.read(h1, avl, bits)?;
                let idx: Vec<u16> = self.read(h2, avl, 16)?.into_iter().map(|v| v as u16).collect();
                let mut dst = self.read(hd, n, bits)?;
                let live: Vec<i32> = src.iter().enumerate().filter(|&(e, _)| self.active(vm, e)).map(|(_, &v)| v).collect();
                let live_idx: Vec<u16> = idx.iter().enumerate().filter(|&(e, _)| self.active(vm, e)).map(|(_, &v)| v).collect();
                if idx.iter().any(|&k| k as usize >= n) {
                    return Err("scatter index fault".into());
                }
                o_scatter(&mut dst, &live, &live_idx).ok_or("scatter index fault")?;
                let all: Vec<Option<i32>> = dst.into_iter().map(Some).collect();
                self.write(hd, bits, &all)?;
            }
            Vle => {
                let addr = self.x[i.vs1_head as usize] as usize;
                let nb = (bits / 8) as usize;
                self.mem_range(addr, avl * nb, nb)?;
                let vals: Vec<i32> = (0..avl)
                    .map(|e| match nb {
                        1 => self.mem[addr + e] as i8 as i32,
                        _ => i16::from_le_bytes([self.mem[addr + 2 * e], self.mem[addr + 2 * e + 1]]) as i32,
                    })
                    .collect();
                self.check_group(hd, avl, bits)?;
                let g = self.gate(vm, vals);
                self.write(hd, bits, &g)?;
            }
            Vse => {
                let addr = self.x[i.vs1_head as usize] as usize;
                let nb = (bits / 8) as usize;
                self.mem_range(addr, avl * nb, nb)?;
                let vals = self.read(h2, avl, bits)?;
                for (e, v) in vals.into_iter().enumerate() {
                    if !self.active(vm, e) {
                        continue;
                    }
                    match nb {
                        1 => self.mem[addr + e] = v as i8 as u8,
                        _ => self.mem[addr + 2 * e..addr + 2 * e + 2].copy_from_slice(&(v as i16).to_le_bytes()),
                    }
                }
            }
            RedSum | RedMin | RedMax => {
                let op = match i.mnemonic {
                    RedSum => Fold::Sum,
                    RedMin => Fold::Min,
                    _ => Fold::Max,
                };
                let vals: Vec<i32> =
                    self.read(h2, avl, bits)?.into_iter().enumerate().map(|(e, v)| if self.active(vm, e) { v } else { op.id(bits) }).collect();
                let r = o_tree_fold(&vals, self.n_lane, op, bits);
                self.write(hd, bits, &[Some(r)])?;
            }
            VsetCsr => unreachable!(),
        }
        Ok(())
    }

    /// Executes `prog` one statement at a time, each to completion.
    pub fn run(&mut self, prog: &AsmProgram, max_steps: u64) -> Result<u64, String> {
        let mut pc = 0;
        let mut steps = 0;
        while pc < prog.statements.len() {
            steps += 1;
            if steps > max_steps {
                return Err("step limit".into());
            }
            pc = match &prog.statements[pc] {
                Statement::Scalar(op) => self.scalar(op, pc).map_err(|e| format!("pc {pc}: {e}"))?,
                Statement::Uvp(i) => {
                    self.vector(i).map_err(|e| format!("pc {pc}: {e}"))?;
                    pc + 1
                }
                Statement::Raw(w) => return Err(format!("pc {pc}: raw word {w:#x}")),
            };
        }
        Ok(steps)
    }
}

// ---- random programs ----

pub struct ProgramShape {
    pub avl_max: u32,
    /// First register of the index area; data groups stay below it.
    pub index_base: u32,
}

pub const DATA_BYTES: u32 = 16 * 1024;
pub const INDEX_ADDR: u32 = DATA_BYTES;
/// Largest index value the random programs load; gathers need AVL above it
/// and `vsglen` is kept above it.
pub const INDEX_LIMIT: i32 = 8;

pub fn random_config(depth: u32) -> MachineConfig {
    MachineConfig { n_lane: 8, vrf_depth: depth, vlen_bits: 256, mem_bytes: 64 * 1024, ..MachineConfig::default() }
}

pub fn shape_for(cfg: &MachineConfig) -> ProgramShape {
    let avl_max: u32 = if cfg.vrf_depth >= 256 { 160 } else { 48 };
    let idx_regs = (avl_max * 16).div_ceil(cfg.vlen_bits) + 1;
    ProgramShape { avl_max, index_base: cfg.vrf_depth - idx_regs }
}

const AVL_REGS: [u8; 4] = [5, 6, 7, 28];
const VAL_REGS: [u8; 3] = [10, 11, 12];
const ADDR_REGS: [u8; 2] = [13, 14];
const IDX_ADDR: u8 = 15;
const IDX_AVL: u8 = 16;
const WORD_ADDR: u8 = 17;
const TMP: u8 = 18;
const LOOP: u8 = 19;

/// Random machine state plus a straight-line-ish program of about
/// `n_instr` statements whose every vector instruction is legal for `cfg`.
/// Returns the assembly text and the initial state.
pub fn random_program(rng: &mut impl Rng, cfg: &MachineConfig, n_instr: usize) -> (String, MachineState) {
    let shape = shape_for(cfg);
    let mut st = MachineState::new(cfg.clone()).unwrap();
    let data: Vec<u8> = (0..DATA_BYTES).map(|_| rng.gen()).collect();
    st.mem.write(0, &data).unwrap();
    let idx_elems = (cfg.vrf_depth - shape.index_base) * cfg.vlen_bits / 16;
    let idx: Vec<u8> = (0..idx_elems).flat_map(|_| (rng.gen_range(0..INDEX_LIMIT) as i16).to_le_bytes()).collect();
    st.mem.write(INDEX_ADDR as u64, &idx).unwrap();

    let mut g = Gen { rng, out: String::new(), x: [0; 32], shape, cfg: cfg.clone(), count: 0, labels: 0, vsglen: 0 };
    g.li(IDX_ADDR, INDEX_ADDR as i64);
    g.li(IDX_AVL, idx_elems as i64);
    g.line(format!("uvp_vle.e16 v{}, x{IDX_ADDR}, x{IDX_AVL}", g.shape.index_base));
    for r in AVL_REGS {
        let v = g.rng.gen_range(1..=g.shape.avl_max) as i64;
        g.li(r, v);
    }
    for r in VAL_REGS {
        let v = g.rng.gen_range(-40000..40000);
        g.li(r, v);
    }
    for r in ADDR_REGS {
        g.new_addr(r);
    }
    let wa = 4 * g.rng.gen_range(0..(DATA_BYTES / 4) as i64);
    g.li(WORD_ADDR, wa);
    let n = g.rng.gen_range(INDEX_LIMIT as i64..=g.shape.avl_max as i64);
    g.csr(0, n);
    let sh = g.rng.gen_range(0..16);
    g.csr(2, sh);
    while g.count < n_instr {
        g.step();
    }
    (g.out, st)
}

struct Gen<'a, R: Rng> {
    rng: &'a mut R,
    out: String,
    /// Statically known scalar register values.
    x: [i64; 32],
    shape: ProgramShape,
    cfg: MachineConfig,
    count: usize,
    labels: usize,
    vsglen: u32,
}

impl<R: Rng> Gen<'_, R> {
    fn line(&mut self, s: String) {
        self.out.push_str(&s);
        self.out.push('\n');
        self.count += 1;
    }

    fn li(&mut self, r: u8, v: i64) {
        self.x[r as usize] = v;
        self.line(format!("li x{r}, {v}"));
    }

    fn csr(&mut self, c: u16, v: i64) {
        self.li(TMP, v);
        let name = ["vsglen", "vrextra", "vshamt"][c as usize];
        self.line(format!("uvp_setcsr {name}, x{TMP}"));
        if c == 0 {
            self.vsglen = v as u32;
        }
    }

    fn new_addr(&mut self, r: u8) {
        let a = 2 * self.rng.gen_range(0..(DATA_BYTES as i64 - 512) / 2);
        self.li(r, a);
    }

    /// Head such that `n` elements of `bits` fit below the index area.
    fn head(&mut self, n: u32, bits: u32) -> u32 {
        let regs = (n * bits).div_ceil(self.cfg.vlen_bits);
        self.rng.gen_range(0..=self.shape.index_base - regs)
    }

    fn avl_reg(&mut self, min: u32) -> Option<u8> {
        let ok: Vec<u8> = AVL_REGS.iter().copied().filter(|&r| self.x[r as usize] as u32 >= min).collect();
        (!ok.is_empty()).then(|| ok[self.rng.gen_range(0..ok.len())])
    }

    fn vector(&mut self) -> String {
        use Mnemonic::*;
        const OPS: [Mnemonic; 35] = [
            Add, Sub, Mul, Div, CplxMul, And, Or, Xor, Min, Max, VSeq, VSne, VSlt, VSle, VSgt, VSge, AddS, SubS, MulS,
            MovS, Vid, Seq, Sne, Slt, Sle, Sgt, Sge, VmNot, Gather, Scatter, Vle, Vse, RedSum, RedMin, RedMax,
        ];
        let m = OPS[self.rng.gen_range(0..OPS.len())];
        let e16 = self.rng.gen_bool(0.6);
        let bits = if e16 { 16 } else { 8 };
        let sfx = if e16 { ".e16" } else { ".e8" };
        let vm = if self.rng.gen_bool(0.25) { "vm, " } else { "" };
        let name = m.name();
        let min_avl = if m == Gather { INDEX_LIMIT as u32 } else { 0 };
        let Some(ar) = self.avl_reg(min_avl) else { return format!("uvp_movs{sfx} v0, x10, x0") };
        let avl = self.x[ar as usize] as u32;
        let ib = self.shape.index_base;
        let n = self.vsglen;
        let vr = |s: &mut Self| s.rng.gen_range(0..VAL_REGS.len());
        match m {
            Gather => {
                let (d, s) = (self.head(n, bits), self.head(avl, bits));
                format!("{name}{sfx} v{d}, v{s}, v{ib}, {vm}x{ar}")
            }
            Scatter => {
                let (d, s) = (self.head(n, bits), self.head(avl, bits));
                format!("{name}{sfx} v{d}, v{s}, v{ib}, {vm}x{ar}")
            }
            AddS | SubS | MulS => {
                let (d, s, r) = (self.head(avl, bits), self.head(avl, bits), VAL_REGS[vr(self)]);
                format!("{name}{sfx} v{d}, v{s}, x{r}, {vm}x{ar}")
            }
            MovS | Vid => {
                let (d, r) = (self.head(avl, bits), VAL_REGS[vr(self)]);
                format!("{name}{sfx} v{d}, x{r}, {vm}x{ar}")
            }
            Seq | Sne | Slt | Sle | Sgt | Sge => {
                let (a, b) = (self.head(avl, bits), self.head(avl, bits));
                format!("{name}{sfx} v{a}, v{b}, {vm}x{ar}")
            }
            VmNot => format!("{name}{sfx} {vm}x{ar}"),
            Vle | Vse => {
                let (d, r) = (self.head(avl, bits), ADDR_REGS[self.rng.gen_range(0..2)]);
                format!("{name}{sfx} v{d}, x{r}, {vm}x{ar}")
            }
            RedSum | RedMin | RedMax => {
                let (d, s) = (self.head(1, bits), self.head(avl, bits));
                format!("{name}{sfx} v{d}, v{s}, {vm}x{ar}")
            }
            _ => {
                let (d, a, b) = (self.head(avl, bits), self.head(avl, bits), self.head(avl, bits));
                format!("{name}{sfx} v{d}, v{a}, v{b}, {vm}x{ar}")
            }
        }
    }

    fn step(&mut self) {
        match self.rng.gen_range(0..100) {
            0..=69 => {
                let s = self.vector();
                self.line(s);
            }
            70..=74 => {
                let r = AVL_REGS[self.rng.gen_range(0..AVL_REGS.len())];
                let v = if self.rng.gen_bool(0.05) { 0 } else { self.rng.gen_range(1..=self.shape.avl_max) as i64 };
                self.li(r, v);
            }
            75..=78 => {
                let r = VAL_REGS[self.rng.gen_range(0..VAL_REGS.len())];
                let v = self.rng.gen_range(-70000..70000);
                self.li(r, v);
            }
            79..=80 => {
                let r = ADDR_REGS[self.rng.gen_range(0..2)];
                self.new_addr(r);
            }
            81..=82 => {
                let v = self.rng.gen_range(INDEX_LIMIT as i64..=self.shape.avl_max as i64);
                self.csr(0, v);
            }
            83..=84 => {
                let v = self.rng.gen_range(0..16);
                self.csr(2, v);
            }
            85..=87 => {
                let r = VAL_REGS[self.rng.gen_range(0..VAL_REGS.len())];
                if self.rng.gen_bool(0.5) {
                    self.line(format!("sw x{r}, 0(x{WORD_ADDR})"));
                } else {
                    self.line(format!("lw x{TMP}, 0(x{WORD_ADDR})"));
                }
            }
            88..=91 => {
                // forward branch over vector-only code, taken or not
                let l = self.labels;
                self.labels += 1;
                let cond = if self.rng.gen_bool(0.5) { "beq x0, x0" } else { "bne x0, x0" };
                self.line(format!("{cond}, skip{l}"));
                for _ in 0..self.rng.gen_range(1..4) {
                    let s = self.vector();
                    self.line(s);
                }
                self.out.push_str(&format!("skip{l}:\n"));
            }
            _ => {
                // short counted loop over vector-only code
                let l = self.labels;
                self.labels += 1;
                let trips = self.rng.gen_range(1..4);
                self.li(LOOP, trips);
                self.out.push_str(&format!("loop{l}:\n"));
                for _ in 0..self.rng.gen_range(1..5) {
                    let s = self.vector();
                    self.line(s);
                }
                self.line(format!("addi x{LOOP}, x{LOOP}, -1"));
                self.line(format!("bne x{LOOP}, x0, loop{l}"));
            }
        }
    }
}

/// Architectural state of a simulator machine in the reference layout.
pub fn snapshot(st: &MachineState) -> RefState {
    RefState::from_machine(st)
}

/// First difference between two states, for failure messages.
pub fn first_diff(a: &RefState, b: &RefState) -> Option<String> {
    if let Some(i) = a.vrf.iter().zip(&b.vrf).position(|(p, q)| p != q) {
        return Some(format!("vrf byte {i} (v{}): {} vs {}", i / a.vlen_bytes, a.vrf[i], b.vrf[i]));
    }
    if let Some(i) = a.mask.iter().zip(&b.mask).position(|(p, q)| p != q) {
        return Some(format!("mask bit {i}"));
    }
    if a.x != b.x {
        return Some(format!("xregs {:?} vs {:?}", a.x, b.x));
    }
    if a.csr != b.csr {
        return Some(format!("csr {:?} vs {:?}", a.csr, b.csr));
    }
    if let Some(i) = a.mem.iter().zip(&b.mem).position(|(p, q)| p != q) {
        return Some(format!("mem byte {i:#x}"));
    }
    if a.div_fault != b.div_fault {
        return Some("div fault flag".into());
    }
    None
}

pub fn hexdump(bytes: &[u8]) -> String {
    let mut s = String::new();
    for b in bytes {
        let _ = write!(s, "{b:02x}");
    }
    s
}

// ---- encoding ----

/// Field that owns bit `b` of an instruction word.
pub fn field_of_bit(b: u32) -> &'static str {
    match b {
        0..=6 => "opcode",
        7..=11 => "rs_avl",
        12..=14 => "funct3",
        15..=17 | 32..=41 => "vs1_head",
        18..=20 | 42..=51 => "vs2_head",
        21 | 52..=63 => "vd_head",
        22 => "vmask",
        23..=24 => "vew",
        _ => "funct7",
    }
}

/// Raw field values of a decoded instruction, by name.
pub fn fields(i: &DecodedInstr) -> [(&'static str, u32); 9] {
    [
        ("opcode", i.opcode as u32),
        ("funct3", i.funct3 as u32),
        ("funct7", i.funct7 as u32),
        ("vew", i.vew.code() as u32),
        ("vmask", i.vmask as u32),
        ("vd_head", i.vd_head as u32),
        ("vs2_head", i.vs2_head as u32),
        ("vs1_head", i.vs1_head as u32),
        ("rs_avl", i.rs_avl as u32),
    ]
}

pub fn random_instr(rng: &mut impl Rng) -> DecodedInstr {
    let entries = uvp_core::isa::OpcodeTable::get().entries();
    let e = entries[rng.gen_range(0..entries.len())];
    let vew = if rng.gen() { ElemWidth::E8 } else { ElemWidth::E16 };
    DecodedInstr::new(e.mnemonic, vew, rng.gen(), rng.gen_range(0..8192), rng.gen_range(0..8192), rng.gen_range(0..8192), rng.gen_range(0..32))
}

/// Checks that flipping each bit of `word` either fails to decode or changes
/// exactly the field owning that bit.
pub fn bit_flips_ok(orig: &DecodedInstr, word: u64) -> Result<(), String> {
    let base = fields(orig);
    for b in 0..64 {
        let flipped = word ^ (1u64 << b);
        match uvp_core::isa::decode(uvp_core::isa::InstrWord(flipped)) {
            Err(uvp_core::isa::IsaError::IllegalInstruction { .. }) => {}
            Err(e) => return Err(format!("bit {b}: unexpected error {e}")),
            Ok(d) => {
                let changed: Vec<&str> = fields(&d).iter().zip(&base).filter(|(p, q)| p.1 != q.1).map(|(p, _)| p.0).collect();
                if changed != [field_of_bit(b)] {
                    return Err(format!("bit {b} of {word:#018x} changed {changed:?}"));
                }
            }
        }
    }
    Ok(())
}
