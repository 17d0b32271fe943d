//! Per-instruction operand resolution, functional effect and cost.
//!
//! An instruction is evaluated in two phases: [`compute`] reads its sources
//! and produces a list of [`Effect`]s, and [`apply`] writes them back. The
//! sequencer runs the phases at the start and at the commit of execution.

use crate::datapath::{
    bitwise, cmp_mask, cplx_mul, mul_shift, sat_addsub, sat_div, saturate, sat_max, sat_min, AddSub, ElemWidth,
};
use crate::exe::{self, ExeError, ReduceOp};
use crate::isa::{Category, DecodedInstr, Mnemonic};
use crate::machine::{resolve_rg, transfer_cycles, CsrFile, MachineConfig, MachineError, MachineState, RegGroup};

use super::hazard::{partition_vl, Span};

/// Functional unit an instruction occupies while executing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Unit {
    Lanes,
    Mem,
    Exe,
    /// Lanes followed by the EXE tree; holds both.
    LanesExe,
}

impl Unit {
    pub fn name(self) -> &'static str {
        match self {
            Unit::Lanes => "LANES",
            Unit::Mem => "MEM",
            Unit::Exe => "EXE",
            Unit::LanesExe => "LANES+EXE",
        }
    }
}

/// Values captured when the instruction issues.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Snapshot {
    pub avl: u32,
    pub csr: CsrFile,
    /// Value of the scalar register named by `vs1_head`, for forms that use one.
    pub scalar: u32,
}

impl Snapshot {
    pub fn take(instr: &DecodedInstr, st: &MachineState) -> Self {
        Self {
            avl: st.xreg(instr.rs_avl),
            csr: st.csr,
            scalar: if instr.vs1_head < 32 { st.xreg(instr.vs1_head as u8) } else { 0 },
        }
    }
}

/// Resolved operands, resource footprint and cost of one vector instruction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Plan {
    pub vd: Option<RegGroup>,
    pub vs1: Option<RegGroup>,
    pub vs2: Option<RegGroup>,
    pub addr: u64,
    pub reads: Vec<Span>,
    pub writes: Vec<Span>,
    pub unit: Unit,
    pub cycles: u64,
}

/// Resource index of the mask register.
pub fn mask_resource(cfg: &MachineConfig) -> u32 {
    cfg.vrf_depth
}

/// Resource index of memory.
pub fn mem_resource(cfg: &MachineConfig) -> u32 {
    cfg.vrf_depth + 1
}

pub fn n_resources(cfg: &MachineConfig) -> u32 {
    cfg.vrf_depth + 2
}

fn span(g: &RegGroup) -> Span {
    (g.head, g.tail)
}

/// Cost of a symmetric lane operation over `avl` elements.
pub fn lane_cycles(cfg: &MachineConfig, avl: u32, w: ElemWidth) -> u64 {
    partition_vl(avl, cfg.n_lane).vl_max().div_ceil(cfg.lane_simd_width(w)) as u64
}

/// Resolves groups and footprint. Returns `None` when `avl` is zero, which
/// makes the instruction a no-op.
pub fn plan(instr: &DecodedInstr, snap: &Snapshot, cfg: &MachineConfig) -> Result<Option<Plan>, MachineError> {
    use Mnemonic::*;
    let m = instr.mnemonic;
    let w = instr.vew;
    let avl = snap.avl;
    if m == VsetCsr || avl == 0 {
        return Ok(None);
    }
    let rg = |field: u16, n: u32| resolve_rg(snap.csr.extend_index(field), n, w, cfg);
    // index vectors are always 16-bit
    let idx_rg = |field: u16, n: u32| resolve_rg(snap.csr.extend_index(field), n, ElemWidth::E16, cfg);
    let (mrf, mem) = (mask_resource(cfg), mem_resource(cfg));
    let mut reads = Vec::new();
    let mut writes = Vec::new();
    if instr.vmask {
        reads.push((mrf, mrf));
    }
    let mut p = Plan { vd: None, vs1: None, vs2: None, addr: 0, reads, writes: vec![], unit: Unit::Lanes, cycles: 0 };
    match instr.category() {
        Category::VectorVector => {
            p.vs1 = Some(rg(instr.vs1_head, avl)?);
            p.vs2 = Some(rg(instr.vs2_head, avl)?);
            p.vd = Some(rg(instr.vd_head, avl)?);
            p.cycles = lane_cycles(cfg, avl, w);
        }
        Category::VectorScalar => {
            if matches!(m, AddS | SubS | MulS) {
                p.vs2 = Some(rg(instr.vs2_head, avl)?);
            }
            p.vd = Some(rg(instr.vd_head, avl)?);
            p.cycles = lane_cycles(cfg, avl, w);
        }
        Category::MaskWrite => {
            if m != VmNot {
                p.vs1 = Some(rg(instr.vs1_head, avl)?);
                p.vs2 = Some(rg(instr.vs2_head, avl)?);
            } else {
                p.reads.push((mrf, mrf));
            }
            writes.push((mrf, mrf));
            p.cycles = lane_cycles(cfg, avl, w);
        }
        Category::Asymmetric => {
            let n = snap.csr.vsglen;
            if n == 0 {
                return Err(MachineError::EmptyGroup);
            }
            p.unit = Unit::Exe;
            if m == Gather {
                p.vs1 = Some(rg(instr.vs1_head, avl)?);
                p.vs2 = Some(idx_rg(instr.vs2_head, n)?);
                p.cycles = exe::permute_cycles(n, cfg.n_lane);
            } else {
                p.vs1 = Some(rg(instr.vs1_head, avl)?);
                p.vs2 = Some(idx_rg(instr.vs2_head, avl)?);
                p.cycles = exe::permute_cycles(avl, cfg.n_lane);
            }
            p.vd = Some(rg(instr.vd_head, n)?);
        }
        Category::LoadStore => {
            p.unit = Unit::Mem;
            p.addr = snap.scalar as u64;
            p.cycles = transfer_cycles(cfg, avl);
            if m == Vle {
                p.vd = Some(rg(instr.vd_head, avl)?);
                p.reads.push((mem, mem));
            } else {
                p.vs2 = Some(rg(instr.vs2_head, avl)?);
                writes.push((mem, mem));
            }
        }
        Category::Reduction => {
            p.unit = Unit::LanesExe;
            p.vs2 = Some(rg(instr.vs2_head, avl)?);
            p.vd = Some(rg(instr.vd_head, 1)?);
            p.cycles = exe::reduce_cycles(avl, cfg.n_lane, cfg.lane_simd_width(w));
        }
        Category::Csr => unreachable!(),
    }
    for g in [p.vs1, p.vs2].into_iter().flatten() {
        p.reads.push(span(&g));
    }
    if let Some(g) = p.vd {
        writes.push(span(&g));
    }
    p.writes = writes;
    Ok(Some(p))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Effect {
    /// `None` entries leave the element unchanged.
    Vrf { group: RegGroup, vals: Vec<Option<i32>> },
    Mask { bits: Vec<Option<bool>> },
    Mem { addr: u64, bytes: Vec<u8> },
    DivFault,
}

fn mask_bits(st: &MachineState, instr: &DecodedInstr, n: u32) -> Result<Option<Vec<bool>>, MachineError> {
    if !instr.vmask {
        return Ok(None);
    }
    (0..n as u64).map(|i| st.mask.get(i)).collect::<Result<Vec<_>, _>>().map(Some)
}

fn gated<T>(vals: Vec<T>, mask: &Option<Vec<bool>>) -> Vec<Option<T>> {
    vals.into_iter().enumerate().map(|(i, v)| mask.as_ref().is_none_or(|m| m[i]).then_some(v)).collect()
}

fn elementwise(a: &[i32], b: &[i32], f: impl Fn(i32, i32) -> i32) -> Vec<i32> {
    a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect()
}

/// Interleaved complex product; a trailing unpaired element has zero imaginary part.
pub fn cplx_vec(a: &[i32], b: &[i32], sh: u32, w: ElemWidth) -> Vec<i32> {
    let mut out = Vec::with_capacity(a.len());
    let mut k = 0;
    while k < a.len() {
        let (ai, bi) = (a.get(k + 1).copied().unwrap_or(0), b.get(k + 1).copied().unwrap_or(0));
        let (re, im) = cplx_mul(a[k], ai, b[k], bi, sh, w);
        out.push(re);
        if k + 1 < a.len() {
            out.push(im);
        }
        k += 2;
    }
    out
}

/// Reads sources and computes effects.
pub fn compute(instr: &DecodedInstr, p: &Plan, snap: &Snapshot, st: &MachineState) -> Result<Vec<Effect>, ExeError> {
    use Mnemonic::*;
    let w = instr.vew;
    let sh = snap.csr.vshamt.min(31);
    let avl = snap.avl;
    let rd = |g: &Option<RegGroup>| st.read_group(g.as_ref().expect("planned operand"));
    let scalar = saturate(snap.scalar as i32 as i64, w);
    let m = instr.mnemonic;
    let mut effects = Vec::new();
    let vrf = |vals: Vec<i32>, mask: &Option<Vec<bool>>| Effect::Vrf { group: p.vd.unwrap(), vals: gated(vals, mask) };
    match instr.category() {
        Category::VectorVector => {
            let mask = mask_bits(st, instr, avl)?;
            let (a, b) = (rd(&p.vs1), rd(&p.vs2));
            let vals = match m {
                Add => elementwise(&a, &b, |x, y| sat_addsub(x, y, AddSub::Add, w)),
                Sub => elementwise(&a, &b, |x, y| sat_addsub(x, y, AddSub::Sub, w)),
                Mul => elementwise(&a, &b, |x, y| mul_shift(x, y, sh, w)),
                Div => {
                    let mut fault = false;
                    let v = a
                        .iter()
                        .zip(&b)
                        .enumerate()
                        .map(|(i, (&x, &y))| {
                            let r = sat_div(x, y, sh, w);
                            fault |= r.divide_by_zero && mask.as_ref().is_none_or(|m| m[i]);
                            r.value
                        })
                        .collect();
                    if fault {
                        effects.push(Effect::DivFault);
                    }
                    v
                }
                CplxMul => cplx_vec(&a, &b, sh, w),
                And => elementwise(&a, &b, |x, y| bitwise(x, y, |p, q| p & q, w)),
                Or => elementwise(&a, &b, |x, y| bitwise(x, y, |p, q| p | q, w)),
                Xor => elementwise(&a, &b, |x, y| bitwise(x, y, |p, q| p ^ q, w)),
                Min => elementwise(&a, &b, sat_min),
                Max => elementwise(&a, &b, sat_max),
                _ => {
                    let pred = m.compare_pred().expect("compare");
                    elementwise(&a, &b, |x, y| i32::from(cmp_mask(x, y, pred)))
                }
            };
            effects.push(vrf(vals, &mask));
        }
        Category::VectorScalar => {
            let mask = mask_bits(st, instr, avl)?;
            let vals = match m {
                AddS => rd(&p.vs2).iter().map(|&x| sat_addsub(x, scalar, AddSub::Add, w)).collect(),
                SubS => rd(&p.vs2).iter().map(|&x| sat_addsub(x, scalar, AddSub::Sub, w)).collect(),
                MulS => rd(&p.vs2).iter().map(|&x| mul_shift(x, scalar, sh, w)).collect(),
                MovS => vec![scalar; avl as usize],
                _ => (0..avl).map(|i| saturate(snap.scalar as i32 as i64 + i as i64, w)).collect(),
            };
            effects.push(vrf(vals, &mask));
        }
        Category::MaskWrite => {
            let mask = mask_bits(st, instr, avl)?;
            let bits: Vec<bool> = if m == VmNot {
                (0..avl as u64).map(|i| st.mask.get(i).map(|b| !b)).collect::<Result<_, _>>()?
            } else {
                let pred = m.compare_pred().expect("compare");
                let (a, b) = (rd(&p.vs1), rd(&p.vs2));
                a.iter().zip(&b).map(|(&x, &y)| cmp_mask(x, y, pred)).collect()
            };
            if avl as u64 > st.mask.len() {
                return Err(MachineError::MaskOutOfRange { index: avl as u64 - 1, len: st.mask.len() }.into());
            }
            effects.push(Effect::Mask { bits: gated(bits, &mask) });
        }
        Category::Asymmetric => {
            let (src, idx) = (rd(&p.vs1), rd(&p.vs2));
            let n = p.vd.unwrap().avl;
            if m == Gather {
                let mask = mask_bits(st, instr, n)?;
                let prev = vec![0; n as usize];
                let out = exe::gather(&src, &idx, n, &prev, mask.as_deref())?;
                effects.push(vrf(out, &mask));
            } else {
                let mask = mask_bits(st, instr, avl)?;
                // sparse write: only scattered positions change
                let mut dst: Vec<Option<i32>> = vec![None; n as usize];
                let mut shadow = vec![0; n as usize];
                exe::scatter(&mut shadow, &src, &idx, mask.as_deref())?;
                for (i, &raw) in idx.iter().enumerate() {
                    if mask.as_ref().is_none_or(|mm| mm[i]) {
                        let k = exe::index_value(raw) as usize;
                        dst[k] = Some(shadow[k]);
                    }
                }
                effects.push(Effect::Vrf { group: p.vd.unwrap(), vals: dst });
            }
        }
        Category::LoadStore => {
            let mask = mask_bits(st, instr, avl)?;
            if m == Vle {
                let g = p.vd.unwrap();
                let vals = st.peek_load(p.addr, &g)?;
                effects.push(vrf(vals, &mask));
            } else {
                let g = p.vs2.unwrap();
                let vals = st.read_group(&g);
                let old = st.peek_load(p.addr, &g)?;
                let bytes = gated(vals, &mask)
                    .into_iter()
                    .zip(old)
                    .flat_map(|(v, o)| {
                        let v = v.unwrap_or(o);
                        match w {
                            ElemWidth::E8 => vec![v as i8 as u8],
                            ElemWidth::E16 => (v as i16).to_le_bytes().to_vec(),
                        }
                    })
                    .collect();
                effects.push(Effect::Mem { addr: p.addr, bytes });
            }
        }
        Category::Reduction => {
            let mask = mask_bits(st, instr, avl)?;
            let op = match m {
                RedSum => ReduceOp::Sum,
                RedMin => ReduceOp::Min,
                _ => ReduceOp::Max,
            };
            let vals: Vec<i32> =
                rd(&p.vs2).into_iter().enumerate().map(|(i, v)| if mask.as_ref().is_none_or(|mm| mm[i]) { v } else { op.identity(w) }).collect();
            effects.push(Effect::Vrf { group: p.vd.unwrap(), vals: vec![Some(exe::reduce(&vals, st.cfg.n_lane, op, w))] });
        }
        Category::Csr => {}
    }
    Ok(effects)
}

pub fn apply(effects: Vec<Effect>, st: &mut MachineState) -> Result<(), MachineError> {
    for e in effects {
        match e {
            Effect::Vrf { group, vals } => {
                let mask: Vec<bool> = vals.iter().map(Option::is_some).collect();
                let dense: Vec<i32> = vals.iter().map(|v| v.unwrap_or(0)).collect();
                st.write_group(&group, &dense, Some(&mask));
            }
            Effect::Mask { bits } => {
                for (i, b) in bits.into_iter().enumerate() {
                    if let Some(b) = b {
                        st.mask.set(i as u64, b)?;
                    }
                }
            }
            Effect::Mem { addr, bytes } => st.mem.write(addr, &bytes)?,
            Effect::DivFault => st.div_fault = true,
        }
    }
    Ok(())
}

/// Applies a `uvp_vsetcsr`.
pub fn write_csr(instr: &DecodedInstr, st: &mut MachineState) -> Result<(), MachineError> {
    let v = st.xreg(instr.vs1_head as u8);
    match instr.vd_head {
        0 => st.csr.vsglen = v,
        1 => st.csr.vrextra = v,
        2 => st.csr.vshamt = v,
        _ => return Err(MachineError::InvalidConfig(format!("csr index {} out of range", instr.vd_head))),
    }
    Ok(())
}
