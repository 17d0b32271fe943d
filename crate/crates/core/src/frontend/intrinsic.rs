//! Expansion of the three intrinsic call forms into statements.
//!
//! * `F1`: load/store, `[V_dest =] f(V_src | Addr, [B_r,] AVL)`
//! * `F2`: ordinary arithmetic, `[V_dest =] f(V_src1, V_src2, [B_r, B_w,] AVL)`
//! * `F3`: complex and asymmetric, `f(V_dest, V_src1, V_src2, [B_r,] AVL)`

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{ScalarOp, Statement};
use crate::datapath::ElemWidth;
use crate::isa::{CsrId, DecodedInstr, Mnemonic};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Form {
    F1,
    F2,
    F3,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Operand {
    Vec(u16),
    /// Scalar register holding a byte address.
    Addr(u8),
    /// Scalar register holding an element value.
    Scalar(u8),
}

/// A scalar quantity: an immediate to materialize, a register, or a register sum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScalarExpr {
    Imm(i32),
    Reg(u8),
    Sum(u8, u8),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntrinsicCall {
    pub form: Form,
    pub op: String,
    pub dest: Vec<u16>,
    pub args: Vec<Operand>,
    pub b_r: Option<bool>,
    pub b_w: Option<bool>,
    pub avl: ScalarExpr,
    pub vew: ElemWidth,
    pub vsglen: Option<ScalarExpr>,
    pub vshamt: Option<ScalarExpr>,
}

impl IntrinsicCall {
    pub fn new(form: Form, op: &str, dest: &[u16], args: &[Operand], avl: ScalarExpr) -> Self {
        Self {
            form,
            op: op.to_string(),
            dest: dest.to_vec(),
            args: args.to_vec(),
            b_r: None,
            b_w: None,
            avl,
            vew: ElemWidth::E16,
            vsglen: None,
            vshamt: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IntrinsicError {
    #[error("`{op}` expects {expected}")]
    ArityError { op: String, expected: &'static str },
    #[error("`{op}` is not a {form:?} intrinsic")]
    UnknownForm { op: String, form: Form },
}

/// Scratch registers used to materialize immediates.
pub const AVL_SCRATCH: u8 = 10;
pub const CSR_SCRATCH: u8 = 31;

fn materialize(e: ScalarExpr, scratch: u8, out: &mut Vec<Statement>) -> u8 {
    match e {
        ScalarExpr::Reg(r) => r,
        ScalarExpr::Sum(a, b) => {
            out.push(Statement::Scalar(ScalarOp::Add { rd: scratch, rs1: a, rs2: b }));
            scratch
        }
        ScalarExpr::Imm(v) if (-2048..=2047).contains(&v) => {
            out.push(Statement::Scalar(ScalarOp::Addi { rd: scratch, rs1: 0, imm: v }));
            scratch
        }
        ScalarExpr::Imm(v) => {
            let hi = (v.wrapping_add(0x800) as u32) >> 12;
            out.push(Statement::Scalar(ScalarOp::Lui { rd: scratch, imm20: hi }));
            out.push(Statement::Scalar(ScalarOp::Addi { rd: scratch, rs1: scratch, imm: v.wrapping_sub((hi << 12) as i32) }));
            scratch
        }
    }
}

fn mnemonic_for(call: &IntrinsicCall) -> Option<Mnemonic> {
    use Mnemonic::*;
    let mask_dest = call.b_w == Some(true);
    let m = match (call.form, call.op.as_str()) {
        (Form::F1, "vle") => Vle,
        (Form::F1, "vse") => Vse,
        (Form::F2, "add") => Add,
        (Form::F2, "sub") => Sub,
        (Form::F2, "mul") => Mul,
        (Form::F2, "div") => Div,
        (Form::F2, "and") => And,
        (Form::F2, "or") => Or,
        (Form::F2, "xor") => Xor,
        (Form::F2, "min") => Min,
        (Form::F2, "max") => Max,
        (Form::F2, "adds") => AddS,
        (Form::F2, "subs") => SubS,
        (Form::F2, "muls") => MulS,
        (Form::F2, "movs") => MovS,
        (Form::F2, "vid") => Vid,
        (Form::F2, "redsum") => RedSum,
        (Form::F2, "redmin") => RedMin,
        (Form::F2, "redmax") => RedMax,
        (Form::F2, "vmnot") => VmNot,
        (Form::F2, "seq") => if mask_dest { Seq } else { VSeq },
        (Form::F2, "sne") => if mask_dest { Sne } else { VSne },
        (Form::F2, "slt") => if mask_dest { Slt } else { VSlt },
        (Form::F2, "sle") => if mask_dest { Sle } else { VSle },
        (Form::F2, "sgt") => if mask_dest { Sgt } else { VSgt },
        (Form::F2, "sge") => if mask_dest { Sge } else { VSge },
        (Form::F3, "cplxmul") => CplxMul,
        (Form::F3, "gather") => Gather,
        (Form::F3, "scatter") => Scatter,
        _ => return None,
    };
    Some(m)
}

/// Expands one call to AVL setup, CSR writes and the vector statement.
pub fn expand_intrinsic(call: &IntrinsicCall) -> Result<Vec<Statement>, IntrinsicError> {
    use Mnemonic::*;
    use Operand as O;
    let m = mnemonic_for(call).ok_or_else(|| IntrinsicError::UnknownForm { op: call.op.clone(), form: call.form })?;
    let arity = |expected| IntrinsicError::ArityError { op: call.op.clone(), expected };
    if call.form != Form::F2 && call.b_w.is_some() {
        return Err(arity("no B_w flag"));
    }
    let d = &call.dest[..];
    // (vd, vs1, vs2) with scalar registers placed in vs1
    let (vd, vs1, vs2) = match (m, d, &call.args[..]) {
        (Vle, [vd], [O::Addr(a)]) => (*vd, *a as u16, 0),
        (Vle, ..) => return Err(arity("one destination and an address")),
        (Vse, [], [O::Vec(s), O::Addr(a)]) => (0, *a as u16, *s),
        (Vse, ..) => return Err(arity("a source vector and an address")),
        (AddS | SubS | MulS, [vd], [O::Vec(s), O::Scalar(r)]) => (*vd, *r as u16, *s),
        (AddS | SubS | MulS, ..) => return Err(arity("one destination, a vector and a scalar")),
        (MovS | Vid, [vd], [O::Scalar(r)]) => (*vd, *r as u16, 0),
        (MovS | Vid, ..) => return Err(arity("one destination and a scalar")),
        (RedSum | RedMin | RedMax, [vd], [O::Vec(s)]) => (*vd, 0, *s),
        (RedSum | RedMin | RedMax, ..) => return Err(arity("one destination and one vector")),
        (VmNot, [], []) => (0, 0, 0),
        (VmNot, ..) => return Err(arity("no operands")),
        (Seq | Sne | Slt | Sle | Sgt | Sge, [], [O::Vec(a), O::Vec(b)]) => (0, *a, *b),
        (Seq | Sne | Slt | Sle | Sgt | Sge, ..) => return Err(arity("two source vectors and no destination")),
        (_, [vd], [O::Vec(a), O::Vec(b)]) => (*vd, *a, *b),
        _ => return Err(arity("one destination and two source vectors")),
    };
    let mut out = Vec::new();
    let avl = materialize(call.avl, AVL_SCRATCH, &mut out);
    for (csr, val) in [(CsrId::Vsglen, call.vsglen), (CsrId::Vshamt, call.vshamt)] {
        if let Some(v) = val {
            let r = materialize(v, CSR_SCRATCH, &mut out);
            out.push(Statement::Uvp(DecodedInstr::new(VsetCsr, ElemWidth::E8, false, csr.index(), r as u16, 0, 0)));
        }
    }
    let vmask = call.b_r == Some(true);
    out.push(Statement::Uvp(DecodedInstr::new(m, call.vew, vmask, vd, vs1, vs2, avl)));
    Ok(out)
}
