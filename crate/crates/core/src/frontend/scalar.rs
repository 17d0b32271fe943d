//! The scalar RV32I subset used for AVL setup and loop control, with
//! standard 32-bit encodings. Branch and jump targets are statement indices;
//! in the encoded form each statement occupies 4 bytes of offset.

use serde::{Deserialize, Serialize};

pub const OP_LUI: u32 = 0b011_0111;
pub const OP_JAL: u32 = 0b110_1111;
pub const OP_BRANCH: u32 = 0b110_0011;
pub const OP_LOAD: u32 = 0b000_0011;
pub const OP_STORE: u32 = 0b010_0011;
pub const OP_IMM: u32 = 0b001_0011;
pub const OP_REG: u32 = 0b011_0011;
pub const OP_V: u32 = 0b101_0111;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BranchCond {
    Eq,
    Ne,
    Lt,
    Ge,
}

impl BranchCond {
    fn funct3(self) -> u32 {
        match self {
            BranchCond::Eq => 0,
            BranchCond::Ne => 1,
            BranchCond::Lt => 4,
            BranchCond::Ge => 5,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            BranchCond::Eq => "beq",
            BranchCond::Ne => "bne",
            BranchCond::Lt => "blt",
            BranchCond::Ge => "bge",
        }
    }

    pub fn holds(self, a: u32, b: u32) -> bool {
        match self {
            BranchCond::Eq => a == b,
            BranchCond::Ne => a != b,
            BranchCond::Lt => (a as i32) < (b as i32),
            BranchCond::Ge => (a as i32) >= (b as i32),
        }
    }
}

/// One scalar statement. `target` fields are absolute statement indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScalarOp {
    Add { rd: u8, rs1: u8, rs2: u8 },
    Sub { rd: u8, rs1: u8, rs2: u8 },
    Addi { rd: u8, rs1: u8, imm: i32 },
    Slli { rd: u8, rs1: u8, shamt: u8 },
    Srli { rd: u8, rs1: u8, shamt: u8 },
    Lui { rd: u8, imm20: u32 },
    Lw { rd: u8, rs1: u8, imm: i32 },
    Sw { rs2: u8, rs1: u8, imm: i32 },
    Branch { cond: BranchCond, rs1: u8, rs2: u8, target: usize },
    Jal { rd: u8, target: usize },
    /// RVV-style `vsetvli rd, rs1, e<sew>, m<lmul>`; only produced for the
    /// strip-mining baseline.
    Vsetvli { rd: u8, rs1: u8, sew: u8, lmul: u8 },
}

impl ScalarOp {
    pub fn is_branch(&self) -> bool {
        matches!(self, ScalarOp::Branch { .. } | ScalarOp::Jal { .. })
    }

    pub fn target(&self) -> Option<usize> {
        match *self {
            ScalarOp::Branch { target, .. } | ScalarOp::Jal { target, .. } => Some(target),
            _ => None,
        }
    }

    /// Registers read.
    pub fn reads(&self) -> Vec<u8> {
        match *self {
            ScalarOp::Add { rs1, rs2, .. } | ScalarOp::Sub { rs1, rs2, .. } => vec![rs1, rs2],
            ScalarOp::Addi { rs1, .. }
            | ScalarOp::Slli { rs1, .. }
            | ScalarOp::Srli { rs1, .. }
            | ScalarOp::Lw { rs1, .. }
            | ScalarOp::Vsetvli { rs1, .. } => vec![rs1],
            ScalarOp::Sw { rs1, rs2, .. } | ScalarOp::Branch { rs1, rs2, .. } => vec![rs1, rs2],
            ScalarOp::Lui { .. } | ScalarOp::Jal { .. } => vec![],
        }
    }

    /// Register written, if any.
    pub fn writes(&self) -> Option<u8> {
        match *self {
            ScalarOp::Add { rd, .. }
            | ScalarOp::Sub { rd, .. }
            | ScalarOp::Addi { rd, .. }
            | ScalarOp::Slli { rd, .. }
            | ScalarOp::Srli { rd, .. }
            | ScalarOp::Lui { rd, .. }
            | ScalarOp::Lw { rd, .. }
            | ScalarOp::Jal { rd, .. }
            | ScalarOp::Vsetvli { rd, .. } => Some(rd),
            ScalarOp::Sw { .. } | ScalarOp::Branch { .. } => None,
        }
    }
}

fn r(v: u8) -> u32 {
    v as u32 & 0x1f
}

fn sew_code(sew: u8) -> u32 {
    match sew {
        8 => 0,
        16 => 1,
        32 => 2,
        _ => 3,
    }
}

fn lmul_code(lmul: u8) -> u32 {
    lmul.trailing_zeros()
}

/// Encodes at statement index `pc`.
pub fn encode(op: &ScalarOp, pc: usize) -> u32 {
    let off = |t: usize| ((t as i64 - pc as i64) * 4) as i32;
    match *op {
        ScalarOp::Add { rd, rs1, rs2 } => r(rs2) << 20 | r(rs1) << 15 | r(rd) << 7 | OP_REG,
        ScalarOp::Sub { rd, rs1, rs2 } => 0x20 << 25 | r(rs2) << 20 | r(rs1) << 15 | r(rd) << 7 | OP_REG,
        ScalarOp::Addi { rd, rs1, imm } => (imm as u32 & 0xfff) << 20 | r(rs1) << 15 | r(rd) << 7 | OP_IMM,
        ScalarOp::Slli { rd, rs1, shamt } => (shamt as u32 & 0x1f) << 20 | r(rs1) << 15 | 1 << 12 | r(rd) << 7 | OP_IMM,
        ScalarOp::Srli { rd, rs1, shamt } => (shamt as u32 & 0x1f) << 20 | r(rs1) << 15 | 5 << 12 | r(rd) << 7 | OP_IMM,
        ScalarOp::Lui { rd, imm20 } => (imm20 & 0xfffff) << 12 | r(rd) << 7 | OP_LUI,
        ScalarOp::Lw { rd, rs1, imm } => (imm as u32 & 0xfff) << 20 | r(rs1) << 15 | 2 << 12 | r(rd) << 7 | OP_LOAD,
        ScalarOp::Sw { rs2, rs1, imm } => {
            let i = imm as u32;
            (i >> 5 & 0x7f) << 25 | r(rs2) << 20 | r(rs1) << 15 | 2 << 12 | (i & 0x1f) << 7 | OP_STORE
        }
        ScalarOp::Branch { cond, rs1, rs2, target } => {
            let i = off(target) as u32;
            (i >> 12 & 1) << 31
                | (i >> 5 & 0x3f) << 25
                | r(rs2) << 20
                | r(rs1) << 15
                | cond.funct3() << 12
                | (i >> 1 & 0xf) << 8
                | (i >> 11 & 1) << 7
                | OP_BRANCH
        }
        ScalarOp::Jal { rd, target } => {
            let i = off(target) as u32;
            (i >> 20 & 1) << 31 | (i >> 1 & 0x3ff) << 21 | (i >> 11 & 1) << 20 | (i >> 12 & 0xff) << 12 | r(rd) << 7 | OP_JAL
        }
        ScalarOp::Vsetvli { rd, rs1, sew, lmul } => {
            let vtype = sew_code(sew) << 3 | lmul_code(lmul);
            vtype << 20 | r(rs1) << 15 | 7 << 12 | r(rd) << 7 | OP_V
        }
    }
}

fn sext(v: u32, bits: u32) -> i32 {
    ((v << (32 - bits)) as i32) >> (32 - bits)
}

/// Decodes a 32-bit scalar word located at statement index `pc`.
pub fn decode(w: u32, pc: usize) -> Option<ScalarOp> {
    let rd = (w >> 7 & 0x1f) as u8;
    let rs1 = (w >> 15 & 0x1f) as u8;
    let rs2 = (w >> 20 & 0x1f) as u8;
    let f3 = w >> 12 & 7;
    let f7 = w >> 25;
    let target = |off: i32| -> Option<usize> {
        if off % 4 != 0 {
            return None;
        }
        usize::try_from(pc as i64 + (off / 4) as i64).ok()
    };
    Some(match w & 0x7f {
        OP_REG => match (f3, f7) {
            (0, 0) => ScalarOp::Add { rd, rs1, rs2 },
            (0, 0x20) => ScalarOp::Sub { rd, rs1, rs2 },
            _ => return None,
        },
        OP_IMM => match f3 {
            0 => ScalarOp::Addi { rd, rs1, imm: sext(w >> 20, 12) },
            1 if f7 == 0 => ScalarOp::Slli { rd, rs1, shamt: rs2 },
            5 if f7 == 0 => ScalarOp::Srli { rd, rs1, shamt: rs2 },
            _ => return None,
        },
        OP_LUI => ScalarOp::Lui { rd, imm20: w >> 12 },
        OP_LOAD if f3 == 2 => ScalarOp::Lw { rd, rs1, imm: sext(w >> 20, 12) },
        OP_STORE if f3 == 2 => ScalarOp::Sw { rs2, rs1, imm: sext((w >> 25) << 5 | (w >> 7 & 0x1f), 12) },
        OP_BRANCH => {
            let cond = match f3 {
                0 => BranchCond::Eq,
                1 => BranchCond::Ne,
                4 => BranchCond::Lt,
                5 => BranchCond::Ge,
                _ => return None,
            };
            let imm = (w >> 31 & 1) << 12 | (w >> 7 & 1) << 11 | (w >> 25 & 0x3f) << 5 | (w >> 8 & 0xf) << 1;
            ScalarOp::Branch { cond, rs1, rs2, target: target(sext(imm, 13))? }
        }
        OP_JAL => {
            let imm = (w >> 31 & 1) << 20 | (w >> 12 & 0xff) << 12 | (w >> 20 & 1) << 11 | (w >> 21 & 0x3ff) << 1;
            ScalarOp::Jal { rd, target: target(sext(imm, 21))? }
        }
        OP_V if f3 == 7 && w >> 31 == 0 => {
            let vtype = w >> 20 & 0x7ff;
            if vtype >> 6 != 0 {
                return None;
            }
            let sew = match vtype >> 3 & 7 {
                0 => 8,
                1 => 16,
                2 => 32,
                _ => return None,
            };
            let lmul = vtype & 7;
            if lmul > 3 {
                return None;
            }
            ScalarOp::Vsetvli { rd, rs1, sew, lmul: 1 << lmul }
        }
        _ => return None,
    })
}

/// ABI register names, indexed by register number.
/// `li rd, v` as one `addi` or a `lui`/`addi` pair.
pub fn li(rd: u8, v: i32) -> Vec<ScalarOp> {
    if (-2048..=2047).contains(&v) {
        return vec![ScalarOp::Addi { rd, rs1: 0, imm: v }];
    }
    let hi = (v.wrapping_add(0x800) as u32) >> 12;
    let lo = v.wrapping_sub((hi << 12) as i32);
    vec![ScalarOp::Lui { rd, imm20: hi }, ScalarOp::Addi { rd, rs1: rd, imm: lo }]
}

pub const ABI_NAMES: [&str; 32] = [
    "zero", "ra", "sp", "gp", "tp", "t0", "t1", "t2", "s0", "s1", "a0", "a1", "a2", "a3", "a4", "a5", "a6", "a7", "s2",
    "s3", "s4", "s5", "s6", "s7", "s8", "s9", "s10", "s11", "t3", "t4", "t5", "t6",
];

pub fn parse_xreg(s: &str) -> Option<u8> {
    if let Some(n) = s.strip_prefix('x') {
        if let Ok(v) = n.parse::<u8>() {
            return (v < 32).then_some(v);
        }
    }
    if s == "fp" {
        return Some(8);
    }
    ABI_NAMES.iter().position(|&n| n == s).map(|i| i as u8)
}

pub fn xreg_name(r: u8) -> &'static str {
    ABI_NAMES[r as usize & 31]
}
