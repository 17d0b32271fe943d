//! 64-bit UVP instruction words: field layout, opcode table, encode/decode,
//! static validation, and the `UVPB` binary container.
//!
//! Bit map (high to low):
//!
//! ```text
//!  63        52 51      42 41      32 31    25 24 23 22 21  20 18 17 15 14 12 11  7 6    0
//! +------------+----------+----------+--------+-----+--+---+-----+-----+-----+-----+------+
//! | vd[12:1]   | vs2[12:3]| vs1[12:3]| funct7 | vew |vm|vd0|vs2lo|vs1lo|funct3|rsavl|opcode|
//! +------------+----------+----------+--------+-----+--+---+-----+-----+-----+-----+------+
//! ```
//!
//! The fields partition all 64 bits; there are no reserved bits. The only
//! reserved encodings are `vew` codes 2 and 3.

use std::collections::HashMap;
use std::fmt;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::datapath::{CmpPred, ElemWidth};
use crate::machine::MachineConfig;

/// RISC-V `custom-1` major opcode.
pub const CUSTOM1: u8 = 0b010_1011;
/// RISC-V `custom-2` major opcode.
pub const CUSTOM2: u8 = 0b101_1011;

/// Version of the frozen opcode assignment. Bumped whenever a triple changes.
pub const OPCODE_TABLE_VERSION: u32 = 1;

pub const REG_INDEX_BITS: u32 = 13;
pub const REG_INDEX_MAX: u16 = (1 << REG_INDEX_BITS) - 1;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum IsaError {
    #[error("illegal instruction word {word:#018x}: {reason}")]
    IllegalInstruction { word: u64, reason: &'static str },
    #[error("field {field} value {value} exceeds {bits} bits")]
    FieldOverflow { field: &'static str, value: u32, bits: u32 },
    #[error("unknown mnemonic `{0}`")]
    UnknownMnemonic(String),
    #[error("malformed binary: {0}")]
    BadBinary(&'static str),
}

/// The `funct3` category of a UVP instruction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Category {
    VectorVector,
    VectorScalar,
    MaskWrite,
    Asymmetric,
    LoadStore,
    Csr,
    Reduction,
}

impl Category {
    pub const fn funct3(self) -> u8 {
        match self {
            Category::VectorVector => 0,
            Category::VectorScalar => 1,
            Category::MaskWrite => 2,
            Category::Asymmetric => 3,
            Category::LoadStore => 4,
            Category::Csr => 5,
            Category::Reduction => 6,
        }
    }

    pub const fn opcode(self) -> u8 {
        match self {
            Category::VectorVector | Category::VectorScalar | Category::MaskWrite => CUSTOM1,
            _ => CUSTOM2,
        }
    }
}

/// Which instruction fields carry operands, and of what kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OperandForm {
    /// `vd, vs1, vs2, avl`
    VdVs1Vs2,
    /// `vd, vs2, rs1, avl` with `vs1_head` naming a scalar register.
    VdVs2Rs,
    /// `vd, rs1, avl`
    VdRs,
    /// `vs1, vs2, avl`, result goes to the mask register.
    Vs1Vs2,
    /// `avl` only.
    AvlOnly,
    /// `vd, rs_addr, avl`
    Load,
    /// `vs2, rs_addr, avl`
    Store,
    /// `csr, rs1`
    CsrWrite,
    /// `vd, vs2, avl`
    VdVs2,
}

/// Every UVP operation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Mnemonic {
    Add,
    Sub,
    Mul,
    Div,
    CplxMul,
    And,
    Or,
    Xor,
    Min,
    Max,
    VSeq,
    VSne,
    VSlt,
    VSle,
    VSgt,
    VSge,
    AddS,
    SubS,
    MulS,
    MovS,
    Vid,
    Seq,
    Sne,
    Slt,
    Sle,
    Sgt,
    Sge,
    VmNot,
    Gather,
    Scatter,
    Vle,
    Vse,
    VsetCsr,
    RedSum,
    RedMin,
    RedMax,
}

/// One row of the opcode table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OpcodeEntry {
    pub mnemonic: Mnemonic,
    pub name: &'static str,
    pub opcode: u8,
    pub funct3: u8,
    pub funct7: u8,
    pub category: Category,
    pub form: OperandForm,
}

macro_rules! table {
    ($( $m:ident $name:literal $cat:ident $f7:literal $form:ident ;)*) => {
        const ENTRIES: &[OpcodeEntry] = &[
            $( OpcodeEntry {
                mnemonic: Mnemonic::$m,
                name: $name,
                opcode: Category::$cat.opcode(),
                funct3: Category::$cat.funct3(),
                funct7: $f7,
                category: Category::$cat,
                form: OperandForm::$form,
            }, )*
        ];
    };
}

table! {
    Add     "uvp_add"     VectorVector 0  VdVs1Vs2;
    Sub     "uvp_sub"     VectorVector 1  VdVs1Vs2;
    Mul     "uvp_mul"     VectorVector 2  VdVs1Vs2;
    Div     "uvp_div"     VectorVector 3  VdVs1Vs2;
    CplxMul "uvp_cplxmul" VectorVector 4  VdVs1Vs2;
    And     "uvp_and"     VectorVector 5  VdVs1Vs2;
    Or      "uvp_or"      VectorVector 6  VdVs1Vs2;
    Xor     "uvp_xor"     VectorVector 7  VdVs1Vs2;
    Min     "uvp_min"     VectorVector 8  VdVs1Vs2;
    Max     "uvp_max"     VectorVector 9  VdVs1Vs2;
    VSeq    "uvp_vseq"    VectorVector 16 VdVs1Vs2;
    VSne    "uvp_vsne"    VectorVector 17 VdVs1Vs2;
    VSlt    "uvp_vslt"    VectorVector 18 VdVs1Vs2;
    VSle    "uvp_vsle"    VectorVector 19 VdVs1Vs2;
    VSgt    "uvp_vsgt"    VectorVector 20 VdVs1Vs2;
    VSge    "uvp_vsge"    VectorVector 21 VdVs1Vs2;
    AddS    "uvp_adds"    VectorScalar 0  VdVs2Rs;
    SubS    "uvp_subs"    VectorScalar 1  VdVs2Rs;
    MulS    "uvp_muls"    VectorScalar 2  VdVs2Rs;
    MovS    "uvp_movs"    VectorScalar 3  VdRs;
    Vid     "uvp_vid"     VectorScalar 4  VdRs;
    Seq     "uvp_seq"     MaskWrite    0  Vs1Vs2;
    Sne     "uvp_sne"     MaskWrite    1  Vs1Vs2;
    Slt     "uvp_slt"     MaskWrite    2  Vs1Vs2;
    Sle     "uvp_sle"     MaskWrite    3  Vs1Vs2;
    Sgt     "uvp_sgt"     MaskWrite    4  Vs1Vs2;
    Sge     "uvp_sge"     MaskWrite    5  Vs1Vs2;
    VmNot   "uvp_vmnot"   MaskWrite    8  AvlOnly;
    Gather  "uvp_gather"  Asymmetric   0  VdVs1Vs2;
    Scatter "uvp_scatter" Asymmetric   1  VdVs1Vs2;
    Vle     "uvp_vle"     LoadStore    0  Load;
    Vse     "uvp_vse"     LoadStore    1  Store;
    VsetCsr "uvp_vsetcsr" Csr          0  CsrWrite;
    RedSum  "uvp_redsum"  Reduction    0  VdVs2;
    RedMin  "uvp_redmin"  Reduction    1  VdVs2;
    RedMax  "uvp_redmax"  Reduction    2  VdVs2;
}

/// Lookup structure over the frozen opcode assignment.
pub struct OpcodeTable {
    by_triple: HashMap<(u8, u8, u8), usize>,
    by_name: HashMap<&'static str, usize>,
    by_mnemonic: HashMap<Mnemonic, usize>,
}

impl OpcodeTable {
    pub fn get() -> &'static OpcodeTable {
        static TABLE: OnceLock<OpcodeTable> = OnceLock::new();
        TABLE.get_or_init(|| {
            let mut by_triple = HashMap::new();
            let mut by_name = HashMap::new();
            let mut by_mnemonic = HashMap::new();
            for (i, e) in ENTRIES.iter().enumerate() {
                let dup = by_triple.insert((e.opcode, e.funct3, e.funct7), i);
                assert!(dup.is_none(), "duplicate opcode triple for {}", e.name);
                by_name.insert(e.name, i);
                by_mnemonic.insert(e.mnemonic, i);
            }
            OpcodeTable { by_triple, by_name, by_mnemonic }
        })
    }

    pub fn entries(&self) -> &'static [OpcodeEntry] {
        ENTRIES
    }

    pub fn lookup_triple(&self, opcode: u8, funct3: u8, funct7: u8) -> Option<&'static OpcodeEntry> {
        self.by_triple.get(&(opcode, funct3, funct7)).map(|&i| &ENTRIES[i])
    }

    pub fn lookup_name(&self, name: &str) -> Option<&'static OpcodeEntry> {
        self.by_name.get(name).map(|&i| &ENTRIES[i])
    }

    pub fn entry(&self, m: Mnemonic) -> &'static OpcodeEntry {
        &ENTRIES[self.by_mnemonic[&m]]
    }
}

impl Mnemonic {
    pub fn entry(self) -> &'static OpcodeEntry {
        OpcodeTable::get().entry(self)
    }

    pub fn name(self) -> &'static str {
        self.entry().name
    }

    pub fn category(self) -> Category {
        self.entry().category
    }

    pub fn form(self) -> OperandForm {
        self.entry().form
    }

    /// Predicate for compare instructions, whichever destination they use.
    pub fn compare_pred(self) -> Option<CmpPred> {
        use Mnemonic::*;
        Some(match self {
            VSeq | Seq => CmpPred::Eq,
            VSne | Sne => CmpPred::Ne,
            VSlt | Slt => CmpPred::Lt,
            VSle | Sle => CmpPred::Le,
            VSgt | Sgt => CmpPred::Gt,
            VSge | Sge => CmpPred::Ge,
            _ => return None,
        })
    }
}

impl fmt::Display for Mnemonic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Control/status registers writable by `uvp_vsetcsr`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CsrId {
    Vsglen,
    Vrextra,
    Vshamt,
}

impl CsrId {
    pub const ALL: [CsrId; 3] = [CsrId::Vsglen, CsrId::Vrextra, CsrId::Vshamt];

    pub fn index(self) -> u16 {
        match self {
            CsrId::Vsglen => 0,
            CsrId::Vrextra => 1,
            CsrId::Vshamt => 2,
        }
    }

    pub fn from_index(i: u16) -> Option<Self> {
        Self::ALL.get(i as usize).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            CsrId::Vsglen => "vsglen",
            CsrId::Vrextra => "vrextra",
            CsrId::Vshamt => "vshamt",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.name() == s)
    }
}

/// A 64-bit instruction word.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct InstrWord(pub u64);

/// All fields of one UVP instruction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecodedInstr {
    pub mnemonic: Mnemonic,
    pub funct7: u8,
    pub vew: ElemWidth,
    pub vmask: bool,
    pub vd_head: u16,
    pub vs2_head: u16,
    pub vs1_head: u16,
    pub funct3: u8,
    pub rs_avl: u8,
    pub opcode: u8,
}

impl DecodedInstr {
    /// Builds an instruction with opcode, funct3 and funct7 taken from the table.
    pub fn new(
        mnemonic: Mnemonic,
        vew: ElemWidth,
        vmask: bool,
        vd_head: u16,
        vs1_head: u16,
        vs2_head: u16,
        rs_avl: u8,
    ) -> Self {
        let e = mnemonic.entry();
        Self {
            mnemonic,
            funct7: e.funct7,
            vew,
            vmask,
            vd_head,
            vs2_head,
            vs1_head,
            funct3: e.funct3,
            rs_avl,
            opcode: e.opcode,
        }
    }

    pub fn category(&self) -> Category {
        self.mnemonic.category()
    }
}

#[inline]
fn bits(w: u64, hi: u32, lo: u32) -> u64 {
    (w >> lo) & ((1u64 << (hi - lo + 1)) - 1)
}

pub fn decode(word: InstrWord) -> Result<DecodedInstr, IsaError> {
    let w = word.0;
    let opcode = bits(w, 6, 0) as u8;
    let funct3 = bits(w, 14, 12) as u8;
    let funct7 = bits(w, 31, 25) as u8;
    let entry = OpcodeTable::get()
        .lookup_triple(opcode, funct3, funct7)
        .ok_or(IsaError::IllegalInstruction { word: w, reason: "unknown opcode/funct3/funct7" })?;
    let vew = ElemWidth::from_code(bits(w, 24, 23) as u8)
        .ok_or(IsaError::IllegalInstruction { word: w, reason: "reserved vew" })?;
    Ok(DecodedInstr {
        mnemonic: entry.mnemonic,
        funct7,
        vew,
        vmask: bits(w, 22, 22) == 1,
        vd_head: ((bits(w, 63, 52) << 1) | bits(w, 21, 21)) as u16,
        vs2_head: ((bits(w, 51, 42) << 3) | bits(w, 20, 18)) as u16,
        vs1_head: ((bits(w, 41, 32) << 3) | bits(w, 17, 15)) as u16,
        funct3,
        rs_avl: bits(w, 11, 7) as u8,
        opcode,
    })
}

fn check(field: &'static str, value: u32, width: u32) -> Result<u64, IsaError> {
    if value >> width != 0 {
        Err(IsaError::FieldOverflow { field, value, bits: width })
    } else {
        Ok(value as u64)
    }
}

pub fn encode(instr: &DecodedInstr) -> Result<InstrWord, IsaError> {
    let e = OpcodeTable::get()
        .lookup_triple(instr.opcode, instr.funct3, instr.funct7)
        .filter(|e| e.mnemonic == instr.mnemonic)
        .ok_or_else(|| IsaError::UnknownMnemonic(instr.mnemonic.name().to_string()))?;
    let vd = check("vd_head", instr.vd_head as u32, REG_INDEX_BITS)?;
    let vs2 = check("vs2_head", instr.vs2_head as u32, REG_INDEX_BITS)?;
    let vs1 = check("vs1_head", instr.vs1_head as u32, REG_INDEX_BITS)?;
    let rs_avl = check("rs_avl", instr.rs_avl as u32, 5)?;
    let w = (vd >> 1) << 52
        | (vs2 >> 3) << 42
        | (vs1 >> 3) << 32
        | (e.funct7 as u64) << 25
        | (instr.vew.code() as u64) << 23
        | (instr.vmask as u64) << 22
        | (vd & 1) << 21
        | (vs2 & 7) << 18
        | (vs1 & 7) << 15
        | (e.funct3 as u64) << 12
        | rs_avl << 7
        | e.opcode as u64;
    Ok(InstrWord(w))
}

/// A static legality problem found by [`validate`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Violation {
    RegisterOutOfRange { field: &'static str, index: u32, depth: u32 },
    ScalarRegisterOutOfRange { field: &'static str, index: u16 },
    CsrOutOfRange { index: u16 },
    /// An asymmetric instruction appears before any write of `vsglen`.
    MissingVsglen,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::RegisterOutOfRange { field, index, depth } => {
                write!(f, "register out of range: {field}={index} (depth {depth})")
            }
            Violation::ScalarRegisterOutOfRange { field, index } => {
                write!(f, "scalar register out of range: {field}={index}")
            }
            Violation::CsrOutOfRange { index } => write!(f, "csr index {index} out of range"),
            Violation::MissingVsglen => f.write_str("asymmetric instruction without a prior vsglen write"),
        }
    }
}

/// Vector register fields an instruction actually reads or writes.
pub fn vector_fields(instr: &DecodedInstr) -> Vec<(&'static str, u16)> {
    match instr.mnemonic.form() {
        OperandForm::VdVs1Vs2 => vec![("vd_head", instr.vd_head), ("vs1_head", instr.vs1_head), ("vs2_head", instr.vs2_head)],
        OperandForm::VdVs2Rs => vec![("vd_head", instr.vd_head), ("vs2_head", instr.vs2_head)],
        OperandForm::VdRs | OperandForm::Load => vec![("vd_head", instr.vd_head)],
        OperandForm::Vs1Vs2 => vec![("vs1_head", instr.vs1_head), ("vs2_head", instr.vs2_head)],
        OperandForm::Store => vec![("vs2_head", instr.vs2_head)],
        OperandForm::VdVs2 => vec![("vd_head", instr.vd_head), ("vs2_head", instr.vs2_head)],
        OperandForm::AvlOnly | OperandForm::CsrWrite => vec![],
    }
}

/// Static legality of one instruction against a configuration. Register
/// heads are checked as encoded (without `vrextra` bits).
pub fn validate(instr: &DecodedInstr, cfg: &MachineConfig) -> Vec<Violation> {
    let mut out = Vec::new();
    for (field, idx) in vector_fields(instr) {
        if idx as u32 >= cfg.vrf_depth {
            out.push(Violation::RegisterOutOfRange { field, index: idx as u32, depth: cfg.vrf_depth });
        }
    }
    match instr.mnemonic.form() {
        OperandForm::VdVs2Rs | OperandForm::VdRs | OperandForm::Load | OperandForm::Store | OperandForm::CsrWrite
            if instr.vs1_head >= 32 => {
                out.push(Violation::ScalarRegisterOutOfRange { field: "vs1_head", index: instr.vs1_head });
            }
        _ => {}
    }
    if instr.mnemonic == Mnemonic::VsetCsr && CsrId::from_index(instr.vd_head).is_none() {
        out.push(Violation::CsrOutOfRange { index: instr.vd_head });
    }
    out
}

/// Validates a straight-line instruction sequence; additionally flags
/// asymmetric instructions that precede any `vsglen` write.
pub fn validate_stream<'a>(
    instrs: impl IntoIterator<Item = &'a DecodedInstr>,
    cfg: &MachineConfig,
) -> Vec<(usize, Violation)> {
    let mut out = Vec::new();
    let mut vsglen_set = false;
    for (i, instr) in instrs.into_iter().enumerate() {
        out.extend(validate(instr, cfg).into_iter().map(|v| (i, v)));
        if instr.mnemonic == Mnemonic::VsetCsr && instr.vd_head == CsrId::Vsglen.index() {
            vsglen_set = true;
        }
        if instr.category() == Category::Asymmetric && !vsglen_set {
            out.push((i, Violation::MissingVsglen));
        }
    }
    out
}

pub const BINARY_MAGIC: &[u8; 4] = b"UVPB";
pub const BINARY_VERSION: u32 = 1;

/// Serializes words as `"UVPB"`, version, count, then little-endian words.
pub fn write_binary(words: &[u64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + words.len() * 8);
    out.extend_from_slice(BINARY_MAGIC);
    out.extend_from_slice(&BINARY_VERSION.to_le_bytes());
    out.extend_from_slice(&(words.len() as u32).to_le_bytes());
    for w in words {
        out.extend_from_slice(&w.to_le_bytes());
    }
    out
}

pub fn read_binary(bytes: &[u8]) -> Result<Vec<u64>, IsaError> {
    if bytes.len() < 12 || &bytes[..4] != BINARY_MAGIC {
        return Err(IsaError::BadBinary("missing UVPB header"));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != BINARY_VERSION {
        return Err(IsaError::BadBinary("unsupported version"));
    }
    let count = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let body = &bytes[12..];
    if body.len() != count * 8 {
        return Err(IsaError::BadBinary("word count does not match length"));
    }
    Ok(body.chunks_exact(8).map(|c| u64::from_le_bytes(c.try_into().unwrap())).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn add(vd: u16, vs1: u16, vs2: u16) -> DecodedInstr {
        DecodedInstr::new(Mnemonic::Add, ElemWidth::E8, false, vd, vs1, vs2, 0)
    }

    #[test]
    fn zero_field_add() {
        let e = Mnemonic::Add.entry();
        let w = (e.funct7 as u64) << 25 | (e.funct3 as u64) << 12 | e.opcode as u64;
        let d = decode(InstrWord(w)).unwrap();
        assert_eq!(d, add(0, 0, 0));
    }

    #[test]
    fn max_vd_placement() {
        let w = encode(&add(REG_INDEX_MAX, 0, 0)).unwrap().0;
        assert_eq!(bits(w, 63, 52), 0xFFF);
        assert_eq!(bits(w, 21, 21), 1);
    }

    #[test]
    fn vd_overflow() {
        let err = encode(&add(1 << 13, 0, 0)).unwrap_err();
        assert!(matches!(err, IsaError::FieldOverflow { field: "vd_head", .. }));
    }

    #[test]
    fn reserved_vew_rejected() {
        let w = encode(&add(1, 2, 3)).unwrap().0 | (2 << 23);
        assert!(matches!(decode(InstrWord(w)), Err(IsaError::IllegalInstruction { .. })));
    }

    #[test]
    fn table_is_injective_and_opcodes_custom() {
        let t = OpcodeTable::get();
        let mut seen = std::collections::HashSet::new();
        for e in t.entries() {
            assert!(seen.insert((e.opcode, e.funct3, e.funct7)));
            assert!(e.opcode == CUSTOM1 || e.opcode == CUSTOM2);
            assert!(e.funct7 < 128 && e.funct3 < 8);
        }
    }

    #[test]
    fn validate_range() {
        let cfg = MachineConfig { vrf_depth: 32, ..MachineConfig::default() };
        let v = validate(&add(100, 0, 0), &cfg);
        assert_eq!(v.len(), 1);
        assert!(v[0].to_string().contains("register out of range"));
        let c = DecodedInstr::new(Mnemonic::CplxMul, ElemWidth::E16, false, 0, 4, 8, 10);
        assert!(validate(&c, &cfg).is_empty());
    }

    #[test]
    fn validate_stream_vsglen() {
        let cfg = MachineConfig::default();
        let g = DecodedInstr::new(Mnemonic::Gather, ElemWidth::E16, false, 0, 4, 8, 10);
        let v = validate_stream([&g], &cfg);
        assert_eq!(v, vec![(0, Violation::MissingVsglen)]);
        let set = DecodedInstr::new(Mnemonic::VsetCsr, ElemWidth::E8, false, 0, 5, 0, 0);
        assert!(validate_stream([&set, &g], &cfg).is_empty());
    }

    #[test]
    fn binary_container() {
        let words = vec![1u64, u64::MAX, 0x1234];
        let b = write_binary(&words);
        assert_eq!(&b[..4], b"UVPB");
        assert_eq!(read_binary(&b).unwrap(), words);
        assert!(read_binary(&b[..b.len() - 1]).is_err());
    }
}
