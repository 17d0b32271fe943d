//! Text assembler and disassembler.
//!
//! One statement per line, `#` starts a comment, `name:` defines a label.
//! Vector statements take an optional `.e8`/`.e16` suffix (default e8), an
//! optional `vm` operand before the AVL register, and the AVL register last.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use super::scalar::{self, parse_xreg, xreg_name, BranchCond, ScalarOp};
use super::{AsmError, AsmErrorKind, AsmProgram, Statement};
use crate::datapath::ElemWidth;
use crate::isa::{CsrId, DecodedInstr, Mnemonic, OpcodeTable, OperandForm, REG_INDEX_MAX};

type Res<T> = Result<T, AsmErrorKind>;

fn perr<T>(msg: impl Into<String>) -> Res<T> {
    Err(AsmErrorKind::ParseError(msg.into()))
}

pub(crate) fn parse_imm(s: &str) -> Option<i64> {
    let s = s.trim();
    let (neg, body) = match s.strip_prefix('-') {
        Some(b) => (true, b),
        None => (false, s),
    };
    let v = if let Some(h) = body.strip_prefix("0x").or_else(|| body.strip_prefix("0X")) {
        i64::from_str_radix(h, 16).ok()?
    } else {
        body.parse::<i64>().ok()?
    };
    Some(if neg { -v } else { v })
}

fn xreg(s: &str) -> Res<u8> {
    parse_xreg(s).map_or_else(|| perr(format!("expected scalar register, found `{s}`")), Ok)
}

fn vreg(s: &str) -> Res<u16> {
    let n = s
        .strip_prefix('v')
        .and_then(|n| n.parse::<u32>().ok())
        .ok_or_else(|| AsmErrorKind::ParseError(format!("expected vector register, found `{s}`")))?;
    if n > REG_INDEX_MAX as u32 {
        return Err(AsmErrorKind::FieldOverflow(format!("vector register v{n} exceeds v{REG_INDEX_MAX}")));
    }
    Ok(n as u16)
}

fn imm_in(s: &str, lo: i64, hi: i64, what: &str) -> Res<i64> {
    let v = parse_imm(s).ok_or_else(|| AsmErrorKind::ParseError(format!("expected immediate, found `{s}`")))?;
    if v < lo || v > hi {
        return Err(AsmErrorKind::FieldOverflow(format!("{what} {v} outside {lo}..={hi}")));
    }
    Ok(v)
}

fn csr(s: &str) -> Res<u16> {
    if let Some(c) = CsrId::from_name(s) {
        return Ok(c.index());
    }
    match s.strip_prefix("csr").and_then(|n| n.parse::<u32>().ok()) {
        Some(n) if n <= REG_INDEX_MAX as u32 => Ok(n as u16),
        Some(n) => Err(AsmErrorKind::FieldOverflow(format!("csr index {n}"))),
        None => perr(format!("unknown csr `{s}`")),
    }
}

/// `imm(reg)` memory operand.
fn mem_operand(s: &str) -> Res<(i32, u8)> {
    let open = s.find('(').ok_or_else(|| AsmErrorKind::ParseError(format!("expected imm(reg), found `{s}`")))?;
    let reg = s[open + 1..].strip_suffix(')').ok_or_else(|| AsmErrorKind::ParseError(format!("unclosed `(` in `{s}`")))?;
    let off = if s[..open].trim().is_empty() { 0 } else { imm_in(&s[..open], -2048, 2047, "offset")? };
    Ok((off as i32, xreg(reg.trim())?))
}

fn arity(ops: &[&str], n: usize, mnem: &str) -> Res<()> {
    if ops.len() != n {
        return perr(format!("`{mnem}` takes {n} operands, found {}", ops.len()));
    }
    Ok(())
}

/// Statement with branch targets still symbolic.
enum Pending {
    Ready(Statement),
    Branch { cond: BranchCond, rs1: u8, rs2: u8, label: String },
    Jal { rd: u8, label: String },
}

fn is_label_name(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_' || c == '.')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.')
}

fn parse_uvp(mnem: &str, ops: &[&str]) -> Res<Option<DecodedInstr>> {
    let (base, vew) = match mnem.rsplit_once('.') {
        Some((b, "e8")) => (b, ElemWidth::E8),
        Some((b, "e16")) => (b, ElemWidth::E16),
        Some((_, suffix)) if mnem.starts_with("uvp_") => return perr(format!("unknown width suffix `.{suffix}`")),
        _ => (mnem, ElemWidth::E8),
    };
    let base = if base == "uvp_setcsr" { "uvp_vsetcsr" } else { base };
    let Some(entry) = OpcodeTable::get().lookup_name(base) else {
        return Ok(None);
    };
    let m = entry.mnemonic;
    if m.form() == OperandForm::CsrWrite {
        arity(ops, 2, mnem)?;
        return Ok(Some(DecodedInstr::new(m, vew, false, csr(ops[0])?, xreg(ops[1])? as u16, 0, 0)));
    }
    let (avl, rest) = ops.split_last().ok_or_else(|| AsmErrorKind::ParseError(format!("`{mnem}` needs an AVL register")))?;
    let (vmask, rest) = match rest.split_last() {
        Some((&"vm", r)) => (true, r),
        _ => (false, rest),
    };
    let rs_avl = xreg(avl)?;
    let mk = |vd, vs1, vs2| Some(DecodedInstr::new(m, vew, vmask, vd, vs1, vs2, rs_avl));
    let need = |n: usize| arity(rest, n, mnem);
    Ok(match m.form() {
        OperandForm::VdVs1Vs2 => {
            need(3)?;
            mk(vreg(rest[0])?, vreg(rest[1])?, vreg(rest[2])?)
        }
        OperandForm::VdVs2Rs => {
            need(3)?;
            mk(vreg(rest[0])?, xreg(rest[2])? as u16, vreg(rest[1])?)
        }
        OperandForm::VdRs | OperandForm::Load => {
            need(2)?;
            mk(vreg(rest[0])?, xreg(rest[1])? as u16, 0)
        }
        OperandForm::Vs1Vs2 => {
            need(2)?;
            mk(0, vreg(rest[0])?, vreg(rest[1])?)
        }
        OperandForm::AvlOnly => {
            need(0)?;
            mk(0, 0, 0)
        }
        OperandForm::Store => {
            need(2)?;
            mk(0, xreg(rest[1])? as u16, vreg(rest[0])?)
        }
        OperandForm::VdVs2 => {
            need(2)?;
            mk(vreg(rest[0])?, 0, vreg(rest[1])?)
        }
        OperandForm::CsrWrite => unreachable!(),
    })
}

fn li(rd: u8, v: i64) -> Vec<Pending> {
    scalar::li(rd, v as i32).into_iter().map(|op| Pending::Ready(Statement::Scalar(op))).collect()
}

fn parse_statement(mnem: &str, ops: &[&str]) -> Res<Vec<Pending>> {
    let s = |op| Ok(vec![Pending::Ready(Statement::Scalar(op))]);
    let branch = |cond| -> Res<Vec<Pending>> {
        arity(ops, 3, mnem)?;
        Ok(vec![Pending::Branch { cond, rs1: xreg(ops[0])?, rs2: xreg(ops[1])?, label: ops[2].to_string() }])
    };
    match mnem {
        "add" | "sub" => {
            arity(ops, 3, mnem)?;
            let (rd, rs1, rs2) = (xreg(ops[0])?, xreg(ops[1])?, xreg(ops[2])?);
            s(if mnem == "add" { ScalarOp::Add { rd, rs1, rs2 } } else { ScalarOp::Sub { rd, rs1, rs2 } })
        }
        "addi" => {
            arity(ops, 3, mnem)?;
            s(ScalarOp::Addi { rd: xreg(ops[0])?, rs1: xreg(ops[1])?, imm: imm_in(ops[2], -2048, 2047, "immediate")? as i32 })
        }
        "slli" | "srli" => {
            arity(ops, 3, mnem)?;
            let (rd, rs1, shamt) = (xreg(ops[0])?, xreg(ops[1])?, imm_in(ops[2], 0, 31, "shift")? as u8);
            s(if mnem == "slli" { ScalarOp::Slli { rd, rs1, shamt } } else { ScalarOp::Srli { rd, rs1, shamt } })
        }
        "lui" => {
            arity(ops, 2, mnem)?;
            s(ScalarOp::Lui { rd: xreg(ops[0])?, imm20: imm_in(ops[1], 0, 0xfffff, "upper immediate")? as u32 })
        }
        "lw" => {
            arity(ops, 2, mnem)?;
            let (imm, rs1) = mem_operand(ops[1])?;
            s(ScalarOp::Lw { rd: xreg(ops[0])?, rs1, imm })
        }
        "sw" => {
            arity(ops, 2, mnem)?;
            let (imm, rs1) = mem_operand(ops[1])?;
            s(ScalarOp::Sw { rs2: xreg(ops[0])?, rs1, imm })
        }
        "beq" => branch(BranchCond::Eq),
        "bne" => branch(BranchCond::Ne),
        "blt" => branch(BranchCond::Lt),
        "bge" => branch(BranchCond::Ge),
        "jal" => match ops {
            [label] => Ok(vec![Pending::Jal { rd: 1, label: label.to_string() }]),
            [rd, label] => Ok(vec![Pending::Jal { rd: xreg(rd)?, label: label.to_string() }]),
            _ => perr("`jal` takes [rd,] label"),
        },
        "j" => {
            arity(ops, 1, mnem)?;
            Ok(vec![Pending::Jal { rd: 0, label: ops[0].to_string() }])
        }
        "li" => {
            arity(ops, 2, mnem)?;
            Ok(li(xreg(ops[0])?, imm_in(ops[1], i32::MIN as i64, u32::MAX as i64, "immediate")?))
        }
        "vsetvli" => {
            arity(ops, 4, mnem)?;
            let sew = match ops[2] {
                "e8" => 8,
                "e16" => 16,
                "e32" => 32,
                o => return perr(format!("bad element width `{o}`")),
            };
            let lmul = match ops[3] {
                "m1" => 1,
                "m2" => 2,
                "m4" => 4,
                "m8" => 8,
                o => return perr(format!("bad LMUL `{o}`")),
            };
            s(ScalarOp::Vsetvli { rd: xreg(ops[0])?, rs1: xreg(ops[1])?, sew, lmul })
        }
        ".word" => {
            arity(ops, 1, mnem)?;
            let h = ops[0].strip_prefix("0x").ok_or_else(|| AsmErrorKind::ParseError("`.word` takes a hex literal".into()))?;
            let w = u64::from_str_radix(h, 16).map_err(|e| AsmErrorKind::ParseError(e.to_string()))?;
            Ok(vec![Pending::Ready(Statement::Raw(w))])
        }
        _ => match parse_uvp(mnem, ops)? {
            Some(i) => Ok(vec![Pending::Ready(Statement::Uvp(i))]),
            None => Err(AsmErrorKind::UnknownMnemonic(mnem.to_string())),
        },
    }
}

/// Assembles source text.
pub fn assemble(text: &str) -> Result<AsmProgram, AsmError> {
    let mut pending: Vec<(usize, Pending)> = Vec::new();
    let mut symbols = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = n + 1;
        let err = |kind| AsmError { line, kind };
        let mut body = raw.split('#').next().unwrap_or("").trim();
        while let Some((head, tail)) = body.split_once(':') {
            let name = head.trim();
            if !is_label_name(name) {
                break;
            }
            if symbols.insert(name.to_string(), pending.len()).is_some() {
                return Err(err(AsmErrorKind::DuplicateLabel(name.to_string())));
            }
            body = tail.trim();
        }
        if body.is_empty() {
            continue;
        }
        let (mnem, rest) = body.split_once(char::is_whitespace).unwrap_or((body, ""));
        let ops: Vec<&str> = if rest.trim().is_empty() { vec![] } else { rest.split(',').map(str::trim).collect() };
        for p in parse_statement(mnem, &ops).map_err(err)? {
            pending.push((line, p));
        }
    }
    let mut statements = Vec::with_capacity(pending.len());
    for (pc, (line, p)) in pending.into_iter().enumerate() {
        let resolve = |label: &str| -> Result<usize, AsmError> {
            symbols.get(label).copied().ok_or(AsmError { line, kind: AsmErrorKind::UndefinedLabel(label.to_string()) })
        };
        let stmt = match p {
            Pending::Ready(s) => s,
            Pending::Branch { cond, rs1, rs2, label } => {
                let target = resolve(&label)?;
                check_reach(pc, target, 12, line)?;
                Statement::Scalar(ScalarOp::Branch { cond, rs1, rs2, target })
            }
            Pending::Jal { rd, label } => {
                let target = resolve(&label)?;
                check_reach(pc, target, 20, line)?;
                Statement::Scalar(ScalarOp::Jal { rd, target })
            }
        };
        statements.push(stmt);
    }
    Ok(AsmProgram { statements, symbols })
}

/// Byte offset `(target - pc) * 4` must fit a signed `bits + 1`-bit field.
fn check_reach(pc: usize, target: usize, bits: u32, line: usize) -> Result<(), AsmError> {
    let off = (target as i64 - pc as i64) * 4;
    if off < -(1 << bits) || off >= 1 << bits {
        return Err(AsmError { line, kind: AsmErrorKind::FieldOverflow(format!("branch offset {off} out of reach")) });
    }
    Ok(())
}

fn width_suffix(w: ElemWidth) -> &'static str {
    match w {
        ElemWidth::E8 => "",
        ElemWidth::E16 => ".e16",
    }
}

/// Canonical text for a vector instruction, or `None` when some field is
/// outside what the syntax can express.
fn format_uvp(i: &DecodedInstr) -> Option<String> {
    let m = i.mnemonic;
    let v = |r: u16| format!("v{r}");
    let x = |r: u16| (r < 32).then(|| xreg_name(r as u8).to_string());
    let mut ops: Vec<String> = match m.form() {
        OperandForm::VdVs1Vs2 => vec![v(i.vd_head), v(i.vs1_head), v(i.vs2_head)],
        OperandForm::VdVs2Rs => vec![v(i.vd_head), v(i.vs2_head), x(i.vs1_head)?],
        OperandForm::VdRs | OperandForm::Load => vec![v(i.vd_head), x(i.vs1_head)?],
        OperandForm::Vs1Vs2 => vec![v(i.vs1_head), v(i.vs2_head)],
        OperandForm::AvlOnly => vec![],
        OperandForm::Store => vec![v(i.vs2_head), x(i.vs1_head)?],
        OperandForm::VdVs2 => vec![v(i.vd_head), v(i.vs2_head)],
        OperandForm::CsrWrite => {
            let c = CsrId::from_index(i.vd_head).map_or_else(|| format!("csr{}", i.vd_head), |c| c.name().to_string());
            vec![c, x(i.vs1_head)?]
        }
    };
    if m.form() != OperandForm::CsrWrite {
        if i.vmask {
            ops.push("vm".into());
        }
        ops.push(xreg_name(i.rs_avl).to_string());
    }
    let text = format!("{}{} {}", m.name(), width_suffix(i.vew), ops.join(", "));
    // fields the syntax does not carry must be zero for the text to round-trip
    let reparsed = {
        let (mnem, rest) = text.split_once(' ').unwrap_or((&text, ""));
        let ops: Vec<&str> = if rest.is_empty() { vec![] } else { rest.split(", ").collect() };
        parse_uvp(mnem, &ops).ok().flatten()?
    };
    (reparsed == *i).then_some(text.trim_end().to_string())
}

fn format_scalar(op: &ScalarOp) -> String {
    let x = xreg_name;
    match *op {
        ScalarOp::Add { rd, rs1, rs2 } => format!("add {}, {}, {}", x(rd), x(rs1), x(rs2)),
        ScalarOp::Sub { rd, rs1, rs2 } => format!("sub {}, {}, {}", x(rd), x(rs1), x(rs2)),
        ScalarOp::Addi { rd, rs1, imm } => format!("addi {}, {}, {imm}", x(rd), x(rs1)),
        ScalarOp::Slli { rd, rs1, shamt } => format!("slli {}, {}, {shamt}", x(rd), x(rs1)),
        ScalarOp::Srli { rd, rs1, shamt } => format!("srli {}, {}, {shamt}", x(rd), x(rs1)),
        ScalarOp::Lui { rd, imm20 } => format!("lui {}, {imm20:#x}", x(rd)),
        ScalarOp::Lw { rd, rs1, imm } => format!("lw {}, {imm}({})", x(rd), x(rs1)),
        ScalarOp::Sw { rs2, rs1, imm } => format!("sw {}, {imm}({})", x(rs2), x(rs1)),
        ScalarOp::Branch { cond, rs1, rs2, target } => format!("{} {}, {}, L{target}", cond.name(), x(rs1), x(rs2)),
        ScalarOp::Jal { rd, target } => format!("jal {}, L{target}", x(rd)),
        ScalarOp::Vsetvli { rd, rs1, sew, lmul } => format!("vsetvli {}, {}, e{sew}, m{lmul}", x(rd), x(rs1)),
    }
}

/// Canonical text for a program; branch targets get `L<slot>:` labels.
pub fn disassemble(p: &AsmProgram) -> String {
    let n = p.statements.len();
    let lines: Vec<String> = p
        .statements
        .iter()
        .enumerate()
        .map(|(pc, s)| {
            let raw = || format!(".word {:#018x}", s.to_word(pc).unwrap_or(0));
            match s {
                Statement::Scalar(op) if op.target().is_some_and(|t| t > n) => raw(),
                Statement::Scalar(op) => format_scalar(op),
                Statement::Uvp(i) => format_uvp(i).unwrap_or_else(raw),
                Statement::Raw(w) => format!(".word {w:#018x}"),
            }
        })
        .collect();
    let targets: BTreeSet<usize> = p
        .statements
        .iter()
        .zip(&lines)
        .filter(|(_, l)| !l.starts_with(".word"))
        .filter_map(|(s, _)| match s {
            Statement::Scalar(op) => op.target(),
            _ => None,
        })
        .collect();
    let mut out = String::new();
    for (pc, line) in lines.iter().enumerate() {
        if targets.contains(&pc) {
            let _ = writeln!(out, "L{pc}:");
        }
        let _ = writeln!(out, "    {line}");
    }
    if targets.contains(&n) {
        let _ = writeln!(out, "L{n}:");
    }
    out
}

/// Disassembles raw words.
pub fn disassemble_words(words: &[u64]) -> String {
    disassemble(&AsmProgram::from_words(words))
}

/// Every opcode-table mnemonic with a sample operand list, for grammar tests.
pub fn grammar_samples() -> Vec<String> {
    OpcodeTable::get()
        .entries()
        .iter()
        .map(|e| {
            let i = DecodedInstr::new(e.mnemonic, ElemWidth::E16, false, 1, 2, 3, 10);
            let i = match e.mnemonic.form() {
                OperandForm::VdVs2Rs | OperandForm::VdRs | OperandForm::Load | OperandForm::Store => {
                    DecodedInstr { vs1_head: 11, ..i }
                }
                OperandForm::CsrWrite => DecodedInstr::new(e.mnemonic, ElemWidth::E8, false, 2, 11, 0, 0),
                _ => i,
            };
            canonical(&i)
        })
        .collect()
}

/// Text for one instruction with unused fields cleared.
pub fn canonical(i: &DecodedInstr) -> String {
    let m: Mnemonic = i.mnemonic;
    let c = |vd, vs1, vs2, avl| DecodedInstr::new(m, i.vew, i.vmask, vd, vs1, vs2, avl);
    let cleaned = match m.form() {
        OperandForm::VdVs1Vs2 => c(i.vd_head, i.vs1_head, i.vs2_head, i.rs_avl),
        OperandForm::VdVs2Rs => c(i.vd_head, i.vs1_head, i.vs2_head, i.rs_avl),
        OperandForm::VdRs | OperandForm::Load => c(i.vd_head, i.vs1_head, 0, i.rs_avl),
        OperandForm::Vs1Vs2 => c(0, i.vs1_head, i.vs2_head, i.rs_avl),
        OperandForm::AvlOnly => c(0, 0, 0, i.rs_avl),
        OperandForm::Store => c(0, i.vs1_head, i.vs2_head, i.rs_avl),
        OperandForm::VdVs2 => c(i.vd_head, 0, i.vs2_head, i.rs_avl),
        OperandForm::CsrWrite => DecodedInstr::new(m, ElemWidth::E8, false, i.vd_head, i.vs1_head, 0, 0),
    };
    format_uvp(&cleaned).expect("cleaned instruction is expressible")
}
