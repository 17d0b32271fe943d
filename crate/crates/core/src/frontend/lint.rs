//! Must-defined analysis for AVL registers.

use serde::{Deserialize, Serialize};

use super::{AsmProgram, ScalarOp, Statement};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AvlWarning {
    pub pc: usize,
    pub reg: u8,
}

fn successors(p: &AsmProgram, pc: usize) -> Vec<usize> {
    match p.statements[pc] {
        Statement::Scalar(ScalarOp::Jal { target, .. }) => vec![target],
        Statement::Scalar(ScalarOp::Branch { target, .. }) => vec![pc + 1, target],
        _ => vec![pc + 1],
    }
}

/// Flags vector statements whose AVL register may be read before any write
/// on some path from entry. `live_in` is a bit set of registers defined on
/// entry (x0 is always defined).
pub fn lint_avl(p: &AsmProgram, live_in: u32) -> Vec<AvlWarning> {
    let n = p.statements.len();
    // bit set of registers definitely written on every path reaching pc
    let mut defined: Vec<Option<u32>> = vec![None; n + 1];
    if n == 0 {
        return Vec::new();
    }
    defined[0] = Some(live_in | 1);
    let mut work = vec![0usize];
    while let Some(pc) = work.pop() {
        if pc >= n {
            continue;
        }
        let mut out = defined[pc].unwrap_or(u32::MAX);
        if let Statement::Scalar(op) = p.statements[pc] {
            if let Some(rd) = op.writes() {
                out |= 1 << rd;
            }
        }
        for s in successors(p, pc) {
            if s > n {
                continue;
            }
            let merged = defined[s].map_or(out, |d| d & out);
            if defined[s] != Some(merged) {
                defined[s] = Some(merged);
                work.push(s);
            }
        }
    }
    let mut warnings = Vec::new();
    for (pc, s) in p.statements.iter().enumerate() {
        let (Statement::Uvp(i), Some(d)) = (s, defined[pc]) else { continue };
        if i.mnemonic.form() != crate::isa::OperandForm::CsrWrite && d >> i.rs_avl & 1 == 0 {
            warnings.push(AvlWarning { pc, reg: i.rs_avl });
        }
    }
    warnings
}
