//! Program container, assembler, disassembler and intrinsic expansion.

pub mod asm;
pub mod intrinsic;
pub mod lint;
pub mod scalar;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::isa::{self, DecodedInstr, InstrWord, IsaError, CUSTOM1, CUSTOM2};

pub use asm::{assemble, disassemble, disassemble_words};
pub use intrinsic::{expand_intrinsic, Form, IntrinsicCall, IntrinsicError, Operand, ScalarExpr};
pub use lint::{lint_avl, AvlWarning};
pub use scalar::{BranchCond, ScalarOp};

/// One program slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Statement {
    Scalar(ScalarOp),
    Uvp(DecodedInstr),
    /// A word that decodes to nothing; executing it faults.
    Raw(u64),
}

impl Statement {
    /// Binary image word for a statement at slot `pc`. Scalar statements occupy
    /// the low 32 bits.
    pub fn to_word(&self, pc: usize) -> Result<u64, IsaError> {
        Ok(match self {
            Statement::Scalar(op) => scalar::encode(op, pc) as u64,
            Statement::Uvp(i) => isa::encode(i)?.0,
            Statement::Raw(w) => *w,
        })
    }

    /// Inverse of [`Statement::to_word`]; undecodable words become `Raw`.
    pub fn from_word(w: u64, pc: usize) -> Statement {
        let opcode = (w & 0x7f) as u8;
        if opcode == CUSTOM1 || opcode == CUSTOM2 {
            if let Ok(i) = isa::decode(InstrWord(w)) {
                return Statement::Uvp(i);
            }
        } else if w >> 32 == 0 {
            if let Some(op) = scalar::decode(w as u32, pc) {
                return Statement::Scalar(op);
            }
        }
        Statement::Raw(w)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AsmErrorKind {
    #[error("parse error: {0}")]
    ParseError(String),
    #[error("unknown mnemonic `{0}`")]
    UnknownMnemonic(String),
    #[error("undefined label `{0}`")]
    UndefinedLabel(String),
    #[error("duplicate label `{0}`")]
    DuplicateLabel(String),
    #[error("field overflow: {0}")]
    FieldOverflow(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {kind}")]
pub struct AsmError {
    pub line: usize,
    pub kind: AsmErrorKind,
}

/// An assembled program: statements plus the label table.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AsmProgram {
    pub statements: Vec<Statement>,
    pub symbols: BTreeMap<String, usize>,
}

impl AsmProgram {
    pub fn new(statements: Vec<Statement>) -> Self {
        Self { statements, symbols: BTreeMap::new() }
    }

    pub fn len(&self) -> usize {
        self.statements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.statements.is_empty()
    }

    pub fn words(&self) -> Result<Vec<u64>, IsaError> {
        self.statements.iter().enumerate().map(|(pc, s)| s.to_word(pc)).collect()
    }

    /// Serialized binary container.
    pub fn to_binary(&self) -> Result<Vec<u8>, IsaError> {
        Ok(isa::write_binary(&self.words()?))
    }

    pub fn from_words(words: &[u64]) -> Self {
        Self::new(words.iter().enumerate().map(|(pc, &w)| Statement::from_word(w, pc)).collect())
    }

    pub fn from_binary(bytes: &[u8]) -> Result<Self, IsaError> {
        Ok(Self::from_words(&isa::read_binary(bytes)?))
    }
}
