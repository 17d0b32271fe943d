//! Cycle trace records and their CSV form.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TraceKind {
    Issue,
    Stall,
    Uop,
    Commit,
}

impl TraceKind {
    pub fn name(self) -> &'static str {
        match self {
            TraceKind::Issue => "issue",
            TraceKind::Stall => "stall",
            TraceKind::Uop => "uop",
            TraceKind::Commit => "commit",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub cycle: u64,
    pub unit: &'static str,
    /// Dynamic vector instruction number; scalar statements use `u64::MAX`.
    pub instr_id: u64,
    pub mnemonic: String,
    pub event: TraceKind,
}

pub const CSV_HEADER: &str = "cycle,unit,instr_id,mnemonic,event";

/// Renders events sorted by cycle; ties keep emission order.
pub fn to_csv(events: &[TraceEvent]) -> String {
    let mut sorted: Vec<&TraceEvent> = events.iter().collect();
    sorted.sort_by_key(|e| e.cycle);
    let mut out = String::with_capacity(events.len() * 32);
    out.push_str(CSV_HEADER);
    out.push('\n');
    for e in sorted {
        let id = if e.instr_id == u64::MAX { "-".to_string() } else { e.instr_id.to_string() };
        let _ = writeln!(out, "{},{},{},{},{}", e.cycle, e.unit, id, e.mnemonic, e.event.name());
    }
    out
}
