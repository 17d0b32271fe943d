//! Architectural state: vector register file, the single mask register,
//! CSRs, scalar registers and a flat byte-addressed memory, plus register
//! group resolution.
//!
//! A physical vector register is `vlen_bits` wide. A register group is the
//! contiguous span `head..=tail` holding `avl` elements packed in order.
//! Element `e` of a group belongs to lane `e % n_lane` and is that lane's
//! `e / n_lane`-th element, so every lane holds a balanced, in-order slice.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::datapath::ElemWidth;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MachineError {
    #[error("invalid machine config: {0}")]
    InvalidConfig(String),
    #[error("register group v{head}..v{tail} overflows the {depth}-register file")]
    GroupOverflow { head: u32, tail: u64, depth: u32 },
    #[error("register v{head} out of range (depth {depth})")]
    RegisterOutOfRange { head: u32, depth: u32 },
    #[error("register group must hold at least one element")]
    EmptyGroup,
    #[error("element {index} outside group of {avl}")]
    IndexOutOfGroup { index: u32, avl: u32 },
    #[error("memory fault at {addr:#x} (+{len}): {reason}")]
    MemFault { addr: u64, len: u64, reason: &'static str },
    #[error("mask bit {index} outside the mask register ({len} bits)")]
    MaskOutOfRange { index: u64, len: u64 },
    #[error("i/o: {0}")]
    Io(String),
}

/// Static machine parameters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct MachineConfig {
    pub n_lane: u32,
    pub vrf_depth: u32,
    pub vlen_bits: u32,
    pub mem_latency_cycles: u32,
    pub n_id: u32,
    /// SRAM word width of one lane; sets how many elements a lane processes per cycle.
    pub lane_word_bits: u32,
    pub mem_bytes: u64,
}

impl Default for MachineConfig {
    fn default() -> Self {
        Self {
            n_lane: 16,
            vrf_depth: 32,
            vlen_bits: 256,
            mem_latency_cycles: 4,
            n_id: 8,
            lane_word_bits: 64,
            mem_bytes: 1 << 20,
        }
    }
}

/// Highest register count reachable with `vrextra` extension bits.
pub const MAX_VRF_DEPTH: u32 = 1 << 16;

impl MachineConfig {
    pub fn validate(&self) -> Result<(), MachineError> {
        let bad = |m: String| Err(MachineError::InvalidConfig(m));
        if !self.n_lane.is_power_of_two() || self.n_lane > 64 {
            return bad(format!("n_lane {} must be a power of two up to 64", self.n_lane));
        }
        if self.vrf_depth == 0 || self.vrf_depth > MAX_VRF_DEPTH {
            return bad(format!("vrf_depth {} outside 1..={MAX_VRF_DEPTH}", self.vrf_depth));
        }
        if self.vlen_bits == 0 || !self.vlen_bits.is_multiple_of(16) {
            return bad(format!("vlen_bits {} must be a positive multiple of 16", self.vlen_bits));
        }
        if self.n_id == 0 || self.n_id > 64 {
            return bad(format!("n_id {} outside 1..=64", self.n_id));
        }
        if self.lane_word_bits == 0 || !self.lane_word_bits.is_multiple_of(16) {
            return bad(format!("lane_word_bits {} must be a positive multiple of 16", self.lane_word_bits));
        }
        Ok(())
    }

    pub fn vrf_bytes(&self) -> usize {
        self.vrf_depth as usize * (self.vlen_bits / 8) as usize
    }

    /// Mask register size: one bit per VRF byte.
    pub fn mask_bits(&self) -> u64 {
        self.vrf_bytes() as u64
    }

    pub fn elems_per_reg(&self, w: ElemWidth) -> u32 {
        self.vlen_bits / w.bits()
    }

    /// Elements one lane consumes per cycle.
    pub fn lane_simd_width(&self, w: ElemWidth) -> u32 {
        (self.lane_word_bits / w.bits()).max(1)
    }

    /// Element capacity of the whole register file.
    pub fn capacity(&self, w: ElemWidth) -> u64 {
        self.vrf_depth as u64 * self.elems_per_reg(w) as u64
    }

    pub fn from_json(s: &str) -> Result<Self, MachineError> {
        let c: Self = serde_json::from_str(s).map_err(|e| MachineError::InvalidConfig(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn from_toml(s: &str) -> Result<Self, MachineError> {
        let c: Self = toml::from_str(s).map_err(|e| MachineError::InvalidConfig(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    /// Loads JSON or TOML depending on the file extension.
    pub fn load(path: &Path) -> Result<Self, MachineError> {
        let text = std::fs::read_to_string(path).map_err(|e| MachineError::Io(e.to_string()))?;
        match path.extension().and_then(|e| e.to_str()) {
            Some("toml") => Self::from_toml(&text),
            _ => Self::from_json(&text),
        }
    }
}

/// One lane's share of a group inside one physical register.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LaneSlice {
    pub register: u32,
    /// Index of the first element within the lane's own sequence.
    pub word_offset: u32,
    pub count: u32,
}

/// A resolved register group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegGroup {
    pub head: u32,
    pub elem_width: ElemWidth,
    pub avl: u32,
    pub tail: u32,
    pub vlen_bits: u32,
    pub n_lane: u32,
}

impl RegGroup {
    pub fn elems_per_reg(&self) -> u32 {
        self.vlen_bits / self.elem_width.bits()
    }

    /// Byte offset of element `i` inside the flat register file.
    #[inline]
    pub fn byte_offset(&self, i: u32) -> usize {
        self.head as usize * (self.vlen_bits / 8) as usize + i as usize * self.elem_width.bytes()
    }

    /// `(lane, register, offset within the lane's sequence)` of element `i`.
    pub fn locate(&self, i: u32) -> (u32, u32, u32) {
        (i % self.n_lane, self.head + i / self.elems_per_reg(), i / self.n_lane)
    }

    pub fn overlaps(&self, other: &RegGroup) -> bool {
        self.head <= other.tail && other.head <= self.tail
    }

    pub fn registers(&self) -> std::ops::RangeInclusive<u32> {
        self.head..=self.tail
    }

    /// Per-lane list of the registers the lane touches and how many elements each holds.
    pub fn lane_slices(&self) -> Vec<Vec<LaneSlice>> {
        let epr = self.elems_per_reg();
        let n = self.n_lane;
        let mut out = vec![Vec::new(); n as usize];
        for r in 0..=(self.tail - self.head) {
            let start = r * epr;
            let end = ((r + 1) * epr).min(self.avl);
            for (lane, slices) in out.iter_mut().enumerate() {
                let lane = lane as u32;
                // first element >= start congruent to lane mod n
                let first = start + (lane + n - start % n) % n;
                if first >= end {
                    continue;
                }
                let count = (end - 1 - first) / n + 1;
                slices.push(LaneSlice { register: self.head + r, word_offset: first / n, count });
            }
        }
        out
    }
}

/// Resolves the span of registers covering `avl` elements from `head`.
pub fn resolve_rg(head: u32, avl: u32, vew: ElemWidth, cfg: &MachineConfig) -> Result<RegGroup, MachineError> {
    if head >= cfg.vrf_depth {
        return Err(MachineError::RegisterOutOfRange { head, depth: cfg.vrf_depth });
    }
    if avl == 0 {
        return Err(MachineError::EmptyGroup);
    }
    let span = (avl as u64 * vew.bits() as u64).div_ceil(cfg.vlen_bits as u64);
    let tail = head as u64 + span - 1;
    if tail >= cfg.vrf_depth as u64 {
        return Err(MachineError::GroupOverflow { head, tail, depth: cfg.vrf_depth });
    }
    Ok(RegGroup { head, elem_width: vew, avl, tail: tail as u32, vlen_bits: cfg.vlen_bits, n_lane: cfg.n_lane })
}

/// The single architectural mask register.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskRegFile {
    bits: Vec<u64>,
    len: u64,
}

impl MaskRegFile {
    pub fn new(len: u64) -> Self {
        Self { bits: vec![0; len.div_ceil(64) as usize], len }
    }

    pub fn len(&self) -> u64 {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn get(&self, i: u64) -> Result<bool, MachineError> {
        if i >= self.len {
            return Err(MachineError::MaskOutOfRange { index: i, len: self.len });
        }
        Ok(self.bits[(i / 64) as usize] >> (i % 64) & 1 == 1)
    }

    pub fn set(&mut self, i: u64, v: bool) -> Result<(), MachineError> {
        if i >= self.len {
            return Err(MachineError::MaskOutOfRange { index: i, len: self.len });
        }
        let word = &mut self.bits[(i / 64) as usize];
        if v {
            *word |= 1 << (i % 64);
        } else {
            *word &= !(1 << (i % 64));
        }
        Ok(())
    }

    pub fn as_words(&self) -> &[u64] {
        &self.bits
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CsrFile {
    pub vsglen: u32,
    pub vrextra: u32,
    pub vshamt: u32,
}

impl CsrFile {
    /// Applies `vrextra` as high-order bits above the 13 encoded index bits.
    pub fn extend_index(&self, field: u16) -> u32 {
        (self.vrextra << crate::isa::REG_INDEX_BITS) | field as u32
    }
}

/// Flat memory image with access counters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MemoryModel {
    pub base: u64,
    bytes: Vec<u8>,
    pub reads: u64,
    pub writes: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemSidecar {
    pub base_addr: u64,
    pub length: u64,
}

impl MemoryModel {
    pub fn new(base: u64, size: u64) -> Self {
        Self { base, bytes: vec![0; size as usize], reads: 0, writes: 0 }
    }

    pub fn limit(&self) -> u64 {
        self.base + self.bytes.len() as u64
    }

    fn range(&self, addr: u64, len: u64) -> Result<std::ops::Range<usize>, MachineError> {
        if addr < self.base || addr.checked_add(len).is_none_or(|end| end > self.limit()) {
            return Err(MachineError::MemFault { addr, len, reason: "out of range" });
        }
        let off = (addr - self.base) as usize;
        Ok(off..off + len as usize)
    }

    pub fn read(&mut self, addr: u64, len: u64) -> Result<&[u8], MachineError> {
        let r = self.range(addr, len)?;
        self.reads += 1;
        Ok(&self.bytes[r])
    }

    pub fn write(&mut self, addr: u64, data: &[u8]) -> Result<(), MachineError> {
        let r = self.range(addr, data.len() as u64)?;
        self.writes += 1;
        self.bytes[r].copy_from_slice(data);
        Ok(())
    }

    pub fn peek(&self, addr: u64, len: u64) -> Result<&[u8], MachineError> {
        let r = self.range(addr, len)?;
        Ok(&self.bytes[r])
    }

    pub fn read_u32(&mut self, addr: u64) -> Result<u32, MachineError> {
        if !addr.is_multiple_of(4) {
            return Err(MachineError::MemFault { addr, len: 4, reason: "unaligned word" });
        }
        Ok(u32::from_le_bytes(self.read(addr, 4)?.try_into().unwrap()))
    }

    pub fn write_u32(&mut self, addr: u64, v: u32) -> Result<(), MachineError> {
        if !addr.is_multiple_of(4) {
            return Err(MachineError::MemFault { addr, len: 4, reason: "unaligned word" });
        }
        self.write(addr, &v.to_le_bytes())
    }

    pub fn write_i16s(&mut self, addr: u64, vals: &[i16]) -> Result<(), MachineError> {
        let bytes: Vec<u8> = vals.iter().flat_map(|v| v.to_le_bytes()).collect();
        self.write(addr, &bytes)
    }

    pub fn read_i16s(&self, addr: u64, n: usize) -> Result<Vec<i16>, MachineError> {
        let b = self.peek(addr, n as u64 * 2)?;
        Ok(b.chunks_exact(2).map(|c| i16::from_le_bytes([c[0], c[1]])).collect())
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes
    }

    /// Writes the raw image and a `{base_addr, length}` JSON sidecar next to it.
    pub fn save_image(&self, path: &Path) -> Result<(), MachineError> {
        let io = |e: std::io::Error| MachineError::Io(e.to_string());
        std::fs::write(path, &self.bytes).map_err(io)?;
        let side = MemSidecar { base_addr: self.base, length: self.bytes.len() as u64 };
        std::fs::write(sidecar_path(path), serde_json::to_string_pretty(&side).unwrap()).map_err(io)
    }

    /// Copies a raw image into memory at the sidecar's base address (or at
    /// `self.base` when no sidecar exists).
    pub fn load_image(&mut self, path: &Path) -> Result<(), MachineError> {
        let io = |e: std::io::Error| MachineError::Io(e.to_string());
        let data = std::fs::read(path).map_err(io)?;
        let side = sidecar_path(path);
        let base = if side.exists() {
            let text = std::fs::read_to_string(side).map_err(io)?;
            let s: MemSidecar = serde_json::from_str(&text).map_err(|e| MachineError::Io(e.to_string()))?;
            if s.length != data.len() as u64 {
                return Err(MachineError::Io("sidecar length does not match image".into()));
            }
            s.base_addr
        } else {
            self.base
        };
        self.write(base, &data)
    }
}

fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut p = path.as_os_str().to_owned();
    p.push(".json");
    p.into()
}

/// Complete architectural state of one simulated machine.
#[derive(Debug, Clone)]
pub struct MachineState {
    pub cfg: MachineConfig,
    vrf: Vec<u8>,
    pub mask: MaskRegFile,
    pub csr: CsrFile,
    pub xregs: [u32; 32],
    pub mem: MemoryModel,
    /// Per-lane VRF access counters.
    pub lane_accesses: Vec<u64>,
    /// Sticky division-by-zero flag.
    pub div_fault: bool,
    pub cycles: u64,
    pub instret: u64,
}

impl MachineState {
    pub fn new(cfg: MachineConfig) -> Result<Self, MachineError> {
        cfg.validate()?;
        Ok(Self {
            vrf: vec![0; cfg.vrf_bytes()],
            mask: MaskRegFile::new(cfg.mask_bits()),
            csr: CsrFile::default(),
            xregs: [0; 32],
            mem: MemoryModel::new(0, cfg.mem_bytes),
            lane_accesses: vec![0; cfg.n_lane as usize],
            div_fault: false,
            cycles: 0,
            instret: 0,
            cfg,
        })
    }

    pub fn xreg(&self, r: u8) -> u32 {
        self.xregs[r as usize]
    }

    pub fn set_xreg(&mut self, r: u8, v: u32) {
        if r != 0 {
            self.xregs[r as usize] = v;
        }
    }

    #[inline]
    fn load_raw(&self, off: usize, w: ElemWidth) -> i32 {
        match w {
            ElemWidth::E8 => self.vrf[off] as i8 as i32,
            ElemWidth::E16 => i16::from_le_bytes([self.vrf[off], self.vrf[off + 1]]) as i32,
        }
    }

    #[inline]
    fn store_raw(&mut self, off: usize, w: ElemWidth, v: i32) {
        match w {
            ElemWidth::E8 => self.vrf[off] = v as i8 as u8,
            ElemWidth::E16 => self.vrf[off..off + 2].copy_from_slice(&(v as i16).to_le_bytes()),
        }
    }

    pub fn vrf_read(&mut self, g: &RegGroup, i: u32) -> Result<i32, MachineError> {
        if i >= g.avl {
            return Err(MachineError::IndexOutOfGroup { index: i, avl: g.avl });
        }
        self.lane_accesses[(i % g.n_lane) as usize] += 1;
        Ok(self.load_raw(g.byte_offset(i), g.elem_width))
    }

    /// Writes element `i` unless `mask_bit` is `Some(false)`, in which case
    /// the destination keeps its previous value.
    pub fn vrf_write(&mut self, g: &RegGroup, i: u32, v: i32, mask_bit: Option<bool>) -> Result<(), MachineError> {
        if i >= g.avl {
            return Err(MachineError::IndexOutOfGroup { index: i, avl: g.avl });
        }
        self.lane_accesses[(i % g.n_lane) as usize] += 1;
        if mask_bit != Some(false) {
            self.store_raw(g.byte_offset(i), g.elem_width, v);
        }
        Ok(())
    }

    /// Reads a whole group without touching the access counters.
    pub fn read_group(&self, g: &RegGroup) -> Vec<i32> {
        (0..g.avl).map(|i| self.load_raw(g.byte_offset(i), g.elem_width)).collect()
    }

    /// Writes a whole group, honoring an optional per-element mask.
    pub fn write_group(&mut self, g: &RegGroup, vals: &[i32], mask: Option<&[bool]>) {
        for (i, &v) in vals.iter().enumerate().take(g.avl as usize) {
            if mask.is_none_or(|m| m[i]) {
                self.store_raw(g.byte_offset(i as u32), g.elem_width, v);
            }
        }
    }

    fn check_transfer(&self, addr: u64, g: &RegGroup) -> Result<u64, MachineError> {
        let len = g.avl as u64 * g.elem_width.bytes() as u64;
        if !addr.is_multiple_of(g.elem_width.bytes() as u64) {
            return Err(MachineError::MemFault { addr, len, reason: "unaligned" });
        }
        if addr < self.mem.base || addr + len > self.mem.limit() {
            return Err(MachineError::MemFault { addr, len, reason: "out of range" });
        }
        Ok(len)
    }

    /// Unit-stride load of `g.avl` elements; returns the modeled cycle cost.
    pub fn mem_vload(&mut self, addr: u64, g: &RegGroup) -> Result<u64, MachineError> {
        let len = self.check_transfer(addr, g)?;
        let data = self.mem.read(addr, len)?.to_vec();
        let off = g.byte_offset(0);
        self.vrf[off..off + len as usize].copy_from_slice(&data);
        Ok(transfer_cycles(&self.cfg, g.avl))
    }

    pub fn mem_vstore(&mut self, addr: u64, g: &RegGroup) -> Result<u64, MachineError> {
        let len = self.check_transfer(addr, g)?;
        let off = g.byte_offset(0);
        let data = self.vrf[off..off + len as usize].to_vec();
        self.mem.write(addr, &data)?;
        Ok(transfer_cycles(&self.cfg, g.avl))
    }

    /// Memory bytes a vector load would deliver, without side effects.
    pub fn peek_load(&self, addr: u64, g: &RegGroup) -> Result<Vec<i32>, MachineError> {
        let len = self.check_transfer(addr, g)?;
        let b = self.mem.peek(addr, len)?;
        Ok(match g.elem_width {
            ElemWidth::E8 => b.iter().map(|&x| x as i8 as i32).collect(),
            ElemWidth::E16 => b.chunks_exact(2).map(|c| i16::from_le_bytes([c[0], c[1]]) as i32).collect(),
        })
    }

    pub fn vrf_bytes(&self) -> &[u8] {
        &self.vrf
    }

    /// SHA-256 over all architectural state (VRF, mask, CSRs, scalar registers, memory).
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        h.update(&self.vrf);
        for w in self.mask.as_words() {
            h.update(w.to_le_bytes());
        }
        for v in [self.csr.vsglen, self.csr.vrextra, self.csr.vshamt] {
            h.update(v.to_le_bytes());
        }
        for x in self.xregs {
            h.update(x.to_le_bytes());
        }
        h.update(self.mem.as_bytes());
        hex(&h.finalize())
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Cycle cost of a unit-stride vector transfer: latency plus one striped beat per cycle.
pub fn transfer_cycles(cfg: &MachineConfig, avl: u32) -> u64 {
    cfg.mem_latency_cycles as u64 + avl.div_ceil(cfg.n_lane) as u64
}
