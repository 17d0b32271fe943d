//! C ABI over the UVP simulator.
//!
//! Every entry point returns a [`UvpStatus`]. On failure a message is kept per
//! thread and can be copied out with [`uvp_last_error`]. Handles returned by
//! `*_new` functions are owned by the caller and released with the matching
//! `*_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::ptr;

use uvp_core::bench::{self, BaselineConfig, KernelSpec, Objective};
use uvp_core::frontend::{self, AsmProgram};
use uvp_core::machine::{MachineConfig, MachineState};
use uvp_core::sequencer::{self, ScheduleMode, SimOptions};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UvpStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidConfig = 3,
    Assemble = 4,
    Execute = 5,
    MemoryFault = 6,
    BufferTooSmall = 7,
    Kernel = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UvpKernel {
    Matmul = 0,
    Fft = 1,
    Redsum = 2,
}

/// Machine parameters mirrored from the core configuration.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct UvpConfig {
    pub n_lane: u32,
    pub vrf_depth: u32,
    pub vlen_bits: u32,
    pub mem_latency_cycles: u32,
    pub n_id: u32,
    pub lane_word_bits: u32,
    pub mem_bytes: u64,
}

impl From<UvpConfig> for MachineConfig {
    fn from(c: UvpConfig) -> Self {
        MachineConfig {
            n_lane: c.n_lane,
            vrf_depth: c.vrf_depth,
            vlen_bits: c.vlen_bits,
            mem_latency_cycles: c.mem_latency_cycles,
            n_id: c.n_id,
            lane_word_bits: c.lane_word_bits,
            mem_bytes: c.mem_bytes,
        }
    }
}

/// Summary of one program or kernel run.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct UvpStats {
    pub cycles: u64,
    pub instructions: u64,
    pub arithmetic: u64,
    pub configuration: u64,
    pub mem: u64,
    pub spill_fill: u64,
    pub scalar: u64,
}

/// Opaque machine state.
pub struct UvpMachine {
    state: MachineState,
}

/// Opaque assembled program.
pub struct UvpProgram {
    prog: AsmProgram,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn fail(status: UvpStatus, msg: impl ToString) -> UvpStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.to_string());
    status
}

unsafe fn str_arg<'a>(p: *const c_char) -> Result<&'a str, UvpStatus> {
    if p.is_null() {
        return Err(fail(UvpStatus::NullPointer, "null string"));
    }
    CStr::from_ptr(p).to_str().map_err(|e| fail(UvpStatus::InvalidUtf8, e))
}

macro_rules! try_ffi {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(s) => return s,
        }
    };
}

macro_rules! non_null {
    ($($p:ident),+) => {
        $(if $p.is_null() {
            return fail(UvpStatus::NullPointer, concat!("null ", stringify!($p)));
        })+
    };
}

/// Copies the last error message of this thread into `buf` as a NUL-terminated
/// string. Returns the full message length without the terminator.
///
/// # Safety
/// `buf` must be valid for `len` bytes or null.
#[no_mangle]
pub unsafe extern "C" fn uvp_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            ptr::copy_nonoverlapping(msg.as_ptr(), buf as *mut u8, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Fills `out` with the default machine parameters.
///
/// # Safety
/// `out` must point to writable memory for one `UvpConfig`.
#[no_mangle]
pub unsafe extern "C" fn uvp_config_default(out: *mut UvpConfig) -> UvpStatus {
    non_null!(out);
    let c = MachineConfig::default();
    *out = UvpConfig {
        n_lane: c.n_lane,
        vrf_depth: c.vrf_depth,
        vlen_bits: c.vlen_bits,
        mem_latency_cycles: c.mem_latency_cycles,
        n_id: c.n_id,
        lane_word_bits: c.lane_word_bits,
        mem_bytes: c.mem_bytes,
    };
    UvpStatus::Ok
}

/// # Safety
/// `cfg` must be readable and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn uvp_machine_new(cfg: *const UvpConfig, out: *mut *mut UvpMachine) -> UvpStatus {
    non_null!(cfg, out);
    let state = try_ffi!(MachineState::new((*cfg).into()).map_err(|e| fail(UvpStatus::InvalidConfig, e)));
    *out = Box::into_raw(Box::new(UvpMachine { state }));
    UvpStatus::Ok
}

/// # Safety
/// `m` must come from `uvp_machine_new` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn uvp_machine_free(m: *mut UvpMachine) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// # Safety
/// `m` must be a live machine and `data` readable for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn uvp_machine_write_mem(m: *mut UvpMachine, addr: u64, data: *const u8, len: usize) -> UvpStatus {
    non_null!(m, data);
    let bytes = std::slice::from_raw_parts(data, len);
    try_ffi!((*m).state.mem.write(addr, bytes).map_err(|e| fail(UvpStatus::MemoryFault, e)));
    UvpStatus::Ok
}

/// # Safety
/// `m` must be a live machine and `out` writable for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn uvp_machine_read_mem(m: *const UvpMachine, addr: u64, out: *mut u8, len: usize) -> UvpStatus {
    non_null!(m, out);
    let src = try_ffi!((*m).state.mem.peek(addr, len as u64).map_err(|e| fail(UvpStatus::MemoryFault, e)));
    ptr::copy_nonoverlapping(src.as_ptr(), out, len);
    UvpStatus::Ok
}

/// Reads scalar register `r` (x0..x31).
///
/// # Safety
/// `m` must be a live machine and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn uvp_machine_xreg(m: *const UvpMachine, r: u8, out: *mut u32) -> UvpStatus {
    non_null!(m, out);
    if r >= 32 {
        return fail(UvpStatus::Execute, format!("no register x{r}"));
    }
    *out = (*m).state.xreg(r);
    UvpStatus::Ok
}

/// # Safety
/// `m` must be a live machine.
#[no_mangle]
pub unsafe extern "C" fn uvp_machine_set_xreg(m: *mut UvpMachine, r: u8, v: u32) -> UvpStatus {
    non_null!(m);
    if r >= 32 {
        return fail(UvpStatus::Execute, format!("no register x{r}"));
    }
    (*m).state.set_xreg(r, v);
    UvpStatus::Ok
}

/// Assembles UVP assembly text.
///
/// # Safety
/// `text` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn uvp_program_assemble(text: *const c_char, out: *mut *mut UvpProgram) -> UvpStatus {
    non_null!(out);
    let text = try_ffi!(str_arg(text));
    let prog = try_ffi!(frontend::assemble(text).map_err(|e| fail(UvpStatus::Assemble, e)));
    *out = Box::into_raw(Box::new(UvpProgram { prog }));
    UvpStatus::Ok
}

/// # Safety
/// `p` must come from `uvp_program_assemble` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn uvp_program_free(p: *mut UvpProgram) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Runs `p` on `m` with the pipelined schedule.
///
/// # Safety
/// `m` and `p` must be live handles; `stats` may be null.
#[no_mangle]
pub unsafe extern "C" fn uvp_machine_run(m: *mut UvpMachine, p: *const UvpProgram, stats: *mut UvpStats) -> UvpStatus {
    non_null!(m, p);
    let opts = SimOptions { mode: ScheduleMode::Pipelined, ..SimOptions::default() };
    let (r, _) = try_ffi!(sequencer::run(&(*p).prog, &mut (*m).state, opts).map_err(|e| fail(UvpStatus::Execute, e)));
    if !stats.is_null() {
        let mut s = UvpStats { cycles: r.cycles, instructions: r.statements, ..UvpStats::default() };
        for (name, n) in &r.mnemonic_counts {
            *category(&mut s, bench::classify_mnemonic(name)) += n;
        }
        *stats = s;
    }
    UvpStatus::Ok
}

fn category(s: &mut UvpStats, c: bench::InstrCategory) -> &mut u64 {
    use bench::InstrCategory::*;
    match c {
        Arithmetic => &mut s.arithmetic,
        Configuration => &mut s.configuration,
        Mem => &mut s.mem,
        SpillFill => &mut s.spill_fill,
        Scalar => &mut s.scalar,
    }
}

fn stats_of(r: &bench::RunReport) -> UvpStats {
    let mut s = UvpStats { cycles: r.cycles, instructions: r.breakdown.total(), ..UvpStats::default() };
    for c in bench::InstrCategory::ALL {
        *category(&mut s, c) = r.breakdown.get(c);
    }
    s
}

fn spec_of(kernel: UvpKernel, a: u32, b: u32, c: u32, seed: u64) -> KernelSpec {
    match kernel {
        UvpKernel::Matmul => KernelSpec::matmul(a, b, c),
        UvpKernel::Fft => KernelSpec::fft(a),
        UvpKernel::Redsum => KernelSpec::redsum(a),
    }
    .with_seed(seed)
}

/// Runs a benchmark kernel on UVP (`cfg`) and on the baseline with
/// `n_lane / lane_ratio` lanes. `b` and `c` are only read for matmul.
/// The baseline runs with the fastest register grouping.
///
/// # Safety
/// `cfg` must be readable; `uvp` and `baseline` may be null.
#[no_mangle]
pub unsafe extern "C" fn uvp_kernel_compare(
    cfg: *const UvpConfig,
    lane_ratio: u32,
    kernel: UvpKernel,
    a: u32,
    b: u32,
    c: u32,
    seed: u64,
    uvp: *mut UvpStats,
    baseline: *mut UvpStats,
) -> UvpStatus {
    non_null!(cfg);
    if lane_ratio == 0 {
        return fail(UvpStatus::InvalidConfig, "lane_ratio must be positive");
    }
    let mc: MachineConfig = (*cfg).into();
    let spec = spec_of(kernel, a, b, c, seed);
    let u = try_ffi!(bench::run_uvp(&spec, &mc, SimOptions::default()).map_err(|e| fail(UvpStatus::Kernel, e)));
    let bc = BaselineConfig { select: Objective::Cycles, ..BaselineConfig::matched(&mc, lane_ratio) };
    let base = try_ffi!(bench::run_baseline(&spec, &bc).map_err(|e| fail(UvpStatus::Kernel, e)));
    if u.output != base.output {
        return fail(UvpStatus::Kernel, "UVP and baseline outputs differ");
    }
    if !uvp.is_null() {
        *uvp = stats_of(&u.report);
    }
    if !baseline.is_null() {
        *baseline = stats_of(&base.report);
    }
    UvpStatus::Ok
}

/// Runs a kernel on UVP and writes its JSON report, NUL-terminated, into `buf`.
/// `written` receives the report length; if the buffer is too small nothing is
/// copied and `BufferTooSmall` is returned.
///
/// # Safety
/// `cfg` must be readable, `buf` writable for `len` bytes, `written` writable.
#[no_mangle]
pub unsafe extern "C" fn uvp_kernel_report_json(
    cfg: *const UvpConfig,
    kernel: UvpKernel,
    a: u32,
    b: u32,
    c: u32,
    seed: u64,
    buf: *mut c_char,
    len: usize,
    written: *mut usize,
) -> UvpStatus {
    non_null!(cfg, written);
    let spec = spec_of(kernel, a, b, c, seed);
    let r = try_ffi!(bench::run_uvp(&spec, &(*cfg).into(), SimOptions::default()).map_err(|e| fail(UvpStatus::Kernel, e)));
    let json = r.report.to_json();
    *written = json.len();
    if buf.is_null() || len <= json.len() {
        return fail(UvpStatus::BufferTooSmall, format!("report needs {} bytes", json.len() + 1));
    }
    ptr::copy_nonoverlapping(json.as_ptr(), buf as *mut u8, json.len());
    *buf.add(json.len()) = 0;
    UvpStatus::Ok
}
