//! Kernel library, the strip-mining baseline model, the instruction
//! classifier and comparison reports.
//!
//! Both machines run the same kernels on the same inputs and produce
//! bit-identical outputs, so every ratio in a comparison measures control
//! and scheduling overhead only.

pub mod baseline;
pub mod kernels;

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::datapath::ElemWidth;
use crate::isa::{Category, OpcodeTable};
use crate::machine::MachineError;
use crate::sequencer::RunError;

pub use baseline::{run_baseline, run_baseline_with, BaselineConfig, BaselineRun, MatmulStyle, Objective};
pub use kernels::{kernel_fft, kernel_matmul, kernel_redsum, run_uvp};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BenchError {
    #[error("kernel needs {need} vector registers, machine has {have}")]
    GroupOverflow { need: u64, have: u64 },
    #[error("unsupported kernel: {0}")]
    UnsupportedKernel(String),
    #[error("invalid kernel shape: {0}")]
    InvalidShape(String),
    #[error("reports describe different kernels: {0} vs {1}")]
    MismatchedKernels(String, String),
    #[error(transparent)]
    Run(#[from] RunError),
    #[error(transparent)]
    Machine(#[from] MachineError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelKind {
    /// `(m×n)·(n×k)`.
    Matmul { m: u32, n: u32, k: u32 },
    /// `n`-point complex FFT on interleaved int16 data.
    Fft { n: u32 },
    /// Sum of `m` elements.
    Redsum { m: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub kind: KernelKind,
    pub vew: ElemWidth,
    pub seed: u64,
}

impl KernelSpec {
    pub fn matmul(m: u32, n: u32, k: u32) -> Self {
        Self { kind: KernelKind::Matmul { m, n, k }, vew: ElemWidth::E16, seed: 1 }
    }

    pub fn fft(n: u32) -> Self {
        Self { kind: KernelKind::Fft { n }, vew: ElemWidth::E16, seed: 1 }
    }

    pub fn redsum(m: u32) -> Self {
        Self { kind: KernelKind::Redsum { m }, vew: ElemWidth::E16, seed: 1 }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_vew(mut self, vew: ElemWidth) -> Self {
        self.vew = vew;
        self
    }

    /// `matmul(3,2,3)`, `fft2048`, `redsum1000`.
    pub fn name(&self) -> String {
        match self.kind {
            KernelKind::Matmul { m, n, k } => format!("matmul({m},{n},{k})"),
            KernelKind::Fft { n } => format!("fft{n}"),
            KernelKind::Redsum { m } => format!("redsum{m}"),
        }
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        let bad = |s: &str| Err(BenchError::InvalidShape(format!("{}: {s}", self.name())));
        match self.kind {
            KernelKind::Matmul { m, n, k } if m == 0 || n == 0 || k == 0 => bad("dimensions must be positive"),
            KernelKind::Fft { n } if n < 2 || !n.is_power_of_two() => bad("size must be a power of two ≥ 2"),
            KernelKind::Fft { .. } if self.vew != ElemWidth::E16 => bad("fft needs 16-bit elements"),
            KernelKind::Redsum { m: 0 } => bad("length must be positive"),
            _ => Ok(()),
        }
    }

    /// Kernel inputs drawn from the seed. Ranges keep matmul and redsum free
    /// of saturation so that any summation order gives the same result.
    pub fn inputs(&self) -> Vec<Vec<i32>> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let e8 = self.vew == ElemWidth::E8;
        match self.kind {
            KernelKind::Matmul { m, n, k } => {
                let r = if e8 { 2 } else { 30 };
                let mut draw = |len: u32| (0..len).map(|_| rng.gen_range(-r..=r)).collect::<Vec<i32>>();
                let a = draw(m * n);
                let b = draw(n * k);
                vec![a, b]
            }
            KernelKind::Fft { n } => vec![(0..2 * n).map(|_| rng.gen_range(-8192..8192)).collect()],
            KernelKind::Redsum { m } => {
                let r = (self.vew.max() / m as i32).clamp(0, 7);
                vec![(0..m).map(|_| rng.gen_range(-r..=r)).collect()]
            }
        }
    }
}

/// Instruction groups of the dynamic count breakdown.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InstrCategory {
    Arithmetic,
    Configuration,
    Mem,
    SpillFill,
    Scalar,
}

impl InstrCategory {
    pub const ALL: [InstrCategory; 5] =
        [InstrCategory::Arithmetic, InstrCategory::Configuration, InstrCategory::Mem, InstrCategory::SpillFill, InstrCategory::Scalar];

    pub fn name(self) -> &'static str {
        match self {
            InstrCategory::Arithmetic => "arithmetic",
            InstrCategory::Configuration => "configuration",
            InstrCategory::Mem => "mem",
            InstrCategory::SpillFill => "spill_fill",
            InstrCategory::Scalar => "scalar",
        }
    }
}

/// Category of an executed UVP-program statement, by mnemonic. Permutations
/// and reductions count as arithmetic; CSR writes as configuration.
pub fn classify_mnemonic(name: &str) -> InstrCategory {
    match OpcodeTable::get().lookup_name(name) {
        Some(e) => match e.category {
            Category::LoadStore => InstrCategory::Mem,
            Category::Csr => InstrCategory::Configuration,
            _ => InstrCategory::Arithmetic,
        },
        None if name == "vsetvli" => InstrCategory::Configuration,
        None => InstrCategory::Scalar,
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstrBreakdown {
    pub arithmetic: u64,
    pub configuration: u64,
    pub mem: u64,
    pub spill_fill: u64,
    pub scalar: u64,
}

impl InstrBreakdown {
    pub fn from_counts(counts: &BTreeMap<String, u64>) -> Self {
        let mut b = Self::default();
        for (name, &n) in counts {
            *b.get_mut(classify_mnemonic(name)) += n;
        }
        b
    }

    pub fn get(&self, c: InstrCategory) -> u64 {
        match c {
            InstrCategory::Arithmetic => self.arithmetic,
            InstrCategory::Configuration => self.configuration,
            InstrCategory::Mem => self.mem,
            InstrCategory::SpillFill => self.spill_fill,
            InstrCategory::Scalar => self.scalar,
        }
    }

    pub fn get_mut(&mut self, c: InstrCategory) -> &mut u64 {
        match c {
            InstrCategory::Arithmetic => &mut self.arithmetic,
            InstrCategory::Configuration => &mut self.configuration,
            InstrCategory::Mem => &mut self.mem,
            InstrCategory::SpillFill => &mut self.spill_fill,
            InstrCategory::Scalar => &mut self.scalar,
        }
    }

    pub fn total(&self) -> u64 {
        InstrCategory::ALL.iter().map(|&c| self.get(c)).sum()
    }
}

/// Outcome of one kernel run on either machine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub kernel: String,
    pub config: serde_json::Value,
    pub cycles: u64,
    pub breakdown: InstrBreakdown,
    /// SHA-256 of the kernel output elements.
    pub digest: String,
}

impl RunReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Kernel output plus its report.
#[derive(Debug, Clone)]
pub struct KernelRun {
    pub output: Vec<i32>,
    pub report: RunReport,
    pub trace: Vec<crate::sequencer::TraceEvent>,
}

/// SHA-256 over little-endian 16-bit (or 8-bit) output elements.
pub fn result_digest(vals: &[i32], w: ElemWidth) -> String {
    let mut h = Sha256::new();
    for &v in vals {
        match w {
            ElemWidth::E8 => h.update([v as i8 as u8]),
            ElemWidth::E16 => h.update((v as i16).to_le_bytes()),
        }
    }
    crate::machine::hex(&h.finalize())
}

/// Pass/fail thresholds applied by [`compare_and_report`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Targets {
    /// Accepted band for UVP/baseline total instruction count.
    pub instr_ratio: Option<(f64, f64)>,
    /// Minimum baseline/UVP arithmetic instruction count.
    pub arith_reduction_min: Option<f64>,
    /// Maximum UVP/baseline cycle ratio.
    pub cycle_ratio_max: Option<f64>,
}

impl Targets {
    pub fn none() -> Self {
        Self { instr_ratio: None, arith_reduction_min: None, cycle_ratio_max: None }
    }

    /// Instruction-count thresholds for fft2048.
    pub fn fft_counts() -> Self {
        Self { instr_ratio: Some((0.30, 0.55)), arith_reduction_min: Some(1.4), ..Self::none() }
    }

    /// Cycle threshold for fft2048.
    pub fn fft_cycles() -> Self {
        Self { cycle_ratio_max: Some(0.9), ..Self::none() }
    }

    /// Matmul only needs UVP to be faster.
    pub fn matmul() -> Self {
        Self { cycle_ratio_max: Some(1.0 - f64::EPSILON), ..Self::none() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub target: String,
    pub pass: bool,
}

/// Paired UVP and baseline runs of one kernel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub kernel: String,
    pub uvp: RunReport,
    pub baseline: RunReport,
    /// UVP cycles over baseline cycles.
    pub cycle_ratio: f64,
    /// UVP dynamic instructions over baseline dynamic instructions.
    pub instr_ratio: f64,
    /// Per category UVP/baseline; `None` when both are zero.
    pub category_ratios: BTreeMap<String, Option<f64>>,
    pub checks: Vec<Check>,
}

fn ratio(a: u64, b: u64) -> Option<f64> {
    match (a, b) {
        (0, 0) => None,
        (_, 0) => Some(f64::INFINITY),
        _ => Some(a as f64 / b as f64),
    }
}

pub fn compare_and_report(uvp: &RunReport, base: &RunReport, targets: &Targets) -> Result<Comparison, BenchError> {
    if uvp.kernel != base.kernel {
        return Err(BenchError::MismatchedKernels(uvp.kernel.clone(), base.kernel.clone()));
    }
    let cycle_ratio = ratio(uvp.cycles, base.cycles).unwrap_or(1.0);
    let instr_ratio = ratio(uvp.breakdown.total(), base.breakdown.total()).unwrap_or(1.0);
    let category_ratios =
        InstrCategory::ALL.iter().map(|&c| (c.name().to_string(), ratio(uvp.breakdown.get(c), base.breakdown.get(c)))).collect();
    let mut checks = Vec::new();
    if let Some((lo, hi)) = targets.instr_ratio {
        checks.push(Check {
            name: "instr_ratio".into(),
            value: instr_ratio,
            target: format!("[{lo}, {hi}]"),
            pass: (lo..=hi).contains(&instr_ratio),
        });
    }
    if let Some(min) = targets.arith_reduction_min {
        let v = ratio(base.breakdown.arithmetic, uvp.breakdown.arithmetic).unwrap_or(1.0);
        checks.push(Check { name: "arith_reduction".into(), value: v, target: format!(">= {min}"), pass: v >= min });
    }
    if let Some(max) = targets.cycle_ratio_max {
        checks.push(Check {
            name: "cycle_ratio".into(),
            value: cycle_ratio,
            target: format!("<= {max:.3}"),
            pass: cycle_ratio <= max,
        });
    }
    Ok(Comparison { kernel: uvp.kernel.clone(), uvp: uvp.clone(), baseline: base.clone(), cycle_ratio, instr_ratio, category_ratios, checks })
}

impl Comparison {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("comparison serializes")
    }

    /// One row per metric: `kernel,metric,uvp,baseline,ratio`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("kernel,metric,uvp,baseline,ratio\n");
        let f = |r: Option<f64>| r.map_or(String::new(), |v| format!("{v:.4}"));
        let _ = writeln!(out, "{},cycles,{},{},{:.4}", self.kernel, self.uvp.cycles, self.baseline.cycles, self.cycle_ratio);
        let (u, b) = (&self.uvp.breakdown, &self.baseline.breakdown);
        let _ = writeln!(out, "{},instructions,{},{},{:.4}", self.kernel, u.total(), b.total(), self.instr_ratio);
        for c in InstrCategory::ALL {
            let _ = writeln!(out, "{},{},{},{},{}", self.kernel, c.name(), u.get(c), b.get(c), f(self.category_ratios[c.name()]));
        }
        for c in &self.checks {
            let _ = writeln!(out, "{},check:{},{:.4},{},{}", self.kernel, c.name, c.value, c.target, if c.pass { "pass" } else { "fail" });
        }
        out
    }
}

/// The shapes compared by default: four power-of-two and four other sizes.
pub fn matmul_suite() -> Vec<(u32, u32, u32)> {
    vec![(4, 4, 4), (8, 8, 8), (16, 16, 16), (32, 32, 32), (3, 2, 3), (6, 6, 6), (12, 12, 12), (24, 24, 24)]
}

/// True when every matmul dimension is a power of two.
pub fn is_pow2_shape(m: u32, n: u32, k: u32) -> bool {
    m.is_power_of_two() && n.is_power_of_two() && k.is_power_of_two()
}
