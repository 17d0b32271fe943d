use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use uvp_core::bench::{self, BaselineConfig, Comparison, KernelSpec, MatmulStyle, Objective, Targets};
use uvp_core::frontend::{self, AsmProgram};
use uvp_core::machine::{MachineConfig, MachineState};
use uvp_core::sequencer::{self, trace, ScheduleMode, SimOptions};

#[derive(Parser)]
#[command(name = "uvp", version, about = "UVP vector extension simulator")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Assemble a text program into a binary image.
    Asm {
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Disassemble a binary image.
    Disasm { input: PathBuf },
    /// Run an assembly or binary program on a fresh machine.
    Sim(SimArgs),
    /// Run one benchmark kernel on UVP or on the baseline.
    Run(RunArgs),
    /// Run a kernel on both machines and write the comparison.
    Compare(CompareArgs),
}

#[derive(Args)]
struct MachineArgs {
    /// Lane count.
    #[arg(long)]
    lanes: Option<u32>,
    /// Vector register count.
    #[arg(long)]
    regs: Option<u32>,
    /// Bits per vector register.
    #[arg(long)]
    vlen: Option<u32>,
}

#[derive(Args)]
struct SimArgs {
    program: PathBuf,
    /// Machine configuration, TOML or JSON.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    machine: MachineArgs,
    /// Raw memory image loaded at address 0.
    #[arg(long)]
    mem_image: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Mode::Pipelined)]
    mode: Mode,
    #[arg(long)]
    trace: Option<PathBuf>,
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Pipelined,
    Serial,
    Unchecked,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kernel {
    Matmul,
    Fft,
    Redsum,
}

#[derive(Clone, Copy, ValueEnum)]
enum Style {
    Hadamard,
    RowBroadcast,
}

#[derive(Args)]
struct KernelArgs {
    #[arg(long, value_enum)]
    kernel: Kernel,
    /// `m,n,k` for matmul, `N` for fft, `M` for redsum.
    #[arg(long)]
    shape: String,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Baseline matmul formulation.
    #[arg(long, value_enum, default_value_t = Style::Hadamard)]
    matmul_style: Style,
    /// Fixed baseline LMUL instead of best-of.
    #[arg(long)]
    lmul: Option<u32>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    kernel: KernelArgs,
    #[command(flatten)]
    machine: MachineArgs,
    /// Run on the strip-mining baseline; machine flags then describe it.
    #[arg(long)]
    baseline: bool,
    #[arg(long)]
    trace: Option<PathBuf>,
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    kernel: KernelArgs,
    /// UVP machine; the baseline gets `lanes / lane_ratio` lanes.
    #[command(flatten)]
    machine: MachineArgs,
    #[arg(long, default_value_t = 4)]
    lane_ratio: u32,
    #[arg(long, default_value_t = 4096)]
    base_vlen: u32,
    #[arg(long, default_value_t = 32)]
    base_regs: u32,
    #[arg(long)]
    json: Option<PathBuf>,
    #[arg(long)]
    csv: Option<PathBuf>,
}

type Res<T> = Result<T, String>;

fn uvp_config(m: &MachineArgs, base: MachineConfig) -> MachineConfig {
    MachineConfig {
        n_lane: m.lanes.unwrap_or(base.n_lane),
        vrf_depth: m.regs.unwrap_or(base.vrf_depth),
        vlen_bits: m.vlen.unwrap_or(base.vlen_bits),
        ..base
    }
}

/// Default UVP machine for kernels: 16 lanes, 1024 registers of 512 bits.
fn kernel_uvp_default() -> MachineConfig {
    MachineConfig { n_lane: 16, vrf_depth: 1024, vlen_bits: 512, ..MachineConfig::default() }
}

fn spec_of(k: &KernelArgs) -> Res<KernelSpec> {
    let nums: Vec<u32> = k
        .shape
        .split([',', 'x'])
        .map(|s| s.trim().parse::<u32>().map_err(|e| format!("bad shape `{}`: {e}", k.shape)))
        .collect::<Res<_>>()?;
    let spec = match (k.kernel, nums.as_slice()) {
        (Kernel::Matmul, &[m, n, kk]) => KernelSpec::matmul(m, n, kk),
        (Kernel::Fft, &[n]) => KernelSpec::fft(n),
        (Kernel::Redsum, &[m]) => KernelSpec::redsum(m),
        _ => return Err(format!("shape `{}` does not fit the kernel", k.shape)),
    };
    Ok(spec.with_seed(k.seed))
}

fn baseline_of(k: &KernelArgs, base: BaselineConfig) -> BaselineConfig {
    let matmul = match k.matmul_style {
        Style::Hadamard => MatmulStyle::Hadamard,
        Style::RowBroadcast => MatmulStyle::RowBroadcast,
    };
    BaselineConfig { lmul: k.lmul, matmul, ..base }
}

fn write(path: &Path, text: &str) -> Res<()> {
    fs::write(path, text).map_err(|e| format!("{}: {e}", path.display()))
}

fn read(path: &Path) -> Res<Vec<u8>> {
    fs::read(path).map_err(|e| format!("{}: {e}", path.display()))
}

fn load_program(path: &Path) -> Res<AsmProgram> {
    let bytes = read(path)?;
    if bytes.starts_with(uvp_core::isa::BINARY_MAGIC) {
        return AsmProgram::from_binary(&bytes).map_err(|e| e.to_string());
    }
    let text = String::from_utf8(bytes).map_err(|e| format!("{}: {e}", path.display()))?;
    frontend::assemble(&text).map_err(|e| e.to_string())
}

fn cmd_sim(a: &SimArgs) -> Res<()> {
    let base = match &a.config {
        Some(p) => MachineConfig::load(p).map_err(|e| e.to_string())?,
        None => MachineConfig::default(),
    };
    let cfg = uvp_config(&a.machine, base);
    let prog = load_program(&a.program)?;
    let mut st = MachineState::new(cfg).map_err(|e| e.to_string())?;
    if let Some(img) = &a.mem_image {
        st.mem.load_image(img).map_err(|e| e.to_string())?;
    }
    let mode = match a.mode {
        Mode::Pipelined => ScheduleMode::Pipelined,
        Mode::Serial => ScheduleMode::Serial,
        Mode::Unchecked => ScheduleMode::Unchecked,
    };
    let opts = SimOptions { mode, trace: a.trace.is_some(), ..SimOptions::default() };
    let (report, events) = sequencer::run(&prog, &mut st, opts).map_err(|e| e.to_string())?;
    if let Some(p) = &a.trace {
        write(p, &trace::to_csv(&events))?;
    }
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    match &a.report {
        Some(p) => write(p, &json)?,
        None => println!("{json}"),
    }
    Ok(())
}

fn cmd_run(a: &RunArgs) -> Res<()> {
    let spec = spec_of(&a.kernel)?;
    let (report, events) = if a.baseline {
        let d = BaselineConfig::default();
        let cfg = BaselineConfig {
            n_lane: a.machine.lanes.unwrap_or(d.n_lane),
            n_regs: a.machine.regs.unwrap_or(d.n_regs),
            vlen_bits: a.machine.vlen.unwrap_or(d.vlen_bits),
            ..baseline_of(&a.kernel, d)
        };
        (bench::run_baseline(&spec, &cfg).map_err(|e| e.to_string())?.report, Vec::new())
    } else {
        let cfg = uvp_config(&a.machine, kernel_uvp_default());
        let opts = SimOptions { trace: a.trace.is_some(), ..SimOptions::default() };
        let r = bench::run_uvp(&spec, &cfg, opts).map_err(|e| e.to_string())?;
        (r.report, r.trace)
    };
    if let Some(p) = &a.trace {
        write(p, &trace::to_csv(&events))?;
    }
    match &a.report {
        Some(p) => write(p, &report.to_json())?,
        None => println!("{}", report.to_json()),
    }
    Ok(())
}

fn print_comparison(c: &Comparison, label: &str) {
    println!(
        "{} [{label}]: cycles {} vs {} (ratio {:.3}), instructions {} vs {} (ratio {:.3})",
        c.kernel,
        c.uvp.cycles,
        c.baseline.cycles,
        c.cycle_ratio,
        c.uvp.breakdown.total(),
        c.baseline.breakdown.total(),
        c.instr_ratio
    );
    for ch in &c.checks {
        println!("  {}: {:.3} target {} {}", ch.name, ch.value, ch.target, if ch.pass { "PASS" } else { "FAIL" });
    }
}

fn cmd_compare(a: &CompareArgs) -> Res<()> {
    let spec = spec_of(&a.kernel)?;
    let ucfg = uvp_config(&a.machine, kernel_uvp_default());
    let base = BaselineConfig { vlen_bits: a.base_vlen, n_regs: a.base_regs, ..BaselineConfig::matched(&ucfg, a.lane_ratio) };
    let base = baseline_of(&a.kernel, base);
    let u = bench::run_uvp(&spec, &ucfg, SimOptions::default()).map_err(|e| e.to_string())?;
    let by_cycles = bench::run_baseline(&spec, &BaselineConfig { select: Objective::Cycles, ..base.clone() }).map_err(|e| e.to_string())?;
    let by_count = bench::run_baseline(&spec, &BaselineConfig { select: Objective::Instructions, ..base }).map_err(|e| e.to_string())?;
    if u.output != by_cycles.output {
        return Err(format!("{}: UVP and baseline outputs differ", spec.name()));
    }
    let fft2048 = spec.name() == "fft2048";
    let (tc, tn) = match spec.kind {
        bench::KernelKind::Fft { .. } if fft2048 => (Targets::fft_cycles(), Targets::fft_counts()),
        bench::KernelKind::Matmul { m, n, k } if !bench::is_pow2_shape(m, n, k) => (Targets::matmul(), Targets::none()),
        _ => (Targets::none(), Targets::none()),
    };
    let cyc = bench::compare_and_report(&u.report, &by_cycles.report, &tc).map_err(|e| e.to_string())?;
    let cnt = bench::compare_and_report(&u.report, &by_count.report, &tn).map_err(|e| e.to_string())?;
    print_comparison(&cyc, "baseline fastest");
    print_comparison(&cnt, "baseline fewest instructions");
    if let Some(p) = &a.json {
        let doc = serde_json::json!({ "by_cycles": cyc, "by_instructions": cnt });
        write(p, &serde_json::to_string_pretty(&doc).expect("serializes"))?;
    }
    if let Some(p) = &a.csv {
        let mut text = cyc.to_csv();
        text.push_str(cnt.to_csv().split_once('\n').map_or("", |x| x.1));
        write(p, &text)?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let r = match &cli.cmd {
        Cmd::Asm { input, output } => (|| {
            let text = String::from_utf8(read(input)?).map_err(|e| e.to_string())?;
            let prog = frontend::assemble(&text).map_err(|e| e.to_string())?;
            let bin = prog.to_binary().map_err(|e| e.to_string())?;
            fs::write(output, bin).map_err(|e| format!("{}: {e}", output.display()))
        })(),
        Cmd::Disasm { input } => (|| {
            let prog = load_program(input)?;
            print!("{}", frontend::disassemble(&prog));
            Ok(())
        })(),
        Cmd::Sim(a) => cmd_sim(a),
        Cmd::Run(a) => cmd_run(a),
        Cmd::Compare(a) => cmd_compare(a),
    };
    match r {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("uvp: {e}");
            ExitCode::FAILURE
        }
    }
}
