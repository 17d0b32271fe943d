mod common;

use std::time::Instant;

use common::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use uvp_core::bench::{self, compare_and_report, is_pow2_shape, matmul_suite, BaselineConfig, KernelSpec, MatmulStyle, Objective, Targets};
use uvp_core::datapath::{cplx_mul, mul_shift, sat_addsub, sat_div, AddSub, ElemWidth, QFormat};
use uvp_core::exe::{self, ReduceOp};
use uvp_core::frontend::assemble;
use uvp_core::isa::{decode, encode};
use uvp_core::machine::MachineConfig;
use uvp_core::sequencer::{self, partition_vl, trace, ScheduleMode, SimOptions};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn uvp_cfg() -> MachineConfig {
    MachineConfig { n_lane: 16, vrf_depth: 1024, vlen_bits: 512, ..MachineConfig::default() }
}

fn encoding() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..100_000 {
        let i = random_instr(&mut rng);
        let w = encode(&i).map_err(|e| format!("encode {i:?}: {e}"))?;
        let back = decode(w).map_err(|e| format!("decode {:#x}: {e}", w.0))?;
        ensure(back == i, || format!("{i:?} came back as {back:?}"))?;
        bit_flips_ok(&i, w.0)?;
    }
    let s = t.elapsed().as_secs_f64();
    ensure(s < 10.0, || format!("took {s:.1} s"))?;
    Ok(format!("100000 round trips with all 64 single-bit flips in {s:.2} s"))
}

fn vl_partition() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..10_000 {
        let avl = rng.gen_range(0..=8192u32);
        let n_lane = [8u32, 16, 32, 64][rng.gen_range(0..4)];
        let s = partition_vl(avl, n_lane);
        let sum: u32 = s.vl.iter().sum();
        let (lo, hi) = (s.vl.iter().min().unwrap(), s.vl.iter().max().unwrap());
        ensure(s.vl.len() == n_lane as usize && sum == avl && hi - lo <= 1, || format!("avl {avl} n_lane {n_lane}: {:?}", s.vl))?;
    }
    Ok("10000 random partitions sum to AVL with spread <= 1".into())
}

fn hazards() -> Outcome {
    let t = Instant::now();
    let mut stalls = 0;
    for p in 0..100u64 {
        let depth = if p < 50 { 32 } else { 1024 };
        let cfg = random_config(depth);
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + p);
        let (text, st) = random_program(&mut rng, &cfg, 10_000);
        let prog = assemble(&text).map_err(|e| format!("program {p}: {e}"))?;
        let mut want = RefState::from_machine(&st);
        want.run(&prog, 100_000_000).map_err(|e| format!("program {p}: reference: {e}"))?;
        let mut got = st.clone();
        let (r, _) = sequencer::run(&prog, &mut got, SimOptions::default()).map_err(|e| format!("program {p}: {e}"))?;
        stalls += r.stall_cycles;
        if let Some(d) = first_diff(&want, &snapshot(&got)) {
            return Err(format!("program {p} depth {depth}: {d}"));
        }
    }
    let s = t.elapsed().as_secs_f64();
    ensure(s < 120.0, || format!("took {s:.1} s"))?;
    Ok(format!("100 programs x 10000 instructions match the serial reference ({stalls} stall cycles) in {s:.1} s"))
}

fn datapath() -> Outcome {
    const W8: ElemWidth = ElemWidth::E8;
    const W16: ElemWidth = ElemWidth::E16;
    for a in -128..=127 {
        for b in -128..=127 {
            ensure(sat_addsub(a, b, AddSub::Add, W8) == o_add(a, b, 8), || format!("int8 {a}+{b}"))?;
            ensure(sat_addsub(a, b, AddSub::Sub, W8) == o_sub(a, b, 8), || format!("int8 {a}-{b}"))?;
            for sh in 0..16 {
                ensure(mul_shift(a, b, sh, W8) == o_mul(a, b, sh, 8), || format!("int8 {a}*{b}>>{sh}"))?;
            }
            for s in 0..8 {
                let r = sat_div(a, b, s, W8);
                ensure((r.value, r.saturated, r.divide_by_zero) == o_div(a, b, s, 8), || format!("int8 {a}<<{s}/{b}"))?;
            }
        }
    }
    let grid: Vec<i32> = (-128..=127).step_by(17).chain([127]).collect();
    for ar in -128..=127 {
        for ai in -128..=127 {
            for &br in &grid {
                for &bi in &grid {
                    ensure(cplx_mul(ar, ai, br, bi, 7, W8) == o_cplx(ar, ai, br, bi, 7, 8), || format!("int8 cplx ({ar},{ai})*({br},{bi})"))?;
                }
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut r16 = || rng.gen_range(-32768..=32767);
    for _ in 0..1_000_000 {
        let (a, b, c, d) = (r16(), r16(), r16(), r16());
        let sh = (c as u32) & 31;
        let s = (d as u32) % 17;
        ensure(sat_addsub(a, b, AddSub::Add, W16) == o_add(a, b, 16), || format!("int16 {a}+{b}"))?;
        ensure(sat_addsub(a, b, AddSub::Sub, W16) == o_sub(a, b, 16), || format!("int16 {a}-{b}"))?;
        ensure(mul_shift(a, b, sh, W16) == o_mul(a, b, sh, 16), || format!("int16 {a}*{b}>>{sh}"))?;
        ensure(cplx_mul(a, b, c, d, sh, W16) == o_cplx(a, b, c, d, sh, 16), || format!("int16 cplx ({a},{b})*({c},{d})"))?;
        let r = sat_div(a, b, s, W16);
        ensure((r.value, r.saturated, r.divide_by_zero) == o_div(a, b, s, 16), || format!("int16 {a}<<{s}/{b}"))?;
    }
    // overflow saturates toward the sign of the true quotient
    for (d, v, want) in [(100, 1, 127), (-100, 1, -128), (100, -1, -128), (-100, -1, 127)] {
        ensure(sat_div(d, v, 4, W8).value == want, || format!("xor-sign {d}/{v}"))?;
    }
    for a in 1..8 {
        for c in 1..8 {
            for s in 0..4 {
                let q = QFormat::quotient(QFormat::new(c, 8 - c), QFormat::new(a, 8 - a), s);
                let (b, d) = (8 - a, 8 - c);
                ensure((q.int_bits, q.frac_bits) == (a + d + 1 - s, b + c + s), || format!("quotient format a={a} c={c} s={s}"))?;
            }
        }
    }
    Ok("int8 grids exhaustive, 1000000 int16 cases per op, quotient formats hold".into())
}

fn raw(idx: &[u16]) -> Vec<i32> {
    idx.iter().map(|&i| i as i16 as i32).collect()
}

fn exe_semantics() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for t in 0..10_000 {
        let len = rng.gen_range(1..=4096usize);
        let n = rng.gen_range(1..=4096usize);
        let src: Vec<i32> = (0..len).map(|_| rng.gen_range(-32768..=32767)).collect();
        if t % 2 == 0 {
            let idx: Vec<u16> = (0..n).map(|_| rng.gen_range(0..len) as u16).collect();
            let got = exe::gather(&src, &raw(&idx), n as u32, &vec![0; n], None).map_err(|e| format!("gather: {e}"))?;
            ensure(Some(got) == o_gather(&src, &idx, n), || format!("gather case {t}"))?;
        } else {
            let idx: Vec<u16> = (0..len).map(|_| rng.gen_range(0..n) as u16).collect();
            let (mut got, mut want) = (vec![7; n], vec![7; n]);
            exe::scatter(&mut got, &src, &raw(&idx), None).map_err(|e| format!("scatter: {e}"))?;
            o_scatter(&mut want, &src, &idx).unwrap();
            ensure(got == want, || format!("scatter case {t}"))?;
        }
    }
    for _ in 0..200 {
        let n = rng.gen_range(1..=4096usize);
        let src: Vec<i32> = (0..n).map(|_| rng.gen_range(-32768..=32767)).collect();
        let mut perm: Vec<u16> = (0..n as u16).collect();
        for i in (1..n).rev() {
            perm.swap(i, rng.gen_range(0..=i));
        }
        let mut mid = vec![0; n];
        exe::scatter(&mut mid, &src, &raw(&perm), None).map_err(|e| e.to_string())?;
        let back = exe::gather(&mid, &raw(&perm), n as u32, &vec![0; n], None).map_err(|e| e.to_string())?;
        ensure(back == src, || format!("permutation of {n} not restored"))?;
    }
    for n_lane in [8u32, 16, 32, 64] {
        for _ in 0..200 {
            let len = rng.gen_range(1..=4096usize);
            let big = rng.gen_bool(0.5);
            let vals: Vec<i32> = (0..len).map(|_| if big { rng.gen_range(-32768..=32767) } else { rng.gen_range(-20..=20) }).collect();
            for (op, f) in [(ReduceOp::Sum, Fold::Sum), (ReduceOp::Min, Fold::Min), (ReduceOp::Max, Fold::Max)] {
                let got = exe::reduce(&vals, n_lane, op, ElemWidth::E16);
                ensure(got == o_tree_fold(&vals, n_lane as usize, f, 16), || format!("reduce {op:?} n_lane {n_lane} len {len}"))?;
            }
        }
    }
    Ok("10000 gathers/scatters, 200 permutation round trips, tree folds for 8..64 lanes".into())
}

fn kernels() -> Outcome {
    let cfg = uvp_cfg();
    let err = |e: bench::BenchError| e.to_string();
    let r = bench::kernel_matmul(&cfg, 3, 2, 3, &[1, 2, 3, 4, 5, 6], &[7, 8, 9, 10, 11, 12]).map_err(err)?;
    ensure(r.output == [27, 30, 33, 61, 68, 75, 95, 106, 117], || format!("3x2x3 gave {:?}", r.output))?;
    for (m, n, k) in matmul_suite().into_iter().chain([(1, 1, 1), (5, 7, 3), (32, 17, 9)]) {
        let spec = KernelSpec::matmul(m, n, k);
        let inp = spec.inputs();
        let r = bench::run_uvp(&spec, &cfg, SimOptions::default()).map_err(err)?;
        ensure(r.output == o_matmul(m as usize, n as usize, k as usize, &inp[0], &inp[1], 16), || format!("matmul {m}x{n}x{k}"))?;
    }
    for m in [255, 256, 1000, 4096] {
        let x = KernelSpec::redsum(m).inputs().remove(0);
        let r = bench::kernel_redsum(&cfg, &x).map_err(err)?;
        ensure(r.output == [o_tree_fold(&x, 16, Fold::Sum, 16)], || format!("redsum M={m}"))?;
    }
    for log in 3..=11 {
        let x = KernelSpec::fft(1 << log).inputs().remove(0);
        let r = bench::kernel_fft(&cfg, &x).map_err(err)?;
        ensure(r.output == o_fft(&x), || format!("fft{}", 1 << log))?;
    }
    let mut x = vec![0; 16];
    x[0] = 800;
    let r = bench::kernel_fft(&cfg, &x).map_err(err)?;
    ensure(r.output.chunks(2).all(|c| c == [100, 0]), || format!("impulse gave {:?}", r.output))?;
    Ok("matmul (3x2x3 and suite), redsum, fft8..fft2048 bit-exact; impulse gives a flat spectrum".into())
}

fn compare(spec: &KernelSpec, base: &BaselineConfig, targets: &Targets) -> Result<bench::Comparison, String> {
    let u = bench::run_uvp(spec, &uvp_cfg(), SimOptions::default()).map_err(|e| e.to_string())?;
    let b = bench::run_baseline(spec, base).map_err(|e| e.to_string())?;
    ensure(u.output == b.output, || format!("{}: outputs differ", spec.name()))?;
    compare_and_report(&u.report, &b.report, targets).map_err(|e| e.to_string())
}

fn instruction_counts() -> Outcome {
    let base = BaselineConfig { select: Objective::Instructions, ..BaselineConfig::matched(&uvp_cfg(), 4) };
    let c = compare(&KernelSpec::fft(2048), &base, &Targets::fft_counts())?;
    let arith = c.baseline.breakdown.arithmetic as f64 / c.uvp.breakdown.arithmetic as f64;
    let msg = format!(
        "fft2048 instructions {} vs {} (ratio {:.3}), arithmetic reduction {:.2}x",
        c.uvp.breakdown.total(),
        c.baseline.breakdown.total(),
        c.instr_ratio,
        arith
    );
    ensure(c.passed(), || msg.clone())?;
    Ok(msg)
}

fn speedups() -> Outcome {
    let base = BaselineConfig::matched(&uvp_cfg(), 4);
    let mut lines = Vec::new();
    let mut failed = Vec::new();
    for (m, n, k) in matmul_suite() {
        let c = compare(&KernelSpec::matmul(m, n, k), &base, &Targets::matmul())?;
        let rb = compare(&KernelSpec::matmul(m, n, k), &BaselineConfig { matmul: MatmulStyle::RowBroadcast, ..base.clone() }, &Targets::none())?;
        let pow2 = is_pow2_shape(m, n, k);
        lines.push(format!("matmul{m}x{n}x{k} {:.3} (row-broadcast {:.3})", c.cycle_ratio, rb.cycle_ratio));
        if !pow2 && !c.passed() {
            failed.push(format!("matmul{m}x{n}x{k}"));
        }
    }
    let fft = compare(&KernelSpec::fft(2048), &base, &Targets::fft_cycles())?;
    lines.push(format!("fft2048 {:.3}", fft.cycle_ratio));
    if !fft.passed() {
        failed.push("fft2048".into());
    }
    let msg = format!("cycle ratios: {}", lines.join(", "));
    ensure(failed.is_empty(), || format!("{msg}; slower on {failed:?}"))?;
    Ok(msg)
}

fn determinism() -> Outcome {
    let cfg = uvp_cfg();
    let opts = SimOptions { trace: true, ..SimOptions::default() };
    let base = BaselineConfig::matched(&cfg, 4);
    for spec in [KernelSpec::matmul(6, 6, 6), KernelSpec::fft(256), KernelSpec::redsum(1000)] {
        let runs: Vec<_> = (0..2).map(|_| bench::run_uvp(&spec, &cfg, opts.clone()).unwrap()).collect();
        ensure(runs[0].report.to_json() == runs[1].report.to_json(), || format!("{}: reports differ", spec.name()))?;
        ensure(trace::to_csv(&runs[0].trace) == trace::to_csv(&runs[1].trace), || format!("{}: traces differ", spec.name()))?;
        ensure(!runs[0].trace.is_empty(), || format!("{}: empty trace", spec.name()))?;
        let b: Vec<_> = (0..2).map(|_| bench::run_baseline(&spec, &base).unwrap().report.to_json()).collect();
        ensure(b[0] == b[1], || format!("{}: baseline reports differ", spec.name()))?;
    }
    let rcfg = random_config(64);
    let (text, st) = random_program(&mut ChaCha8Rng::seed_from_u64(9), &rcfg, 2000);
    let prog = assemble(&text).map_err(|e| e.to_string())?;
    let mut out = Vec::new();
    for _ in 0..2 {
        let mut m = st.clone();
        let (r, ev) = sequencer::run(&prog, &mut m, SimOptions { mode: ScheduleMode::Pipelined, ..opts.clone() }).map_err(|e| e.to_string())?;
        out.push((format!("{r:?}"), trace::to_csv(&ev), m.digest()));
    }
    ensure(out[0] == out[1], || "random program runs differ".into())?;
    Ok("kernel reports, baseline reports and traces byte-identical across runs".into())
}

#[test]
fn acceptance() {
    let criteria: [Criterion; 9] = [
        ("encoding round trip", encoding),
        ("vl partition", vl_partition),
        ("hazard correctness", hazards),
        ("datapath oracles", datapath),
        ("exe semantics", exe_semantics),
        ("kernel correctness", kernels),
        ("instruction counts", instruction_counts),
        ("directional speedups", speedups),
        ("determinism", determinism),
    ];
    let mut failed = Vec::new();
    for (i, (name, f)) in criteria.iter().enumerate() {
        match f() {
            Ok(detail) => println!("criterion {} ({name}): PASS: {detail}", i + 1),
            Err(detail) => {
                println!("criterion {} ({name}): FAIL: {detail}", i + 1);
                failed.push(i + 1);
            }
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
