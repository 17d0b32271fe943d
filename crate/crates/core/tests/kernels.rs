mod common;

use common::{dft, o_fft, o_matmul, o_tree_fold, sqnr_db, Fold};
use uvp_core::bench::{self, kernel_fft, kernel_matmul, kernel_redsum, BaselineConfig, KernelSpec};
use uvp_core::datapath::ElemWidth;
use uvp_core::machine::MachineConfig;
use uvp_core::sequencer::SimOptions;

fn cfg() -> MachineConfig {
    MachineConfig { n_lane: 16, vrf_depth: 1024, vlen_bits: 512, ..MachineConfig::default() }
}

#[test]
fn matmul_three_by_two_by_three() {
    let a = [1, 2, 3, 4, 5, 6];
    let b = [7, 8, 9, 10, 11, 12];
    let r = kernel_matmul(&cfg(), 3, 2, 3, &a, &b).unwrap();
    assert_eq!(r.output, vec![27, 30, 33, 61, 68, 75, 95, 106, 117]);
}

#[test]
fn matmul_shapes_match_triple_loop() {
    for (m, n, k) in [(1, 1, 1), (3, 2, 3), (5, 7, 3), (8, 8, 8), (12, 12, 12), (16, 4, 9), (32, 32, 32)] {
        let spec = KernelSpec::matmul(m, n, k).with_seed(m as u64 * 31 + k as u64);
        let inp = spec.inputs();
        let r = kernel_matmul(&cfg(), m, n, k, &inp[0], &inp[1]).unwrap();
        assert_eq!(r.output, o_matmul(m as usize, n as usize, k as usize, &inp[0], &inp[1], 16), "{m}x{n}x{k}");
    }
}

#[test]
fn matmul_saturates_like_the_oracle() {
    let (m, n, k) = (4, 6, 4);
    let a: Vec<i32> = (0..m * n).map(|i| if i % 2 == 0 { 30000 } else { -250 }).collect();
    let b: Vec<i32> = (0..n * k).map(|i| 200 - 17 * i as i32).collect();
    let r = kernel_matmul(&cfg(), m, n, k, &a, &b).unwrap();
    assert_eq!(r.output, o_matmul(m as usize, n as usize, k as usize, &a, &b, 16));
}

#[test]
fn matmul_e8() {
    let spec = KernelSpec::matmul(6, 5, 4).with_vew(ElemWidth::E8);
    let inp = spec.inputs();
    let r = bench::run_uvp(&spec, &cfg(), SimOptions::default()).unwrap();
    assert_eq!(r.output, o_matmul(6, 5, 4, &inp[0], &inp[1], 8));
}

#[test]
fn redsum_matches_tree_fold() {
    for m in [1, 255, 256, 1000, 4096] {
        let x = KernelSpec::redsum(m).inputs().remove(0);
        let r = kernel_redsum(&cfg(), &x).unwrap();
        assert_eq!(r.output, vec![o_tree_fold(&x, 16, Fold::Sum, 16)], "M={m}");
    }
}

#[test]
fn redsum_saturating_input() {
    let x: Vec<i32> = (0..300).map(|i| if i % 16 == 0 { 32000 } else { -(i % 7) }).collect();
    let r = kernel_redsum(&cfg(), &x).unwrap();
    assert_eq!(r.output, vec![o_tree_fold(&x, 16, Fold::Sum, 16)]);
}

#[test]
fn fft_matches_scalar_dif() {
    let mut n = 2;
    while n <= 2048 {
        let x = KernelSpec::fft(n).with_seed(n as u64).inputs().remove(0);
        let r = kernel_fft(&cfg(), &x).unwrap();
        assert_eq!(r.output, o_fft(&x), "N={n}");
        n *= 2;
    }
}

#[test]
fn fft_other_geometries() {
    // register sizes that leave padding between the two halves
    for (lanes, vlen) in [(8, 256), (4, 384), (32, 1024)] {
        let c = MachineConfig { n_lane: lanes, vrf_depth: 512, vlen_bits: vlen, ..MachineConfig::default() };
        for n in [8, 32, 128] {
            let x = KernelSpec::fft(n).inputs().remove(0);
            assert_eq!(kernel_fft(&c, &x).unwrap().output, o_fft(&x), "N={n} lanes={lanes} vlen={vlen}");
        }
    }
}

#[test]
fn fft8_impulse() {
    let mut x = vec![0; 16];
    x[0] = 800;
    let r = kernel_fft(&cfg(), &x).unwrap();
    // an impulse has a flat spectrum; three halving stages divide by 8
    let want: Vec<i32> = (0..8).flat_map(|_| [100, 0]).collect();
    assert_eq!(r.output, want);
}

#[test]
fn fft_sqnr_against_float_dft() {
    for n in [64u32, 256, 1024] {
        let x = KernelSpec::fft(n).with_seed(3).inputs().remove(0);
        let got = kernel_fft(&cfg(), &x).unwrap().output;
        let scaled: Vec<(f64, f64)> = got.chunks(2).map(|c| (c[0] as f64 * n as f64, c[1] as f64 * n as f64)).collect();
        let db = sqnr_db(&dft(&x), &scaled);
        // each halving stage costs about 3 dB; measured 58.3 / 51.7 / 45.8 dB
        let floor = 73.0 - 3.0 * n.trailing_zeros() as f64;
        println!("fft{n}: SQNR {db:.1} dB (floor {floor:.0})");
        assert!(db > floor, "fft{n}: SQNR {db:.1} dB");
    }
}

#[test]
fn baseline_outputs_equal_uvp() {
    let base = BaselineConfig::matched(&cfg(), 4);
    for spec in [KernelSpec::matmul(6, 6, 6), KernelSpec::fft(64), KernelSpec::redsum(1000), KernelSpec::matmul(3, 2, 3)] {
        let u = bench::run_uvp(&spec, &cfg(), SimOptions::default()).unwrap();
        let b = bench::run_baseline(&spec, &base).unwrap();
        assert_eq!(u.output, b.output, "{}", spec.name());
    }
}
