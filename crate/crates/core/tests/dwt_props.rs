mod common;

use std::sync::Arc;

use common::{matmul, random_raster, rng, transpose};
use proptest::prelude::*;
use twu_core::dwt2d::{build_plan, decompose, reconstruct, DwtPlan, PlanCache, SubbandSet};
use twu_core::filterbank::{init_filter_bank, BankMode, CoefficientFilterBank, LatticeFilterBank, HAAR};
use twu_core::ImageRaster;

fn dense_bands(v: &DwtPlan, h: &DwtPlan, x: &ImageRaster) -> [Vec<f64>; 4] {
    let (n, m) = (v.length(), h.length());
    let (hn, hm) = (n / 2, m / 2);
    let side = |op: &[f64], rows: usize, t: &[f64]| matmul(op, t, rows, n, m);
    let right = |y: &[f64], op: &[f64]| matmul(y, &transpose(op, hm, m), hn, m, hm);
    let lx = side(v.lowpass_op(), hn, x.pixels());
    let hx = side(v.highpass_op(), hn, x.pixels());
    [
        right(&lx, h.lowpass_op()),
        right(&hx, h.lowpass_op()),
        right(&lx, h.highpass_op()),
        right(&hx, h.highpass_op()),
    ]
}

#[test]
fn random_lattice_banks_reconstruct_perfectly() {
    let (rec, pr) = common::suites::lattice_reconstruction(1000, 21);
    assert!(rec < 1e-10, "reconstruction error {rec:e}");
    assert!(pr < 1e-12, "pr_loss {pr:e}");
}

#[test]
fn lattice_operators_are_orthonormal() {
    let mut r = rng(22);
    for stages in 0..=3 {
        for length in [8usize, 10, 16] {
            let bank = LatticeFilterBank::new(common::random_angles(&mut r, stages)).unwrap();
            let plan = build_plan(&bank.filters(), length).unwrap();
            let half = length / 2;
            let gram = |a: &[f64], b: &[f64]| matmul(a, &transpose(b, half, length), half, length, half);
            let ll = gram(plan.lowpass_op(), plan.lowpass_op());
            let hh = gram(plan.highpass_op(), plan.highpass_op());
            let lh = gram(plan.lowpass_op(), plan.highpass_op());
            for i in 0..half {
                for j in 0..half {
                    let eye = if i == j { 1.0 } else { 0.0 };
                    assert!((ll[i * half + j] - eye).abs() < 1e-10);
                    assert!((hh[i * half + j] - eye).abs() < 1e-10);
                    assert!(lh[i * half + j].abs() < 1e-10);
                }
            }
        }
    }
}

#[test]
fn matrix_free_matches_matrix_form() {
    let mut r = rng(23);
    for taps in [2, 4, 6, 8] {
        for mode in [BankMode::Lattice, BankMode::Free] {
            let f = init_filter_bank(taps, mode).unwrap().filters();
            let (v, h) = (build_plan(&f, 8).unwrap(), build_plan(&f, 12).unwrap());
            let x = random_raster(&mut r, 8, 12);
            let s = decompose(&v, &h, &x).unwrap();
            for (band, dense) in s.bands().iter().zip(dense_bands(&v, &h, &x)) {
                for (a, b) in band.pixels().iter().zip(&dense) {
                    assert!((a - b).abs() < 1e-12);
                }
            }
            // synthesis against Lᵀ·ll·L + Hᵀ·lh·L + Lᵀ·hl·H + Hᵀ·hh·H
            let back = reconstruct(&v, &h, &s).unwrap();
            let mut dense = vec![0.0; 8 * 12];
            let ops = [
                (v.lowpass_op(), h.lowpass_op()),
                (v.highpass_op(), h.lowpass_op()),
                (v.lowpass_op(), h.highpass_op()),
                (v.highpass_op(), h.highpass_op()),
            ];
            for (band, (a, b)) in s.bands().iter().zip(ops) {
                let left = matmul(&transpose(a, 4, 8), band.pixels(), 8, 4, 6);
                for (d, t) in dense.iter_mut().zip(matmul(&left, b, 8, 6, 12)) {
                    *d += t;
                }
            }
            for (a, b) in back.pixels().iter().zip(&dense) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn relaxed_banks_degrade_with_perturbation() {
    let mut r = rng(24);
    let x = random_raster(&mut r, 16, 16);
    let errors: Vec<f64> = [0.0, 1e-3, 1e-2]
        .iter()
        .map(|&d| {
            let f = CoefficientFilterBank::from_lowpass(vec![HAAR[0] + d, HAAR[1]]).unwrap();
            let plan = build_plan(&f, 16).unwrap();
            reconstruct(&plan, &plan, &decompose(&plan, &plan, &x).unwrap())
                .unwrap()
                .max_abs_diff(&x)
        })
        .collect();
    assert!(errors[0] < 1e-12);
    assert!(errors[0] <= errors[1] && errors[1] <= errors[2], "{errors:?}");
    assert!(errors[2] > 0.0);
}

#[test]
fn plan_cache_is_shareable_across_threads() {
    let cache = Arc::new(PlanCache::new());
    let f = init_filter_bank(4, BankMode::Lattice).unwrap().filters();
    let plans: Vec<_> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..4)
            .map(|_| {
                let (cache, f) = (Arc::clone(&cache), f.clone());
                s.spawn(move || cache.get_or_build(&f, 16).unwrap())
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    assert!(plans.windows(2).all(|w| *w[0] == *w[1]));
    assert_eq!(cache.len(), 1);
}

fn image_8x8() -> impl Strategy<Value = ImageRaster> {
    prop::collection::vec(-10.0f64..10.0, 64).prop_map(|p| ImageRaster::new(8, 8, p).unwrap())
}

proptest! {
    #[test]
    fn decompose_is_linear(x in image_8x8(), y in image_8x8(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let f = init_filter_bank(4, BankMode::Lattice).unwrap().filters();
        let plan = build_plan(&f, 8).unwrap();
        let mix = ImageRaster::new(8, 8, x.pixels().iter().zip(y.pixels()).map(|(p, q)| a * p + b * q).collect()).unwrap();
        let (sx, sy, sm) = (
            decompose(&plan, &plan, &x).unwrap(),
            decompose(&plan, &plan, &y).unwrap(),
            decompose(&plan, &plan, &mix).unwrap(),
        );
        for ((bx, by), bm) in sx.bands().iter().zip(sy.bands()).zip(sm.bands()) {
            for ((p, q), m) in bx.pixels().iter().zip(by.pixels()).zip(bm.pixels()) {
                prop_assert!((a * p + b * q - m).abs() < 1e-12 * (1.0 + m.abs()));
            }
        }
    }

    #[test]
    fn orthogonal_plans_conserve_energy(x in image_8x8(), taps in prop::sample::select(vec![2usize, 4, 6, 8])) {
        let f = init_filter_bank(taps, BankMode::Lattice).unwrap().filters();
        let plan = build_plan(&f, 8).unwrap();
        let s: SubbandSet = decompose(&plan, &plan, &x).unwrap();
        prop_assert!((s.energy() - x.energy()).abs() <= 1e-8 * x.energy().max(1e-300));
    }
}
