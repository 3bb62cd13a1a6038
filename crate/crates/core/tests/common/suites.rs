//! Randomized suites shared by the property tests and the acceptance target.
//! Each returns the worst observed error so callers can apply their own bound.

use rand::Rng;
use twu_core::dwt2d::{build_plan, decompose, reconstruct};
use twu_core::filterbank::{
    filters_jacobian, pr_loss, pr_loss_grad, CoefficientFilterBank, FilterBank, LatticeFilterBank,
};
use twu_core::units::{unit_backward, FeatureMap, WaveletUnit};

use super::{central_diff, random_angles, random_raster, rel_err, rng};

/// Worst reconstruction error and worst pr_loss over random lattice banks
/// with up to four stages on 16x16 images.
pub fn lattice_reconstruction(banks: usize, seed: u64) -> (f64, f64) {
    let mut r = rng(seed);
    let (mut worst_rec, mut worst_pr) = (0.0f64, 0.0f64);
    for _ in 0..banks {
        let stages = r.random_range(0..=3);
        let bank = LatticeFilterBank::new(random_angles(&mut r, stages)).unwrap();
        let filters = bank.filters();
        worst_pr = worst_pr.max(pr_loss(filters.lowpass()).unwrap());
        let plan = build_plan(&filters, 16).unwrap();
        let x = random_raster(&mut r, 16, 16);
        let back = reconstruct(&plan, &plan, &decompose(&plan, &plan, &x).unwrap()).unwrap();
        worst_rec = worst_rec.max(back.max_abs_diff(&x));
    }
    (worst_rec, worst_pr)
}

/// Worst relative error of the analytic lattice jacobian.
pub fn jacobian_vs_differences(banks: usize, seed: u64) -> f64 {
    let mut r = rng(seed);
    let mut worst = 0.0f64;
    for _ in 0..banks {
        let stages = r.random_range(0..=3);
        let angles = random_angles(&mut r, stages);
        let jac = filters_jacobian(&LatticeFilterBank::new(angles.clone()).unwrap());
        for k in 0..angles.len() {
            let at = |t: f64| {
                let mut a = angles.clone();
                a[k] = t;
                LatticeFilterBank::new(a).unwrap().filters()
            };
            for n in 0..2 * stages + 2 {
                let fd0 = central_diff(|t| at(t).lowpass()[n], angles[k], 1e-5);
                let fd1 = central_diff(|t| at(t).highpass()[n], angles[k], 1e-5);
                worst = worst.max(rel_err(jac.d_h0[k][n], fd0));
                worst = worst.max(rel_err(jac.d_h1[k][n], fd1));
            }
        }
    }
    worst
}

/// Worst relative error of the analytic pr_loss gradient on random taps.
pub fn pr_grad_vs_differences(cases: usize, seed: u64) -> f64 {
    let mut r = rng(seed);
    let mut worst = 0.0f64;
    for _ in 0..cases {
        let taps = 2 * r.random_range(1..=4);
        let h: Vec<f64> = (0..taps).map(|_| r.random_range(-1.0..1.0)).collect();
        let g = pr_loss_grad(&h).unwrap();
        for i in 0..taps {
            let fd = central_diff(
                |t| {
                    let mut v = h.clone();
                    v[i] = t;
                    pr_loss(&v).unwrap()
                },
                h[i],
                1e-5,
            );
            worst = worst.max(rel_err(g[i], fd));
        }
    }
    worst
}

fn random_unit(r: &mut impl Rng) -> (WaveletUnit, FeatureMap, FeatureMap) {
    let taps = 2 * r.random_range(1..=4);
    let bank = if r.random_bool(0.5) {
        FilterBank::Lattice(LatticeFilterBank::new(random_angles(r, taps / 2 - 1)).unwrap())
    } else {
        let h: Vec<f64> = (0..taps).map(|_| r.random_range(-1.0..1.0)).collect();
        FilterBank::Free(CoefficientFilterBank::from_lowpass(h).unwrap())
    };
    let c_in = r.random_range(1..=3);
    let c_out = r.random_range(1..=3);
    let sides: Vec<usize> = [4, 6, 8].into_iter().filter(|&s| s >= taps).collect();
    let (h, w) = (sides[r.random_range(0..sides.len())], sides[r.random_range(0..sides.len())]);
    let mut uniform = |n: usize| (0..n).map(|_| r.random_range(-1.0..1.0)).collect::<Vec<f64>>();
    let weights = uniform(4 * c_in * c_out);
    let bias = uniform(c_out);
    let x = FeatureMap::new(c_in, h, w, uniform(c_in * h * w)).unwrap();
    let up = FeatureMap::new(c_out, h / 2, w / 2, uniform(c_out * h * w / 4)).unwrap();
    (WaveletUnit::new(bank, c_in, c_out, weights, bias).unwrap(), x, up)
}

// Smallest pre-activation magnitude over every subband of every channel.
fn kink_margin(unit: &WaveletUnit, x: &FeatureMap) -> f64 {
    let filters = unit.bank.filters();
    let (pv, ph) = (build_plan(&filters, x.height).unwrap(), build_plan(&filters, x.width).unwrap());
    (0..x.channels)
        .flat_map(|c| {
            let img = twu_core::ImageRaster::new(x.height, x.width, x.channel(c).to_vec()).unwrap();
            let s = decompose(&pv, &ph, &img).unwrap();
            s.bands().map(|b| b.pixels().iter().map(|v| v.abs()).fold(f64::INFINITY, f64::min))
        })
        .fold(f64::INFINITY, f64::min)
}

fn contract(unit: &WaveletUnit, x: &FeatureMap, up: &FeatureMap) -> f64 {
    let y = unit.forward(x).unwrap();
    y.values.iter().zip(&up.values).map(|(a, b)| a * b).sum()
}

/// Worst relative error of unit_backward against central differences over
/// random configurations. Configurations with a pre-activation closer than
/// 1e-3 to the ReLU kink are redrawn.
pub fn unit_backward_vs_differences(configs: usize, seed: u64) -> f64 {
    let mut r = rng(seed);
    let mut worst = 0.0f64;
    let step = 1e-5;
    let mut done = 0;
    while done < configs {
        let (unit, x, up) = random_unit(&mut r);
        if kink_margin(&unit, &x) < 1e-3 {
            continue;
        }
        done += 1;
        let g = unit_backward(&unit, &x, &up).unwrap();

        for i in 0..x.values.len() {
            let fd = central_diff(
                |t| {
                    let mut xv = x.clone();
                    xv.values[i] = t;
                    contract(&unit, &xv, &up)
                },
                x.values[i],
                step,
            );
            worst = worst.max(rel_err(g.grad_x.values[i], fd));
        }
        for i in 0..unit.weights.len() {
            let fd = central_diff(
                |t| {
                    let mut u = unit.clone();
                    u.weights[i] = t;
                    contract(&u, &x, &up)
                },
                unit.weights[i],
                step,
            );
            worst = worst.max(rel_err(g.grad_weights[i], fd));
        }
        for i in 0..unit.bias.len() {
            let fd = central_diff(
                |t| {
                    let mut u = unit.clone();
                    u.bias[i] = t;
                    contract(&u, &x, &up)
                },
                unit.bias[i],
                step,
            );
            worst = worst.max(rel_err(g.grad_bias[i], fd));
        }
        let params = unit.bank.params().to_vec();
        for i in 0..params.len() {
            let fd = central_diff(
                |t| {
                    let mut p = params.clone();
                    p[i] = t;
                    let mut u = unit.clone();
                    u.bank = unit.bank.with_params(p).unwrap();
                    contract(&u, &x, &up)
                },
                params[i],
                step,
            );
            worst = worst.max(rel_err(g.grad_bank[i], fd));
        }
    }
    worst
}
