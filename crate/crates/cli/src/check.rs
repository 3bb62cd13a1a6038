//! Randomized invariant suites behind `twu check`.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use twu_core::dwt2d::{build_plan, decompose, reconstruct, DwtPlan};
use twu_core::filterbank::{
    filters_jacobian, pr_loss, pr_loss_grad, CoefficientFilterBank, FilterBank, LatticeFilterBank,
};
use twu_core::units::{unit_backward, FeatureMap, WaveletUnit};
use twu_core::ImageRaster;

pub struct SuiteResult {
    pub suite: &'static str,
    pub cases: usize,
    pub max_error: f64,
    pub tolerance: f64,
}

impl SuiteResult {
    pub fn passed(&self) -> bool {
        self.max_error.is_finite() && self.max_error < self.tolerance
    }
}

fn random_lattice(rng: &mut ChaCha8Rng, taps: usize) -> LatticeFilterBank {
    let angles = (0..taps / 2).map(|_| rng.random_range(-PI..PI)).collect();
    LatticeFilterBank::new(angles).expect("angles are finite")
}

fn uniform(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-4)
}

fn central(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    (f(x + h) - f(x - h)) / (2.0 * h)
}

fn gram_error(plan: &DwtPlan) -> f64 {
    let (n, half) = (plan.length(), plan.half());
    let (l, h) = (plan.lowpass_op(), plan.highpass_op());
    let dot = |a: &[f64], i: usize, b: &[f64], j: usize| -> f64 {
        (0..n).map(|k| a[i * n + k] * b[j * n + k]).sum()
    };
    let mut worst = 0.0f64;
    for i in 0..half {
        for j in 0..half {
            let eye = if i == j { 1.0 } else { 0.0 };
            worst = worst
                .max((dot(l, i, l, j) - eye).abs())
                .max((dot(h, i, h, j) - eye).abs())
                .max(dot(l, i, h, j).abs());
        }
    }
    worst
}

/// Runs every suite on `trials` random cases with `taps`-tap banks.
pub fn run_suites(taps: usize, trials: usize, seed: u64) -> Vec<SuiteResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let side = taps.max(16);
    let (mut rec, mut pr, mut ops, mut jac, mut prg, mut unit) = (0.0f64, 0.0f64, 0.0f64, 0.0f64, 0.0f64, 0.0f64);

    for _ in 0..trials {
        let bank = random_lattice(&mut rng, taps);
        let f = bank.filters();
        pr = pr.max(pr_loss(f.lowpass()).unwrap_or(f64::INFINITY));
        let plan = build_plan(&f, side).expect("side is even and covers the taps");
        ops = ops.max(gram_error(&plan));
        let x = ImageRaster::new(side, side, uniform(&mut rng, side * side)).expect("finite pixels");
        let back = decompose(&plan, &plan, &x).and_then(|s| reconstruct(&plan, &plan, &s));
        rec = rec.max(back.map(|b| b.max_abs_diff(&x)).unwrap_or(f64::INFINITY));

        let j = filters_jacobian(&bank);
        let angles = bank.angles().to_vec();
        for k in 0..angles.len() {
            let at = |t: f64| {
                let mut a = angles.clone();
                a[k] = t;
                LatticeFilterBank::new(a).expect("finite").filters()
            };
            for n in 0..taps {
                jac = jac.max(rel_err(j.d_h0[k][n], central(|t| at(t).lowpass()[n], angles[k], 1e-5)));
                jac = jac.max(rel_err(j.d_h1[k][n], central(|t| at(t).highpass()[n], angles[k], 1e-5)));
            }
        }

        let h = uniform(&mut rng, taps);
        let g = pr_loss_grad(&h).expect("even length");
        for i in 0..taps {
            let fd = central(
                |t| {
                    let mut v = h.clone();
                    v[i] = t;
                    pr_loss(&v).expect("even length")
                },
                h[i],
                1e-5,
            );
            prg = prg.max(rel_err(g[i], fd));
        }

        unit = unit.max(unit_case(&mut rng, taps));
    }

    vec![
        SuiteResult { suite: "reconstruction", cases: trials, max_error: rec, tolerance: 1e-10 },
        SuiteResult { suite: "orthogonality_pr_loss", cases: trials, max_error: pr, tolerance: 1e-12 },
        SuiteResult { suite: "operator_gram", cases: trials, max_error: ops, tolerance: 1e-10 },
        SuiteResult { suite: "jacobian_grad", cases: trials, max_error: jac, tolerance: 1e-4 },
        SuiteResult { suite: "pr_loss_grad", cases: trials, max_error: prg, tolerance: 1e-4 },
        SuiteResult { suite: "unit_backward_grad", cases: trials, max_error: unit, tolerance: 1e-4 },
    ]
}

// One random unit; redrawn until no subband sits within 1e-3 of the ReLU kink.
fn unit_case(rng: &mut ChaCha8Rng, taps: usize) -> f64 {
    loop {
        let bank = if rng.random_bool(0.5) {
            FilterBank::Lattice(random_lattice(rng, taps))
        } else {
            FilterBank::Free(CoefficientFilterBank::from_lowpass(uniform(rng, taps)).expect("finite"))
        };
        let (c_in, c_out) = (rng.random_range(1..=3), rng.random_range(1..=3));
        let lo = taps.max(4);
        let side = lo + 2 * rng.random_range(0..=(8usize.saturating_sub(lo)) / 2);
        let weights = uniform(rng, 4 * c_in * c_out);
        let bias = uniform(rng, c_out);
        let unit = WaveletUnit::new(bank, c_in, c_out, weights, bias).expect("consistent shapes");
        let x = FeatureMap::new(c_in, side, side, uniform(rng, c_in * side * side)).expect("finite");
        let up = FeatureMap::new(c_out, side / 2, side / 2, uniform(rng, c_out * side * side / 4)).expect("finite");

        let f = unit.bank.filters();
        let plan = build_plan(&f, side).expect("side covers taps");
        let margin = (0..c_in)
            .flat_map(|c| {
                let img = ImageRaster::new(side, side, x.channel(c).to_vec()).expect("finite");
                let s = decompose(&plan, &plan, &img).expect("shapes match");
                s.bands().map(|b| b.pixels().iter().fold(f64::INFINITY, |m, v| m.min(v.abs())))
            })
            .fold(f64::INFINITY, f64::min);
        if margin < 1e-3 {
            continue;
        }
        return unit_error(&unit, &x, &up);
    }
}

fn unit_error(unit: &WaveletUnit, x: &FeatureMap, up: &FeatureMap) -> f64 {
    let contract = |u: &WaveletUnit, x: &FeatureMap| -> f64 {
        u.forward(x)
            .map(|y| y.values.iter().zip(&up.values).map(|(a, b)| a * b).sum())
            .unwrap_or(f64::NAN)
    };
    let g = match unit_backward(unit, x, up) {
        Ok(g) => g,
        Err(_) => return f64::INFINITY,
    };
    let h = 1e-5;
    let mut worst = 0.0f64;
    for i in 0..x.values.len() {
        let fd = central(
            |t| {
                let mut xv = x.clone();
                xv.values[i] = t;
                contract(unit, &xv)
            },
            x.values[i],
            h,
        );
        worst = worst.max(rel_err(g.grad_x.values[i], fd));
    }
    for i in 0..unit.weights.len() {
        let fd = central(
            |t| {
                let mut u = unit.clone();
                u.weights[i] = t;
                contract(&u, x)
            },
            unit.weights[i],
            h,
        );
        worst = worst.max(rel_err(g.grad_weights[i], fd));
    }
    for i in 0..unit.bias.len() {
        let fd = central(
            |t| {
                let mut u = unit.clone();
                u.bias[i] = t;
                contract(&u, x)
            },
            unit.bias[i],
            h,
        );
        worst = worst.max(rel_err(g.grad_bias[i], fd));
    }
    let params = unit.bank.params().to_vec();
    for i in 0..params.len() {
        let fd = central(
            |t| {
                let mut p = params.clone();
                p[i] = t;
                let mut u = unit.clone();
                u.bank = unit.bank.with_params(p).expect("same length");
                contract(&u, x)
            },
            params[i],
            h,
        );
        worst = worst.max(rel_err(g.grad_bank[i], fd));
    }
    worst
}
