#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use twu_core::ImageRaster;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn central_diff(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    (f(x + h) - f(x - h)) / (2.0 * h)
}

/// `|a - b| / max(|a|, |b|)`, floored so that tiny gradients compare absolutely.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-4)
}

pub fn random_raster(rng: &mut impl Rng, height: usize, width: usize) -> ImageRaster {
    let pixels = (0..height * width).map(|_| rng.random_range(-1.0..1.0)).collect();
    ImageRaster::new(height, width, pixels).unwrap()
}

pub fn random_angles(rng: &mut impl Rng, stages: usize) -> Vec<f64> {
    use std::f64::consts::PI;
    (0..=stages).map(|_| rng.random_range(-PI..PI)).collect()
}

/// Dense `(rows x cols)` matrix product helpers over row-major slices.
pub fn matmul(a: &[f64], b: &[f64], n: usize, k: usize, m: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * m];
    for i in 0..n {
        for p in 0..k {
            let av = a[i * k + p];
            for j in 0..m {
                out[i * m + j] += av * b[p * m + j];
            }
        }
    }
    out
}

pub fn transpose(a: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; rows * cols];
    for i in 0..rows {
        for j in 0..cols {
            out[j * rows + i] = a[i * cols + j];
        }
    }
    out
}
pub mod daubechies;
pub mod suites;
