//! Daubechies lowpass filters by spectral factorization of the
//! maxflat half-band polynomial, independent of the library.

use num_complex::Complex64;

fn binomial(n: u64, k: u64) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

// Durand-Kerner on a monic-normalized polynomial, coefficients low to high.
fn roots(coeffs: &[f64]) -> Vec<Complex64> {
    let deg = coeffs.len() - 1;
    let lead = coeffs[deg];
    let c: Vec<f64> = coeffs.iter().map(|v| v / lead).collect();
    let eval = |z: Complex64| c.iter().rev().fold(Complex64::new(0.0, 0.0), |acc, &v| acc * z + v);
    let mut zs: Vec<Complex64> = (0..deg)
        .map(|i| Complex64::new(0.4, 0.9).powu(i as u32))
        .collect();
    for _ in 0..500 {
        let prev = zs.clone();
        for i in 0..deg {
            let denom = (0..deg)
                .filter(|&j| j != i)
                .fold(Complex64::new(1.0, 0.0), |acc, j| acc * (zs[i] - zs[j]));
            let step = eval(zs[i]) / denom;
            zs[i] -= step;
        }
        if zs.iter().zip(&prev).all(|(a, b)| (a - b).norm() < 1e-15) {
            break;
        }
    }
    zs
}

fn poly_mul(a: &[Complex64], b: &[Complex64]) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

/// Minimum-phase lowpass with `p` vanishing moments (`2p` taps), Σh = √2.
pub fn spectral_factor(p: usize) -> Vec<f64> {
    let one = Complex64::new(1.0, 0.0);
    // polynomial in w = z^-1
    let mut h = vec![one];
    for _ in 0..p {
        h = poly_mul(&h, &[one, one]);
    }
    if p > 1 {
        let q: Vec<f64> = (0..p as u64).map(|k| binomial(p as u64 - 1 + k, k)).collect();
        for y in roots(&q) {
            // y = (1 - cos w) / 2 maps to z + 1/z = 2 - 4y
            let b = Complex64::new(2.0, 0.0) - 4.0 * y;
            let disc = (b * b - 4.0).sqrt();
            let (z1, z2) = ((b + disc) / 2.0, (b - disc) / 2.0);
            let z = if z1.norm() < 1.0 { z1 } else { z2 };
            h = poly_mul(&h, &[one, -z]);
        }
    }
    let real: Vec<f64> = h.iter().map(|c| c.re).collect();
    assert!(h.iter().all(|c| c.im.abs() < 1e-10), "conjugate roots must pair up");
    let sum: f64 = real.iter().sum();
    real.iter().map(|v| v * std::f64::consts::SQRT_2 / sum).collect()
}
