//! Single-level 2D DWT in matrix form.
//!
//! A [`DwtPlan`] holds the analysis operators `L = D·Ĥ0` and `H = D·Ĥ1` for
//! one signal length, where `Ĥ` is the circulant correlation matrix of a
//! filter and `D` keeps every second row. Row `r` of `L` carries
//! `h0(0..N)` starting at column `2r`, wrapping modulo the length.
//!
//! For an image `X` (height `n`, width `m`), with a vertical plan of length
//! `n` and a horizontal plan of length `m`:
//!
//! ```text
//! ll = Lv X Lhᵀ   lh = Hv X Lhᵀ   hl = Lv X Hhᵀ   hh = Hv X Hhᵀ
//! ```
//!
//! The operators are applied matrix-free; the dense matrices are kept on the
//! plan for inspection and verification.

use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use crate::error::{invalid, shape, Result};
use crate::filterbank::CoefficientFilterBank;
use crate::raster::ImageRaster;

#[derive(Debug, Clone, PartialEq)]
pub struct DwtPlan {
    length: usize,
    h0: Vec<f64>,
    h1: Vec<f64>,
    lowpass_op: Vec<f64>,
    highpass_op: Vec<f64>,
}

/// Builds the periodic analysis operators for signals of `length` samples.
pub fn build_plan(filters: &CoefficientFilterBank, length: usize) -> Result<DwtPlan> {
    let taps = filters.tap_count();
    if length % 2 != 0 || length == 0 {
        return Err(invalid(format!("plan length must be even, got {length}")));
    }
    if length < taps {
        return Err(invalid(format!(
            "plan length {length} shorter than filter length {taps}"
        )));
    }
    let dense = |h: &[f64]| {
        let rows = length / 2;
        let mut op = vec![0.0; rows * length];
        for r in 0..rows {
            for (k, &v) in h.iter().enumerate() {
                op[r * length + (2 * r + k) % length] += v;
            }
        }
        op
    };
    Ok(DwtPlan {
        length,
        lowpass_op: dense(filters.lowpass()),
        highpass_op: dense(filters.highpass()),
        h0: filters.lowpass().to_vec(),
        h1: filters.highpass().to_vec(),
    })
}

impl DwtPlan {
    pub fn length(&self) -> usize {
        self.length
    }

    pub fn half(&self) -> usize {
        self.length / 2
    }

    pub fn lowpass_taps(&self) -> &[f64] {
        &self.h0
    }

    pub fn highpass_taps(&self) -> &[f64] {
        &self.h1
    }

    /// Dense `L`, row-major `(length/2) x length`.
    pub fn lowpass_op(&self) -> &[f64] {
        &self.lowpass_op
    }

    /// Dense `H`, row-major `(length/2) x length`.
    pub fn highpass_op(&self) -> &[f64] {
        &self.highpass_op
    }
}

/// The four quarter-size components of one decomposition level.
#[derive(Debug, Clone, PartialEq)]
pub struct SubbandSet {
    pub ll: ImageRaster,
    pub lh: ImageRaster,
    pub hl: ImageRaster,
    pub hh: ImageRaster,
}

impl SubbandSet {
    pub fn zeros(height: usize, width: usize) -> Self {
        let z = ImageRaster::zeros(height, width);
        Self {
            ll: z.clone(),
            lh: z.clone(),
            hl: z.clone(),
            hh: z,
        }
    }

    /// Subbands in `(ll, lh, hl, hh)` order.
    pub fn bands(&self) -> [&ImageRaster; 4] {
        [&self.ll, &self.lh, &self.hl, &self.hh]
    }

    pub fn energy(&self) -> f64 {
        self.bands().iter().map(|b| b.energy()).sum()
    }
}

// Count of leading outputs whose taps stay inside the row without wrapping.
fn no_wrap(half: usize, cols: usize, taps: usize) -> usize {
    if taps > cols {
        return 0;
    }
    ((cols - taps) / 2 + 1).min(half)
}

// X (rows x cols) times Opᵀ along the horizontal axis, matrix-free.
fn analyze_cols(x: &[f64], rows: usize, cols: usize, taps: &[f64]) -> Vec<f64> {
    let half = cols / 2;
    let mut out = vec![0.0; rows * half];
    for y in 0..rows {
        let src = &x[y * cols..(y + 1) * cols];
        let dst = &mut out[y * half..(y + 1) * half];
        let inner = no_wrap(half, cols, taps.len());
        for (j, d) in dst[..inner].iter_mut().enumerate() {
            let mut acc = 0.0;
            for (&h, &v) in taps.iter().zip(&src[2 * j..]) {
                acc += h * v;
            }
            *d = acc;
        }
        for (j, d) in dst.iter_mut().enumerate().skip(inner) {
            let mut acc = 0.0;
            for (k, &h) in taps.iter().enumerate() {
                acc += h * src[(2 * j + k) % cols];
            }
            *d = acc;
        }
    }
    out
}

// Op times T along the vertical axis.
fn analyze_rows(t: &[f64], rows: usize, cols: usize, taps: &[f64]) -> Vec<f64> {
    let half = rows / 2;
    let mut out = vec![0.0; half * cols];
    for i in 0..half {
        let dst = &mut out[i * cols..(i + 1) * cols];
        for (k, &h) in taps.iter().enumerate() {
            let src = &t[((2 * i + k) % rows) * cols..][..cols];
            for (d, s) in dst.iter_mut().zip(src) {
                *d += h * s;
            }
        }
    }
    out
}

// Accumulates Opᵀ · band into `t` (rows x cols), band is (rows/2 x cols).
fn synthesize_rows_into(t: &mut [f64], band: &[f64], rows: usize, cols: usize, taps: &[f64]) {
    for i in 0..rows / 2 {
        let src = &band[i * cols..(i + 1) * cols];
        for (k, &h) in taps.iter().enumerate() {
            let dst = &mut t[((2 * i + k) % rows) * cols..][..cols];
            for (d, s) in dst.iter_mut().zip(src) {
                *d += h * s;
            }
        }
    }
}

// Accumulates T · Op into `x` (rows x cols), T is (rows x cols/2).
fn synthesize_cols_into(x: &mut [f64], t: &[f64], rows: usize, cols: usize, taps: &[f64]) {
    let half = cols / 2;
    for y in 0..rows {
        let src = &t[y * half..(y + 1) * half];
        let dst = &mut x[y * cols..(y + 1) * cols];
        let inner = no_wrap(half, cols, taps.len());
        for (j, &s) in src[..inner].iter().enumerate() {
            for (d, &h) in dst[2 * j..].iter_mut().zip(taps) {
                *d += h * s;
            }
        }
        for (j, &s) in src.iter().enumerate().skip(inner) {
            for (k, &h) in taps.iter().enumerate() {
                dst[(2 * j + k) % cols] += h * s;
            }
        }
    }
}

fn check_input(vertical: &DwtPlan, horizontal: &DwtPlan, h: usize, w: usize) -> Result<()> {
    if vertical.length != h || horizontal.length != w {
        return Err(shape(format!(
            "input {h}x{w} does not match plans {}x{}",
            vertical.length, horizontal.length
        )));
    }
    Ok(())
}

/// Four-subband decomposition of a raster.
pub fn decompose(vertical: &DwtPlan, horizontal: &DwtPlan, x: &ImageRaster) -> Result<SubbandSet> {
    check_input(vertical, horizontal, x.height(), x.width())?;
    Ok(decompose_slice(vertical, horizontal, x.pixels()))
}

pub(crate) fn decompose_slice(vertical: &DwtPlan, horizontal: &DwtPlan, x: &[f64]) -> SubbandSet {
    let (n, m) = (vertical.length, horizontal.length);
    let t_low = analyze_cols(x, n, m, &horizontal.h0);
    let t_high = analyze_cols(x, n, m, &horizontal.h1);
    let (hn, hm) = (n / 2, m / 2);
    let band = |t: &[f64], taps: &[f64]| ImageRaster::from_parts(hn, hm, analyze_rows(t, n, hm, taps));
    SubbandSet {
        ll: band(&t_low, &vertical.h0),
        lh: band(&t_low, &vertical.h1),
        hl: band(&t_high, &vertical.h0),
        hh: band(&t_high, &vertical.h1),
    }
}

/// Adjoint synthesis `Lvᵀ ll Lh + Hvᵀ lh Lh + Lvᵀ hl Hh + Hvᵀ hh Hh`.
pub fn reconstruct(vertical: &DwtPlan, horizontal: &DwtPlan, s: &SubbandSet) -> Result<ImageRaster> {
    let (hn, hm) = (vertical.half(), horizontal.half());
    for band in s.bands() {
        if band.height() != hn || band.width() != hm {
            return Err(shape(format!(
                "subband {}x{} does not match plans (expected {hn}x{hm})",
                band.height(),
                band.width()
            )));
        }
    }
    let (n, m) = (vertical.length, horizontal.length);
    Ok(ImageRaster::from_parts(n, m, reconstruct_slices(vertical, horizontal, s.bands().map(|b| b.pixels()))))
}

pub(crate) fn reconstruct_slices(vertical: &DwtPlan, horizontal: &DwtPlan, bands: [&[f64]; 4]) -> Vec<f64> {
    let (n, m) = (vertical.length, horizontal.length);
    let hm = m / 2;
    let mut t_low = vec![0.0; n * hm];
    let mut t_high = vec![0.0; n * hm];
    synthesize_rows_into(&mut t_low, bands[0], n, hm, &vertical.h0);
    synthesize_rows_into(&mut t_low, bands[1], n, hm, &vertical.h1);
    synthesize_rows_into(&mut t_high, bands[2], n, hm, &vertical.h0);
    synthesize_rows_into(&mut t_high, bands[3], n, hm, &vertical.h1);
    let mut x = vec![0.0; n * m];
    synthesize_cols_into(&mut x, &t_low, n, m, &horizontal.h0);
    synthesize_cols_into(&mut x, &t_high, n, m, &horizontal.h1);
    x
}

/// Gradients of a decomposition with respect to its input and filter taps.
#[derive(Debug, Clone, PartialEq)]
pub struct DecomposeGrad {
    pub grad_x: Vec<f64>,
    pub grad_h0: Vec<f64>,
    pub grad_h1: Vec<f64>,
}

/// Reverse-mode pass through [`decompose`] given upstream subband gradients
/// in `(ll, lh, hl, hh)` order. Both plans are assumed to come from the same
/// filter pair, so their tap gradients are summed.
pub(crate) fn decompose_backward(
    vertical: &DwtPlan,
    horizontal: &DwtPlan,
    x: &[f64],
    grads: [&[f64]; 4],
) -> DecomposeGrad {
    let (n, m) = (vertical.length, horizontal.length);
    let hm = m / 2;
    let taps = vertical.h0.len();
    let t_low = analyze_cols(x, n, m, &horizontal.h0);
    let t_high = analyze_cols(x, n, m, &horizontal.h1);

    let mut grad_h0 = vec![0.0; taps];
    let mut grad_h1 = vec![0.0; taps];
    // vertical taps: band[i][j] = Σ_k h(k) T[(2i+k)%n][j]
    let vtap = |g: &[f64], t: &[f64], out: &mut [f64]| {
        for i in 0..n / 2 {
            let gi = &g[i * hm..(i + 1) * hm];
            for (k, o) in out.iter_mut().enumerate() {
                let ti = &t[((2 * i + k) % n) * hm..][..hm];
                *o += gi.iter().zip(ti).map(|(a, b)| a * b).sum::<f64>();
            }
        }
    };
    vtap(grads[0], &t_low, &mut grad_h0);
    vtap(grads[2], &t_high, &mut grad_h0);
    vtap(grads[1], &t_low, &mut grad_h1);
    vtap(grads[3], &t_high, &mut grad_h1);

    let mut d_low = vec![0.0; n * hm];
    let mut d_high = vec![0.0; n * hm];
    synthesize_rows_into(&mut d_low, grads[0], n, hm, &vertical.h0);
    synthesize_rows_into(&mut d_low, grads[1], n, hm, &vertical.h1);
    synthesize_rows_into(&mut d_high, grads[2], n, hm, &vertical.h0);
    synthesize_rows_into(&mut d_high, grads[3], n, hm, &vertical.h1);

    // horizontal taps: T[y][j] = Σ_k h(k) X[y][(2j+k)%m]
    let htap = |d: &[f64], out: &mut [f64]| {
        for y in 0..n {
            let xr = &x[y * m..(y + 1) * m];
            let dr = &d[y * hm..(y + 1) * hm];
            let inner = no_wrap(hm, m, out.len());
            for (j, &g) in dr[..inner].iter().enumerate() {
                for (o, &v) in out.iter_mut().zip(&xr[2 * j..]) {
                    *o += g * v;
                }
            }
            for (j, &g) in dr.iter().enumerate().skip(inner) {
                for (k, o) in out.iter_mut().enumerate() {
                    *o += g * xr[(2 * j + k) % m];
                }
            }
        }
    };
    htap(&d_low, &mut grad_h0);
    htap(&d_high, &mut grad_h1);

    let mut grad_x = vec![0.0; n * m];
    synthesize_cols_into(&mut grad_x, &d_low, n, m, &horizontal.h0);
    synthesize_cols_into(&mut grad_x, &d_high, n, m, &horizontal.h1);
    DecomposeGrad {
        grad_x,
        grad_h0,
        grad_h1,
    }
}

type PlanKey = (Vec<u64>, Vec<u64>, usize);

/// Shared cache of plans keyed by exact filter taps and length.
#[derive(Debug, Default)]
pub struct PlanCache {
    plans: RwLock<HashMap<PlanKey, Arc<DwtPlan>>>,
}

impl PlanCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get_or_build(&self, filters: &CoefficientFilterBank, length: usize) -> Result<Arc<DwtPlan>> {
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        let key = (bits(filters.lowpass()), bits(filters.highpass()), length);
        if let Some(plan) = self.plans.read().expect("plan cache poisoned").get(&key) {
            return Ok(Arc::clone(plan));
        }
        let plan = Arc::new(build_plan(filters, length)?);
        // concurrent builders may race here; both values are identical
        self.plans
            .write()
            .expect("plan cache poisoned")
            .insert(key, Arc::clone(&plan));
        Ok(plan)
    }

    pub fn len(&self) -> usize {
        self.plans.read().expect("plan cache poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
