//! Tunable wavelet units.
//!
//! A unit decomposes every channel of a feature map into its four subbands,
//! rectifies them, stacks them along the channel axis as
//! `[ll(0..C), lh(0..C), hl(0..C), hh(0..C)]`, and fuses the stack with a
//! trainable 1x1 map `4C -> C_out` plus bias. Output resolution is half the
//! input resolution.

use crate::dwt2d::{build_plan, decompose_backward, decompose_slice, DwtPlan};
use crate::error::{invalid, shape, Result};
use crate::filterbank::FilterBank;
use crate::layers::Conv3x3;

/// Channel-major real tensor `(channels, height, width)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub values: Vec<f64>,
}

impl FeatureMap {
    pub fn new(channels: usize, height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        if channels == 0 || height == 0 || width == 0 {
            return Err(invalid("feature map dimensions must be positive"));
        }
        if values.len() != channels * height * width {
            return Err(shape(format!(
                "{channels}x{height}x{width} map needs {} values, got {}",
                channels * height * width,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(invalid("feature map values must be finite"));
        }
        Ok(Self::from_parts(channels, height, width, values))
    }

    pub(crate) fn from_parts(channels: usize, height: usize, width: usize, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), channels * height * width);
        Self {
            channels,
            height,
            width,
            values,
        }
    }

    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self::from_parts(channels, height, width, vec![0.0; channels * height * width])
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    pub fn plane_len(&self) -> usize {
        self.height * self.width
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let n = self.plane_len();
        &self.values[c * n..(c + 1) * n]
    }

    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.values[(c * self.height + y) * self.width + x]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self::from_parts(
            self.channels,
            self.height,
            self.width,
            self.values.iter().map(|&v| f(v)).collect(),
        )
    }

    pub fn add_assign(&mut self, other: &Self) {
        assert_eq!(self.shape(), other.shape(), "feature map shapes differ");
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += b;
        }
    }

    pub(crate) fn require_even(&self) -> Result<()> {
        if self.height % 2 != 0 || self.width % 2 != 0 {
            return Err(shape(format!(
                "spatial dims {}x{} must be even",
                self.height, self.width
            )));
        }
        Ok(())
    }
}

/// Whether the unit's bank is a lattice (orthlatt) or free taps (pr-relax).
pub use crate::filterbank::BankMode as UnitMode;

#[derive(Debug, Clone, PartialEq)]
pub struct WaveletUnit {
    pub bank: FilterBank,
    pub c_in: usize,
    pub c_out: usize,
    /// `(c_out, 4 * c_in)` row-major fusion weights.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl WaveletUnit {
    pub fn new(bank: FilterBank, c_in: usize, c_out: usize, weights: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        if c_in == 0 || c_out == 0 {
            return Err(invalid("wavelet unit needs at least one channel"));
        }
        if weights.len() != 4 * c_in * c_out || bias.len() != c_out {
            return Err(shape(format!(
                "fusion {c_in}->{c_out} needs {} weights and {c_out} biases",
                4 * c_in * c_out
            )));
        }
        Ok(Self {
            bank,
            c_in,
            c_out,
            weights,
            bias,
        })
    }

    /// Starts out as average pooling: the ll path carries `1/2` times the
    /// identity (undoing the Haar LL gain of 2), all other paths are zero.
    pub fn average_pool_init(bank: FilterBank, c_in: usize, c_out: usize) -> Self {
        let mut weights = vec![0.0; 4 * c_in * c_out];
        for c in 0..c_in.min(c_out) {
            weights[c * 4 * c_in + c] = 0.5;
        }
        Self {
            bank,
            c_in,
            c_out,
            weights,
            bias: vec![0.0; c_out],
        }
    }

    pub fn mode(&self) -> UnitMode {
        self.bank.mode()
    }

    /// Fusion weights + bias + bank parameters.
    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len() + self.bank.params().len()
    }

    fn plans(&self, height: usize, width: usize) -> Result<(DwtPlan, DwtPlan)> {
        let filters = self.bank.filters();
        Ok((build_plan(&filters, height)?, build_plan(&filters, width)?))
    }

    fn check_input(&self, x: &FeatureMap) -> Result<()> {
        if x.channels != self.c_in {
            return Err(shape(format!(
                "unit expects {} channels, got {}",
                self.c_in, x.channels
            )));
        }
        x.require_even()
    }

    /// Forward pass retaining what the backward pass needs.
    pub fn forward_cached(&self, x: &FeatureMap) -> Result<(FeatureMap, UnitCache)> {
        self.check_input(x)?;
        let (vertical, horizontal) = self.plans(x.height, x.width)?;
        let (hh, hw) = (x.height / 2, x.width / 2);
        let plane = hh * hw;
        let c = self.c_in;
        // stacked pre-activation subbands, band-major
        let mut stacked = vec![0.0; 4 * c * plane];
        for ch in 0..c {
            let bands = decompose_slice(&vertical, &horizontal, x.channel(ch));
            for (b, band) in bands.bands().iter().enumerate() {
                stacked[(b * c + ch) * plane..][..plane].copy_from_slice(band.pixels());
            }
        }
        let mut out = vec![0.0; self.c_out * plane];
        for o in 0..self.c_out {
            let dst = &mut out[o * plane..(o + 1) * plane];
            dst.fill(self.bias[o]);
            for k in 0..4 * c {
                let wv = self.weights[o * 4 * c + k];
                if wv == 0.0 {
                    continue;
                }
                for (d, &s) in dst.iter_mut().zip(&stacked[k * plane..(k + 1) * plane]) {
                    *d += wv * s.max(0.0);
                }
            }
        }
        Ok((
            FeatureMap::from_parts(self.c_out, hh, hw, out),
            UnitCache {
                vertical,
                horizontal,
                stacked,
            },
        ))
    }

    pub fn forward(&self, x: &FeatureMap) -> Result<FeatureMap> {
        Ok(self.forward_cached(x)?.0)
    }

    /// Reverse-mode pass given the forward cache.
    pub fn backward_cached(&self, x: &FeatureMap, cache: &UnitCache, upstream: &FeatureMap) -> Result<UnitGrad> {
        self.check_input(x)?;
        let (hh, hw) = (x.height / 2, x.width / 2);
        if upstream.shape() != (self.c_out, hh, hw) {
            return Err(shape(format!(
                "upstream gradient {:?} does not match unit output ({}, {hh}, {hw})",
                upstream.shape(),
                self.c_out
            )));
        }
        let plane = hh * hw;
        let c = self.c_in;
        let mut grad_weights = vec![0.0; self.weights.len()];
        let mut grad_bias = vec![0.0; self.c_out];
        let mut grad_stacked = vec![0.0; 4 * c * plane];
        for o in 0..self.c_out {
            let g = upstream.channel(o);
            grad_bias[o] = g.iter().sum();
            for k in 0..4 * c {
                let pre = &cache.stacked[k * plane..(k + 1) * plane];
                let wv = self.weights[o * 4 * c + k];
                let gs = &mut grad_stacked[k * plane..(k + 1) * plane];
                let mut acc = 0.0;
                for ((&gv, &p), d) in g.iter().zip(pre).zip(gs.iter_mut()) {
                    if p > 0.0 {
                        acc += gv * p;
                        *d += wv * gv;
                    }
                }
                grad_weights[o * 4 * c + k] = acc;
            }
        }

        let taps = self.bank.tap_count();
        let mut grad_h0 = vec![0.0; taps];
        let mut grad_h1 = vec![0.0; taps];
        let mut grad_x = vec![0.0; x.values.len()];
        let n = x.plane_len();
        for ch in 0..c {
            let band = |b: usize| &grad_stacked[(b * c + ch) * plane..][..plane];
            let g = decompose_backward(
                &cache.vertical,
                &cache.horizontal,
                x.channel(ch),
                [band(0), band(1), band(2), band(3)],
            );
            grad_x[ch * n..(ch + 1) * n].copy_from_slice(&g.grad_x);
            for (a, b) in grad_h0.iter_mut().zip(&g.grad_h0) {
                *a += b;
            }
            for (a, b) in grad_h1.iter_mut().zip(&g.grad_h1) {
                *a += b;
            }
        }
        let grad_bank = self.bank.pullback(&grad_h0, &grad_h1);
        Ok(UnitGrad {
            grad_x: FeatureMap::from_parts(x.channels, x.height, x.width, grad_x),
            grad_weights,
            grad_bias,
            grad_bank,
        })
    }
}

/// Forward state reused by the backward pass.
#[derive(Debug, Clone)]
pub struct UnitCache {
    vertical: DwtPlan,
    horizontal: DwtPlan,
    stacked: Vec<f64>,
}

/// Gradients of a unit with respect to its input and every parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitGrad {
    pub grad_x: FeatureMap,
    pub grad_weights: Vec<f64>,
    pub grad_bias: Vec<f64>,
    /// Angles for a lattice bank, `h0` taps for a free bank.
    pub grad_bank: Vec<f64>,
}

/// Wavelet replacement for a pooling layer.
pub fn wavelet_pool(unit: &WaveletUnit, x: &FeatureMap) -> Result<FeatureMap> {
    unit.forward(x)
}

/// Wavelet replacement for a downsampling (shortcut) layer. Same computation
/// as [`wavelet_pool`]; kept separate so networks can place it independently.
pub fn wavelet_downsample(unit: &WaveletUnit, x: &FeatureMap) -> Result<FeatureMap> {
    unit.forward(x)
}

/// Stride-1 3x3 convolution followed by a wavelet unit, replacing a
/// stride-2 convolution.
pub fn wavelet_stride_conv(conv: &Conv3x3, unit: &WaveletUnit, x: &FeatureMap) -> Result<FeatureMap> {
    if conv.stride != 1 {
        return Err(invalid("wavelet stride conv needs a stride-1 convolution"));
    }
    if conv.c_out != unit.c_in {
        return Err(shape(format!(
            "conv produces {} channels but unit expects {}",
            conv.c_out, unit.c_in
        )));
    }
    unit.forward(&conv.forward(x)?)
}

/// Gradients of a unit's output contracted with `upstream`.
pub fn unit_backward(unit: &WaveletUnit, x: &FeatureMap, upstream: &FeatureMap) -> Result<UnitGrad> {
    let (_, cache) = unit.forward_cached(x)?;
    unit.backward_cached(x, &cache, upstream)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filterbank::{init_filter_bank, BankMode};
    use approx::assert_abs_diff_eq;

    fn haar_unit(c_in: usize, c_out: usize) -> WaveletUnit {
        WaveletUnit::average_pool_init(init_filter_bank(2, BankMode::Lattice).unwrap(), c_in, c_out)
    }

    fn select_ll() -> WaveletUnit {
        let mut unit = haar_unit(1, 1);
        unit.weights = vec![1.0, 0.0, 0.0, 0.0];
        unit
    }

    #[test]
    fn constant_input_select_ll() {
        let x = FeatureMap::new(1, 4, 6, vec![3.0; 24]).unwrap();
        let y = wavelet_pool(&select_ll(), &x).unwrap();
        assert_eq!(y.shape(), (1, 2, 3));
        for v in &y.values {
            assert_abs_diff_eq!(*v, 6.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn average_pool_init_matches_avg_pool() {
        let x = FeatureMap::new(2, 4, 4, (0..32).map(|i| i as f64 * 0.5).collect()).unwrap();
        let y = wavelet_downsample(&haar_unit(2, 2), &x).unwrap();
        let avg = crate::layers::avg_pool2(&x).unwrap();
        for (a, b) in y.values.iter().zip(&avg.values) {
            assert_abs_diff_eq!(*a, *b, epsilon = 1e-12);
        }
    }

    #[test]
    fn zero_fusion_gives_zero_output() {
        let mut unit = haar_unit(1, 4);
        unit.weights.fill(0.0);
        let x = FeatureMap::new(1, 8, 8, (0..64).map(|i| (i % 7) as f64).collect()).unwrap();
        let y = wavelet_pool(&unit, &x).unwrap();
        assert_eq!(y.shape(), (4, 4, 4));
        assert!(y.values.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn shape_errors() {
        let unit = haar_unit(2, 2);
        assert!(unit.forward(&FeatureMap::zeros(1, 4, 4)).is_err());
        assert!(unit.forward(&FeatureMap::zeros(2, 3, 4)).is_err());
        assert!(WaveletUnit::new(unit.bank.clone(), 2, 2, vec![0.0; 3], vec![0.0; 2]).is_err());
        assert!(wavelet_stride_conv(&Conv3x3::identity(3), &unit, &FeatureMap::zeros(3, 4, 4)).is_err());
    }

    #[test]
    fn identity_conv_reduces_to_pool() {
        let unit = haar_unit(1, 2);
        let x = FeatureMap::new(1, 4, 4, (0..16).map(|i| (i as f64).sin()).collect()).unwrap();
        assert_eq!(
            wavelet_stride_conv(&Conv3x3::identity(1), &unit, &x).unwrap(),
            wavelet_pool(&unit, &x).unwrap()
        );
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let unit = WaveletUnit::average_pool_init(init_filter_bank(4, BankMode::Free).unwrap(), 1, 2);
        let x = FeatureMap::new(1, 4, 4, (0..16).map(|i| (i as f64).cos()).collect()).unwrap();
        let g = unit_backward(&unit, &x, &FeatureMap::zeros(2, 2, 2)).unwrap();
        assert!(g.grad_x.values.iter().all(|v| *v == 0.0));
        assert!(g.grad_weights.iter().chain(&g.grad_bias).chain(&g.grad_bank).all(|v| *v == 0.0));
    }
}
