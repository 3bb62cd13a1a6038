//! Plain CNN building blocks with hand-written backward passes.

use crate::error::{invalid, shape, Result};
use crate::units::FeatureMap;

/// 3x3 convolution with zero "same" padding and stride 1 or 2.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv3x3 {
    pub c_in: usize,
    pub c_out: usize,
    pub stride: usize,
    /// `(c_out, c_in, 3, 3)` row-major.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvGrad {
    pub grad_x: FeatureMap,
    pub grad_weights: Vec<f64>,
    pub grad_bias: Vec<f64>,
}

impl Conv3x3 {
    pub fn new(c_in: usize, c_out: usize, stride: usize, weights: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        if c_in == 0 || c_out == 0 {
            return Err(invalid("convolution needs at least one channel"));
        }
        if stride != 1 && stride != 2 {
            return Err(invalid(format!("unsupported stride {stride}")));
        }
        if weights.len() != c_out * c_in * 9 || bias.len() != c_out {
            return Err(shape(format!(
                "conv {c_in}->{c_out} needs {} weights and {c_out} biases",
                c_out * c_in * 9
            )));
        }
        Ok(Self {
            c_in,
            c_out,
            stride,
            weights,
            bias,
        })
    }

    pub fn zeros(c_in: usize, c_out: usize, stride: usize) -> Self {
        Self {
            c_in,
            c_out,
            stride,
            weights: vec![0.0; c_out * c_in * 9],
            bias: vec![0.0; c_out],
        }
    }

    /// Kernel with a single 1 at the centre of the `o == i` taps.
    pub fn identity(channels: usize) -> Self {
        let mut conv = Self::zeros(channels, channels, 1);
        for c in 0..channels {
            conv.weights[(c * channels + c) * 9 + 4] = 1.0;
        }
        conv
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    fn out_dim(&self, n: usize) -> usize {
        (n + self.stride - 1) / self.stride
    }

    // Valid output range for kernel offset `k` so that input index
    // `o * stride + k - 1` stays within `0..n`.
    fn valid_range(&self, k: usize, n: usize, out: usize) -> (usize, usize) {
        let s = self.stride;
        let lo = if k == 0 { 1usize.div_ceil(s) } else { 0 };
        // o*s + k - 1 <= n - 1  =>  o <= (n - k) / s
        let hi = if n + 1 > k { ((n - k) / s + 1).min(out) } else { 0 };
        (lo.min(hi), hi)
    }

    pub fn forward(&self, x: &FeatureMap) -> Result<FeatureMap> {
        if x.channels != self.c_in {
            return Err(shape(format!(
                "conv expects {} channels, got {}",
                self.c_in, x.channels
            )));
        }
        let (h, w) = (x.height, x.width);
        let (oh, ow) = (self.out_dim(h), self.out_dim(w));
        let s = self.stride;
        let mut out = vec![0.0; self.c_out * oh * ow];
        for o in 0..self.c_out {
            let plane = &mut out[o * oh * ow..(o + 1) * oh * ow];
            plane.fill(self.bias[o]);
            for i in 0..self.c_in {
                let src = x.channel(i);
                for ky in 0..3 {
                    let (y0, y1) = self.valid_range(ky, h, oh);
                    for kx in 0..3 {
                        let wv = self.weights[((o * self.c_in + i) * 3 + ky) * 3 + kx];
                        if wv == 0.0 {
                            continue;
                        }
                        let (x0, x1) = self.valid_range(kx, w, ow);
                        for oy in y0..y1 {
                            let iy = oy * s + ky - 1;
                            let srow = &src[iy * w..(iy + 1) * w];
                            let drow = &mut plane[oy * ow + x0..oy * ow + x1];
                            if s == 1 {
                                for (d, &v) in drow.iter_mut().zip(&srow[x0 + kx - 1..x1 + kx - 1]) {
                                    *d += wv * v;
                                }
                            } else {
                                for (d, &v) in drow.iter_mut().zip(srow[x0 * s + kx - 1..].iter().step_by(s)) {
                                    *d += wv * v;
                                }
                            }
                        }
                    }
                }
            }
        }
        Ok(FeatureMap::from_parts(self.c_out, oh, ow, out))
    }

    pub fn backward(&self, x: &FeatureMap, grad_out: &FeatureMap) -> Result<ConvGrad> {
        let (h, w) = (x.height, x.width);
        let (oh, ow) = (self.out_dim(h), self.out_dim(w));
        if x.channels != self.c_in || grad_out.channels != self.c_out || grad_out.height != oh || grad_out.width != ow {
            return Err(shape("conv backward shapes do not match forward"));
        }
        let s = self.stride;
        let mut grad_x = vec![0.0; self.c_in * h * w];
        let mut grad_weights = vec![0.0; self.weights.len()];
        let mut grad_bias = vec![0.0; self.c_out];
        for o in 0..self.c_out {
            let g = grad_out.channel(o);
            grad_bias[o] = g.iter().sum();
            for i in 0..self.c_in {
                let src = x.channel(i);
                let gx = &mut grad_x[i * h * w..(i + 1) * h * w];
                for ky in 0..3 {
                    let (y0, y1) = self.valid_range(ky, h, oh);
                    for kx in 0..3 {
                        let wv = self.weights[((o * self.c_in + i) * 3 + ky) * 3 + kx];
                        let (x0, x1) = self.valid_range(kx, w, ow);
                        for oy in y0..y1 {
                            let iy = oy * s + ky - 1;
                            let grow = &g[oy * ow + x0..oy * ow + x1];
                            let gxrow = &mut gx[iy * w + x0 * s + kx - 1..(iy + 1) * w];
                            if s == 1 {
                                for (gxv, &gv) in gxrow.iter_mut().zip(grow) {
                                    *gxv += wv * gv;
                                }
                            } else {
                                for (gxv, &gv) in gxrow.iter_mut().step_by(s).zip(grow) {
                                    *gxv += wv * gv;
                                }
                            }
                        }
                    }
                }
                // Nine independent accumulators, each summed in row-major
                // output order, interleaved so their chains overlap.
                let mut acc = [0.0f64; 9];
                let ranges: [(usize, usize); 3] = std::array::from_fn(|k| self.valid_range(k, h, oh));
                let xranges: [(usize, usize); 3] = std::array::from_fn(|k| self.valid_range(k, w, ow));
                for oy in 0..oh {
                    for ky in 0..3 {
                        if oy < ranges[ky].0 || oy >= ranges[ky].1 {
                            continue;
                        }
                        let iy = oy * s + ky - 1;
                        for kx in 0..3 {
                            let (x0, x1) = xranges[kx];
                            let grow = &g[oy * ow + x0..oy * ow + x1];
                            let srow = &src[iy * w + x0 * s + kx - 1..(iy + 1) * w];
                            let a = &mut acc[ky * 3 + kx];
                            if s == 1 {
                                for (&gv, &sv) in grow.iter().zip(srow) {
                                    *a += gv * sv;
                                }
                            } else {
                                for (&gv, &sv) in grow.iter().zip(srow.iter().step_by(s)) {
                                    *a += gv * sv;
                                }
                            }
                        }
                    }
                }
                let base = (o * self.c_in + i) * 9;
                grad_weights[base..base + 9].copy_from_slice(&acc);
            }
        }
        Ok(ConvGrad {
            grad_x: FeatureMap::from_parts(self.c_in, h, w, grad_x),
            grad_weights,
            grad_bias,
        })
    }
}

pub fn relu(x: &FeatureMap) -> FeatureMap {
    x.map(|v| v.max(0.0))
}

/// Gradient through ReLU given the pre-activation; zero at the kink.
pub fn relu_backward(pre: &FeatureMap, grad: &FeatureMap) -> FeatureMap {
    let values = pre
        .values
        .iter()
        .zip(&grad.values)
        .map(|(&p, &g)| if p > 0.0 { g } else { 0.0 })
        .collect();
    FeatureMap::from_parts(pre.channels, pre.height, pre.width, values)
}

/// 2x2 max pooling with stride 2. Also returns the flat argmax per output.
pub fn max_pool2(x: &FeatureMap) -> Result<(FeatureMap, Vec<usize>)> {
    x.require_even()?;
    let (oh, ow) = (x.height / 2, x.width / 2);
    let mut out = Vec::with_capacity(x.channels * oh * ow);
    let mut arg = Vec::with_capacity(out.capacity());
    for c in 0..x.channels {
        let base = c * x.height * x.width;
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = base + 2 * oy * x.width + 2 * ox;
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let idx = base + (2 * oy + dy) * x.width + 2 * ox + dx;
                    // first maximum wins ties
                    if x.values[idx] > x.values[best] {
                        best = idx;
                    }
                }
                out.push(x.values[best]);
                arg.push(best);
            }
        }
    }
    Ok((FeatureMap::from_parts(x.channels, oh, ow, out), arg))
}

pub fn max_pool2_backward(input_shape: (usize, usize, usize), argmax: &[usize], grad: &FeatureMap) -> FeatureMap {
    let (c, h, w) = input_shape;
    let mut gx = vec![0.0; c * h * w];
    for (&idx, &g) in argmax.iter().zip(&grad.values) {
        gx[idx] += g;
    }
    FeatureMap::from_parts(c, h, w, gx)
}

/// 2x2 average pooling with stride 2.
pub fn avg_pool2(x: &FeatureMap) -> Result<FeatureMap> {
    x.require_even()?;
    let (oh, ow) = (x.height / 2, x.width / 2);
    let mut out = Vec::with_capacity(x.channels * oh * ow);
    for c in 0..x.channels {
        let p = x.channel(c);
        for oy in 0..oh {
            for ox in 0..ow {
                let i = 2 * oy * x.width + 2 * ox;
                out.push(0.25 * (p[i] + p[i + 1] + p[i + x.width] + p[i + x.width + 1]));
            }
        }
    }
    Ok(FeatureMap::from_parts(x.channels, oh, ow, out))
}

pub fn avg_pool2_backward(input_shape: (usize, usize, usize), grad: &FeatureMap) -> FeatureMap {
    let (c, h, w) = input_shape;
    let mut gx = vec![0.0; c * h * w];
    for ch in 0..c {
        for oy in 0..h / 2 {
            for ox in 0..w / 2 {
                let g = 0.25 * grad.values[(ch * (h / 2) + oy) * (w / 2) + ox];
                let i = ch * h * w + 2 * oy * w + 2 * ox;
                gx[i] += g;
                gx[i + 1] += g;
                gx[i + w] += g;
                gx[i + w + 1] += g;
            }
        }
    }
    FeatureMap::from_parts(c, h, w, gx)
}

/// Per-channel spatial mean.
pub fn global_avg_pool(x: &FeatureMap) -> Vec<f64> {
    let n = (x.height * x.width) as f64;
    (0..x.channels)
        .map(|c| x.channel(c).iter().sum::<f64>() / n)
        .collect()
}

pub fn global_avg_pool_backward(shape: (usize, usize, usize), grad: &[f64]) -> FeatureMap {
    let (c, h, w) = shape;
    let n = (h * w) as f64;
    let values = (0..c)
        .flat_map(|ch| std::iter::repeat_n(grad[ch] / n, h * w))
        .collect();
    FeatureMap::from_parts(c, h, w, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn naive_conv(conv: &Conv3x3, x: &FeatureMap) -> FeatureMap {
        let s = conv.stride;
        let (oh, ow) = (x.height.div_ceil(s), x.width.div_ceil(s));
        let mut out = vec![0.0; conv.c_out * oh * ow];
        for o in 0..conv.c_out {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = conv.bias[o];
                    for i in 0..conv.c_in {
                        for ky in 0..3 {
                            for kx in 0..3 {
                                let iy = (oy * s + ky) as isize - 1;
                                let ix = (ox * s + kx) as isize - 1;
                                if iy < 0 || ix < 0 || iy >= x.height as isize || ix >= x.width as isize {
                                    continue;
                                }
                                acc += conv.weights[((o * conv.c_in + i) * 3 + ky) * 3 + kx]
                                    * x.get(i, iy as usize, ix as usize);
                            }
                        }
                    }
                    out[(o * oh + oy) * ow + ox] = acc;
                }
            }
        }
        FeatureMap::from_parts(conv.c_out, oh, ow, out)
    }

    fn ramp(c: usize, h: usize, w: usize) -> FeatureMap {
        let values = (0..c * h * w).map(|i| ((i * 37 % 11) as f64 - 5.0) * 0.3).collect();
        FeatureMap::new(c, h, w, values).unwrap()
    }

    #[test]
    fn conv_matches_naive_loops() {
        for stride in [1, 2] {
            let weights = (0..2 * 3 * 9).map(|i| ((i * 13 % 7) as f64 - 3.0) * 0.1).collect();
            let conv = Conv3x3::new(3, 2, stride, weights, vec![0.1, -0.2]).unwrap();
            let x = ramp(3, 6, 5);
            let fast = conv.forward(&x).unwrap();
            let slow = naive_conv(&conv, &x);
            assert_eq!((fast.height, fast.width), (slow.height, slow.width));
            for (a, b) in fast.values.iter().zip(&slow.values) {
                assert_abs_diff_eq!(*a, *b, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn conv_backward_matches_finite_differences() {
        for stride in [1, 2] {
            let weights: Vec<f64> = (0..2 * 2 * 9).map(|i| ((i * 5 % 9) as f64 - 4.0) * 0.1).collect();
            let conv = Conv3x3::new(2, 2, stride, weights.clone(), vec![0.3, 0.1]).unwrap();
            let x = ramp(2, 4, 4);
            let out = conv.forward(&x).unwrap();
            let upstream = out.map(|v| 0.5 * v + 0.1);
            let loss = |c: &Conv3x3, x: &FeatureMap| -> f64 {
                c.forward(x)
                    .unwrap()
                    .values
                    .iter()
                    .zip(&upstream.values)
                    .map(|(a, b)| a * b)
                    .sum()
            };
            let g = conv.backward(&x, &upstream).unwrap();
            let eps = 1e-6;
            for k in 0..weights.len() {
                let mut p = conv.clone();
                p.weights[k] += eps;
                let mut m = conv.clone();
                m.weights[k] -= eps;
                let fd = (loss(&p, &x) - loss(&m, &x)) / (2.0 * eps);
                assert_abs_diff_eq!(g.grad_weights[k], fd, epsilon = 1e-6);
            }
            for k in 0..x.values.len() {
                let mut xp = x.clone();
                xp.values[k] += eps;
                let mut xm = x.clone();
                xm.values[k] -= eps;
                let fd = (loss(&conv, &xp) - loss(&conv, &xm)) / (2.0 * eps);
                assert_abs_diff_eq!(g.grad_x.values[k], fd, epsilon = 1e-6);
            }
            assert_abs_diff_eq!(g.grad_bias[0], upstream.channel(0).iter().sum::<f64>(), epsilon = 1e-12);
        }
    }

    #[test]
    fn identity_conv_is_identity() {
        let x = ramp(2, 4, 6);
        assert_eq!(Conv3x3::identity(2).forward(&x).unwrap(), x);
    }

    #[test]
    fn pools() {
        let x = FeatureMap::new(1, 2, 4, vec![1.0, 5.0, 2.0, 2.0, 3.0, -1.0, 2.0, 0.0]).unwrap();
        let (m, arg) = max_pool2(&x).unwrap();
        assert_eq!(m.values, vec![5.0, 2.0]);
        assert_eq!(arg, vec![1, 2]);
        let a = avg_pool2(&x).unwrap();
        assert_eq!(a.values, vec![2.0, 1.5]);
        let g = max_pool2_backward((1, 2, 4), &arg, &FeatureMap::new(1, 1, 2, vec![1.0, 2.0]).unwrap());
        assert_eq!(g.values, vec![0.0, 1.0, 2.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert!(max_pool2(&ramp(1, 3, 4)).is_err());
    }
}
