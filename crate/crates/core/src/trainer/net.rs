//! Small residual classifier with configurable downsampling sites.
//!
//! ```text
//! x (1xSxS)
//!  -> stem conv 1->C, ReLU
//!  -> block 1: h + ReLU(conv(h))      -> pool site    (S/2)
//!  -> block 2: h + ReLU(conv(h))      -> stride site  (S/4)
//!  -> global average -> linear C->2
//! ```
//!
//! The pool site is max pooling, average pooling or a wavelet unit. The
//! stride site is a stride-2 convolution or a stride-1 convolution followed
//! by a wavelet unit.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{invalid, shape, Result, TwuError};
use crate::filterbank::{init_filter_bank, BankMode};
use crate::layers::{self, Conv3x3};
use crate::units::{FeatureMap, UnitCache, WaveletUnit};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PoolKind {
    Max,
    Avg,
    Wavelet,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StrideKind {
    Conv,
    Wavelet,
}

impl fmt::Display for PoolKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PoolKind::Max => "maxpool",
            PoolKind::Avg => "avgpool",
            PoolKind::Wavelet => "wavelet",
        })
    }
}

impl FromStr for PoolKind {
    type Err = TwuError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "maxpool" | "max" => Ok(PoolKind::Max),
            "avgpool" | "avg" => Ok(PoolKind::Avg),
            "wavelet" | "wavelet_pool" => Ok(PoolKind::Wavelet),
            other => Err(invalid(format!("unknown pool kind '{other}'"))),
        }
    }
}

impl fmt::Display for StrideKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StrideKind::Conv => "stride2-conv",
            StrideKind::Wavelet => "wavelet",
        })
    }
}

impl FromStr for StrideKind {
    type Err = TwuError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "stride2-conv" | "conv" => Ok(StrideKind::Conv),
            "wavelet" | "wavelet_stride_conv" => Ok(StrideKind::Wavelet),
            other => Err(invalid(format!("unknown stride kind '{other}'"))),
        }
    }
}

/// Which layer fills each downsampling site, and how wavelet units are
/// parameterized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SitePolicy {
    pub pool: PoolKind,
    pub stride: StrideKind,
    pub mode: BankMode,
    pub taps: usize,
}

impl SitePolicy {
    pub fn baseline() -> Self {
        Self {
            pool: PoolKind::Max,
            stride: StrideKind::Conv,
            mode: BankMode::Lattice,
            taps: 2,
        }
    }

    pub fn wavelet(mode: BankMode, taps: usize) -> Self {
        Self {
            pool: PoolKind::Wavelet,
            stride: StrideKind::Wavelet,
            mode,
            taps,
        }
    }

    pub fn uses_wavelets(&self) -> bool {
        self.pool == PoolKind::Wavelet || self.stride == StrideKind::Wavelet
    }
}

impl fmt::Display for SitePolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "pool={} stride={} mode={} taps={}",
            self.pool, self.stride, self.mode, self.taps
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PoolSite {
    Max,
    Avg,
    Wavelet(WaveletUnit),
}

#[derive(Debug, Clone, PartialEq)]
pub enum StrideSite {
    Conv(Conv3x3),
    Wavelet { conv: Conv3x3, unit: WaveletUnit },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyNet {
    pub channels: usize,
    pub policy: SitePolicy,
    pub stem: Conv3x3,
    pub block1: Conv3x3,
    pub block2: Conv3x3,
    pub pool: PoolSite,
    pub stride: StrideSite,
    /// `(2, channels)` row-major.
    pub head_w: Vec<f64>,
    pub head_b: Vec<f64>,
}

/// A named, flat parameter block.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamBlock {
    pub name: String,
    pub values: Vec<f64>,
}

fn normal_vec(rng: &mut ChaCha8Rng, len: usize, std: f64) -> Vec<f64> {
    let dist = Normal::new(0.0, std).expect("positive std");
    (0..len).map(|_| dist.sample(rng)).collect()
}

fn he_conv(rng: &mut ChaCha8Rng, c_in: usize, c_out: usize, stride: usize) -> Conv3x3 {
    let std = (2.0 / (9 * c_in) as f64).sqrt();
    Conv3x3 {
        c_in,
        c_out,
        stride,
        weights: normal_vec(rng, c_out * c_in * 9, std),
        bias: vec![0.0; c_out],
    }
}

impl ToyNet {
    /// Seeded initialization. Layers shared by every policy draw from the
    /// generator in the same order, so two policies with one seed start from
    /// identical stem, block and head weights.
    pub fn new(channels: usize, policy: SitePolicy, seed: u64) -> Result<Self> {
        if channels == 0 {
            return Err(invalid("network needs at least one channel"));
        }
        let unit = || -> Result<WaveletUnit> {
            let bank = init_filter_bank(policy.taps, policy.mode)?;
            Ok(WaveletUnit::average_pool_init(bank, channels, channels))
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let stem = he_conv(&mut rng, 1, channels, 1);
        let block1 = he_conv(&mut rng, channels, channels, 1);
        let block2 = he_conv(&mut rng, channels, channels, 1);
        let stride_stride = match policy.stride {
            StrideKind::Conv => 2,
            StrideKind::Wavelet => 1,
        };
        let stride_conv = he_conv(&mut rng, channels, channels, stride_stride);
        let head_w = normal_vec(&mut rng, 2 * channels, (1.0 / channels as f64).sqrt());
        let pool = match policy.pool {
            PoolKind::Max => PoolSite::Max,
            PoolKind::Avg => PoolSite::Avg,
            PoolKind::Wavelet => PoolSite::Wavelet(unit()?),
        };
        let stride = match policy.stride {
            StrideKind::Conv => StrideSite::Conv(stride_conv),
            StrideKind::Wavelet => StrideSite::Wavelet {
                conv: stride_conv,
                unit: unit()?,
            },
        };
        Ok(Self {
            channels,
            policy,
            stem,
            block1,
            block2,
            pool,
            stride,
            head_w,
            head_b: vec![0.0; 2],
        })
    }

    /// Wavelet units in declaration order.
    pub fn units(&self) -> Vec<&WaveletUnit> {
        let mut out = Vec::new();
        if let PoolSite::Wavelet(u) = &self.pool {
            out.push(u);
        }
        if let StrideSite::Wavelet { unit, .. } = &self.stride {
            out.push(unit);
        }
        out
    }

    /// Low-pass taps of every free-tap (penalized) unit.
    pub fn penalized_lowpass(&self) -> Vec<Vec<f64>> {
        self.units()
            .into_iter()
            .filter(|u| u.mode() == BankMode::Free)
            .map(|u| u.bank.filters().lowpass().to_vec())
            .collect()
    }

    /// Σ pr_loss over every unit, regardless of mode.
    pub fn pr_loss_sum(&self) -> f64 {
        self.units().iter().fold(0.0, |acc, u| acc + u.bank.filters().pr_loss())
    }

    pub fn param_blocks(&self) -> Vec<ParamBlock> {
        let mut blocks = Vec::new();
        let mut push = |name: &str, values: &[f64]| {
            blocks.push(ParamBlock {
                name: name.to_string(),
                values: values.to_vec(),
            })
        };
        push("stem.w", &self.stem.weights);
        push("stem.b", &self.stem.bias);
        push("block1.w", &self.block1.weights);
        push("block1.b", &self.block1.bias);
        push("block2.w", &self.block2.weights);
        push("block2.b", &self.block2.bias);
        if let PoolSite::Wavelet(u) = &self.pool {
            push("pool.fuse.w", &u.weights);
            push("pool.fuse.b", &u.bias);
            push("pool.bank", u.bank.params());
        }
        match &self.stride {
            StrideSite::Conv(c) => {
                push("stride.conv.w", &c.weights);
                push("stride.conv.b", &c.bias);
            }
            StrideSite::Wavelet { conv, unit } => {
                push("stride.conv.w", &conv.weights);
                push("stride.conv.b", &conv.bias);
                push("stride.fuse.w", &unit.weights);
                push("stride.fuse.b", &unit.bias);
                push("stride.bank", unit.bank.params());
            }
        }
        push("head.w", &self.head_w);
        push("head.b", &self.head_b);
        blocks
    }

    pub fn param_count(&self) -> usize {
        self.param_blocks().iter().map(|b| b.values.len()).sum()
    }

    pub fn params_flat(&self) -> Vec<f64> {
        self.param_blocks().into_iter().flat_map(|b| b.values).collect()
    }

    /// Overwrites every parameter from a flat vector in block order.
    pub fn load_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(shape(format!(
                "expected {} parameters, got {}",
                self.param_count(),
                flat.len()
            )));
        }
        let mut rest = flat;
        let mut take = |dst: &mut Vec<f64>| {
            let (head, tail) = rest.split_at(dst.len());
            dst.copy_from_slice(head);
            rest = tail;
        };
        take(&mut self.stem.weights);
        take(&mut self.stem.bias);
        take(&mut self.block1.weights);
        take(&mut self.block1.bias);
        take(&mut self.block2.weights);
        take(&mut self.block2.bias);
        let take_unit = |u: &mut WaveletUnit, take: &mut dyn FnMut(&mut Vec<f64>)| -> Result<()> {
            take(&mut u.weights);
            take(&mut u.bias);
            let mut bank = u.bank.params().to_vec();
            take(&mut bank);
            u.bank = u.bank.with_params(bank)?;
            Ok(())
        };
        if let PoolSite::Wavelet(u) = &mut self.pool {
            take_unit(u, &mut take)?;
        }
        match &mut self.stride {
            StrideSite::Conv(c) => {
                take(&mut c.weights);
                take(&mut c.bias);
            }
            StrideSite::Wavelet { conv, unit } => {
                take(&mut conv.weights);
                take(&mut conv.bias);
                take_unit(unit, &mut take)?;
            }
        }
        take(&mut self.head_w);
        take(&mut self.head_b);
        Ok(())
    }

    fn check_input(&self, x: &FeatureMap) -> Result<()> {
        if x.channels != 1 || x.height % 4 != 0 || x.width % 4 != 0 || x.height == 0 {
            return Err(shape(format!(
                "network expects 1 channel with sides divisible by 4, got {:?}",
                x.shape()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, x: &FeatureMap) -> Result<Vec<f64>> {
        Ok(self.forward_trace(x)?.logits)
    }

    fn forward_trace(&self, x: &FeatureMap) -> Result<Trace> {
        self.check_input(x)?;
        let a0 = self.stem.forward(x)?;
        let h0 = layers::relu(&a0);
        let a1 = self.block1.forward(&h0)?;
        let mut h1 = layers::relu(&a1);
        h1.add_assign(&h0);
        let (p1, pool_cache) = match &self.pool {
            PoolSite::Max => {
                let (p, arg) = layers::max_pool2(&h1)?;
                (p, PoolCache::Max(arg))
            }
            PoolSite::Avg => (layers::avg_pool2(&h1)?, PoolCache::Avg),
            PoolSite::Wavelet(u) => {
                let (p, c) = u.forward_cached(&h1)?;
                (p, PoolCache::Wavelet(c))
            }
        };
        let a2 = self.block2.forward(&p1)?;
        let mut h2 = layers::relu(&a2);
        h2.add_assign(&p1);
        let (s, stride_cache) = match &self.stride {
            StrideSite::Conv(c) => (c.forward(&h2)?, StrideCache::Conv),
            StrideSite::Wavelet { conv, unit } => {
                let mid = conv.forward(&h2)?;
                let (s, c) = unit.forward_cached(&mid)?;
                (s, StrideCache::Wavelet { mid, cache: c })
            }
        };
        let pooled = layers::global_avg_pool(&s);
        let logits = (0..2)
            .map(|k| {
                self.head_b[k]
                    + self.head_w[k * self.channels..(k + 1) * self.channels]
                        .iter()
                        .zip(&pooled)
                        .map(|(w, g)| w * g)
                        .sum::<f64>()
            })
            .collect();
        Ok(Trace {
            x: x.clone(),
            a0,
            h0,
            a1,
            h1,
            pool_cache,
            p1,
            a2,
            h2,
            stride_cache,
            s_shape: s.shape(),
            pooled,
            logits,
        })
    }

    /// Logits plus the flat gradient (block order) of `Σ_k grad_logits[k] · logit_k`.
    pub fn forward_backward(&self, x: &FeatureMap, grad_fn: impl FnOnce(&[f64]) -> Vec<f64>) -> Result<(Vec<f64>, Vec<f64>)> {
        let t = self.forward_trace(x)?;
        let dlogits = grad_fn(&t.logits);
        let c = self.channels;

        let mut head_w = vec![0.0; 2 * c];
        let mut dpooled = vec![0.0; c];
        for k in 0..2 {
            for j in 0..c {
                head_w[k * c + j] = dlogits[k] * t.pooled[j];
                dpooled[j] += dlogits[k] * self.head_w[k * c + j];
            }
        }
        let head_b = dlogits.clone();
        let ds = layers::global_avg_pool_backward(t.s_shape, &dpooled);

        let mut stride_blocks = Vec::new();
        let dh2 = match (&self.stride, &t.stride_cache) {
            (StrideSite::Conv(conv), StrideCache::Conv) => {
                let g = conv.backward(&t.h2, &ds)?;
                stride_blocks.push(g.grad_weights);
                stride_blocks.push(g.grad_bias);
                g.grad_x
            }
            (StrideSite::Wavelet { conv, unit }, StrideCache::Wavelet { mid, cache }) => {
                let ug = unit.backward_cached(mid, cache, &ds)?;
                let g = conv.backward(&t.h2, &ug.grad_x)?;
                stride_blocks.extend([g.grad_weights, g.grad_bias, ug.grad_weights, ug.grad_bias, ug.grad_bank]);
                g.grad_x
            }
            _ => unreachable!("stride cache matches site"),
        };

        // h2 = p1 + relu(a2), a2 = block2(p1)
        let da2 = layers::relu_backward(&t.a2, &dh2);
        let g2 = self.block2.backward(&t.p1, &da2)?;
        let mut dp1 = dh2;
        dp1.add_assign(&g2.grad_x);

        let mut pool_blocks = Vec::new();
        let dh1 = match (&self.pool, &t.pool_cache) {
            (PoolSite::Max, PoolCache::Max(arg)) => layers::max_pool2_backward(t.h1.shape(), arg, &dp1),
            (PoolSite::Avg, PoolCache::Avg) => layers::avg_pool2_backward(t.h1.shape(), &dp1),
            (PoolSite::Wavelet(u), PoolCache::Wavelet(cache)) => {
                let ug = u.backward_cached(&t.h1, cache, &dp1)?;
                pool_blocks.extend([ug.grad_weights, ug.grad_bias, ug.grad_bank]);
                ug.grad_x
            }
            _ => unreachable!("pool cache matches site"),
        };

        // h1 = h0 + relu(a1), a1 = block1(h0)
        let da1 = layers::relu_backward(&t.a1, &dh1);
        let g1 = self.block1.backward(&t.h0, &da1)?;
        let mut dh0 = dh1;
        dh0.add_assign(&g1.grad_x);
        let da0 = layers::relu_backward(&t.a0, &dh0);
        let g0 = self.stem.backward(&t.x, &da0)?;

        let mut flat = Vec::with_capacity(self.param_count());
        for block in [g0.grad_weights, g0.grad_bias, g1.grad_weights, g1.grad_bias, g2.grad_weights, g2.grad_bias]
            .into_iter()
            .chain(pool_blocks)
            .chain(stride_blocks)
            .chain([head_w, head_b])
        {
            flat.extend(block);
        }
        Ok((t.logits, flat))
    }
}

enum PoolCache {
    Max(Vec<usize>),
    Avg,
    Wavelet(UnitCache),
}

enum StrideCache {
    Conv,
    Wavelet { mid: FeatureMap, cache: UnitCache },
}

struct Trace {
    x: FeatureMap,
    a0: FeatureMap,
    h0: FeatureMap,
    a1: FeatureMap,
    h1: FeatureMap,
    pool_cache: PoolCache,
    p1: FeatureMap,
    a2: FeatureMap,
    h2: FeatureMap,
    stride_cache: StrideCache,
    s_shape: (usize, usize, usize),
    pooled: Vec<f64>,
    logits: Vec<f64>,
}
