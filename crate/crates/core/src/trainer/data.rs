//! Synthetic two-class texture task and stratified split protocol.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{invalid, Result};
use crate::units::FeatureMap;

/// Knobs of the synthetic generator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticSpec {
    pub side: usize,
    /// Standard deviation of white noise added to every image.
    pub noise_std: f64,
    /// Peak amplitude of the class-1 texture.
    pub texture_amplitude: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            side: 32,
            noise_std: 0.3,
            texture_amplitude: 0.15,
        }
    }
}

/// Balanced set of single-channel images with 0/1 labels.
///
/// Class 0 is a sum of smooth Gaussian blobs. Class 1 uses the same blob
/// field plus a high-frequency oriented grating. Images are generated in
/// pairs so both classes share the same low-frequency content.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    pub images: Vec<FeatureMap>,
    pub labels: Vec<usize>,
    pub seed: u64,
}

impl SyntheticDataset {
    pub fn generate(count: usize, seed: u64) -> Result<Self> {
        Self::generate_with(count, seed, SyntheticSpec::default())
    }

    pub fn generate_with(count: usize, seed: u64, spec: SyntheticSpec) -> Result<Self> {
        if count == 0 || count % 2 != 0 {
            return Err(invalid(format!(
                "synthetic dataset size must be positive and even, got {count}"
            )));
        }
        if spec.side < 4 || spec.side % 2 != 0 {
            return Err(invalid("image side must be even and at least 4"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, spec.noise_std.max(0.0)).map_err(|e| invalid(e.to_string()))?;
        let side = spec.side;
        let mut images = Vec::with_capacity(count);
        let mut labels = Vec::with_capacity(count);
        for _ in 0..count / 2 {
            let blobs = blob_field(&mut rng, side);
            let texture = grating(&mut rng, side, spec.texture_amplitude);
            for label in 0..2 {
                let values = blobs
                    .iter()
                    .zip(&texture)
                    .map(|(&b, &t)| b + if label == 1 { t } else { 0.0 } + noise.sample(&mut rng))
                    .collect();
                images.push(FeatureMap::from_parts(1, side, side, values));
                labels.push(label);
            }
        }
        Ok(Self {
            images,
            labels,
            seed,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn class_counts(&self) -> [usize; 2] {
        let ones = self.labels.iter().filter(|&&l| l == 1).count();
        [self.len() - ones, ones]
    }
}

fn blob_field(rng: &mut ChaCha8Rng, side: usize) -> Vec<f64> {
    let n_blobs = rng.random_range(2..=4);
    let blobs: Vec<(f64, f64, f64, f64)> = (0..n_blobs)
        .map(|_| {
            let cy = rng.random_range(0.0..side as f64);
            let cx = rng.random_range(0.0..side as f64);
            let sigma = rng.random_range(3.0..7.0);
            let amp = rng.random_range(0.5..1.5);
            (cy, cx, sigma, amp)
        })
        .collect();
    let mut field = vec![0.0; side * side];
    for y in 0..side {
        for x in 0..side {
            field[y * side + x] = blobs
                .iter()
                .map(|&(cy, cx, s, a)| {
                    let d2 = (y as f64 - cy).powi(2) + (x as f64 - cx).powi(2);
                    a * (-d2 / (2.0 * s * s)).exp()
                })
                .sum();
        }
    }
    field
}

// Grating with a random near-Nyquist frequency, orientation and phase.
fn grating(rng: &mut ChaCha8Rng, side: usize, amplitude: f64) -> Vec<f64> {
    use std::f64::consts::PI;
    let freq = rng.random_range(0.35..0.5); // cycles per pixel
    let angle = rng.random_range(0.0..PI);
    let phase = rng.random_range(0.0..2.0 * PI);
    let (fy, fx) = (freq * angle.sin(), freq * angle.cos());
    let mut out = vec![0.0; side * side];
    for y in 0..side {
        for x in 0..side {
            out[y * side + x] = amplitude * (2.0 * PI * (fy * y as f64 + fx * x as f64) + phase).cos();
        }
    }
    out
}

/// One fold of the split protocol.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldSplit {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
}

/// Independent reshuffles of a class-balanced set, each split 80/20 with
/// both halves kept 50/50 by class.
pub fn kfold_splits(labels: &[usize], folds: usize, seed: u64) -> Result<Vec<FoldSplit>> {
    if folds == 0 {
        return Err(invalid("need at least one fold"));
    }
    let mut by_class: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
    for (i, &l) in labels.iter().enumerate() {
        match l {
            0 | 1 => by_class[l].push(i),
            other => return Err(invalid(format!("label {other} is not binary"))),
        }
    }
    if by_class[0].len() != by_class[1].len() || by_class[0].is_empty() {
        return Err(invalid(format!(
            "split protocol needs a balanced set, got {}/{}",
            by_class[0].len(),
            by_class[1].len()
        )));
    }
    let per_class = by_class[0].len();
    let val_per_class = (per_class as f64 * 0.2).round() as usize;
    if val_per_class == 0 || val_per_class == per_class {
        return Err(invalid(format!(
            "{per_class} samples per class are too few for an 80/20 split"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(folds);
    for _ in 0..folds {
        let mut train = Vec::new();
        let mut val = Vec::new();
        for class in &by_class {
            let mut idx = class.clone();
            idx.shuffle(&mut rng);
            val.extend_from_slice(&idx[..val_per_class]);
            train.extend_from_slice(&idx[val_per_class..]);
        }
        train.shuffle(&mut rng);
        val.shuffle(&mut rng);
        out.push(FoldSplit { train, val });
    }
    Ok(out)
}
