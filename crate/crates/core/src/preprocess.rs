//! Scan preprocessing: adaptive energy-crop and HH-suppressed wavelet
//! denoising.

use crate::dwt2d::{decompose, reconstruct, PlanCache};
use crate::error::{invalid, Result};
use crate::filterbank::CoefficientFilterBank;
use crate::raster::ImageRaster;

/// Per-row absolute intensity sums `E_y = Σ_x |p(x, y)|`.
pub fn row_energy(img: &ImageRaster) -> Result<Vec<f64>> {
    if img.height() == 0 || img.width() == 0 {
        return Err(invalid("row energy of an empty image"));
    }
    Ok(img
        .rows()
        .map(|row| row.iter().map(|p| p.abs()).sum())
        .collect())
}

/// Outcome of [`energy_crop`].
#[derive(Debug, Clone, PartialEq)]
pub struct CropReport {
    pub first_row: usize,
    pub last_row: usize,
    pub threshold: f64,
    pub row_energies: Vec<f64>,
    /// No row exceeded the threshold; the full image was kept.
    pub degenerate: bool,
}

impl CropReport {
    pub fn kept_rows(&self) -> usize {
        self.last_row - self.first_row + 1
    }
}

/// Keeps the span of rows from the first to the last row whose energy
/// strictly exceeds `mean - a * std` (population statistics over all rows).
/// Columns are never cropped.
pub fn energy_crop(img: &ImageRaster, a: f64) -> Result<(ImageRaster, CropReport)> {
    if !a.is_finite() {
        return Err(invalid("crop parameter a must be finite"));
    }
    let energies = row_energy(img)?;
    let n = energies.len() as f64;
    let mean = energies.iter().sum::<f64>() / n;
    let var = energies.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / n;
    let threshold = mean - a * var.sqrt();

    let first = energies.iter().position(|&e| e > threshold);
    let last = energies.iter().rposition(|&e| e > threshold);
    let (first_row, last_row, degenerate) = match (first, last) {
        (Some(f), Some(l)) => (f, l, false),
        _ => (0, img.height() - 1, true),
    };
    let cropped = img.crop_rows(first_row, last_row)?;
    Ok((
        cropped,
        CropReport {
            first_row,
            last_row,
            threshold,
            row_energies: energies,
            degenerate,
        },
    ))
}

/// One-level denoise that drops the diagonal (HH) detail band.
///
/// The image is decomposed, HH is zeroed and the remaining bands are
/// synthesized back; this is the sum of the LL, LH and HL synthesis terms.
/// Odd dimensions are padded by edge replication and cropped afterwards.
pub fn wavelet_denoise(img: &ImageRaster, filters: &CoefficientFilterBank) -> Result<ImageRaster> {
    wavelet_denoise_cached(img, filters, &PlanCache::new())
}

/// [`wavelet_denoise`] reusing plans from `cache`.
pub fn wavelet_denoise_cached(
    img: &ImageRaster,
    filters: &CoefficientFilterBank,
    cache: &PlanCache,
) -> Result<ImageRaster> {
    let (padded, _) = img.pad_to_even();
    let taps = filters.tap_count();
    if padded.height() < taps || padded.width() < taps {
        return Err(invalid(format!(
            "{taps}-tap filter longer than padded image {}x{}",
            padded.height(),
            padded.width()
        )));
    }
    let vertical = cache.get_or_build(filters, padded.height())?;
    let horizontal = cache.get_or_build(filters, padded.width())?;
    let mut bands = decompose(&vertical, &horizontal, &padded)?;
    bands.hh = ImageRaster::zeros(bands.hh.height(), bands.hh.width());
    let out = reconstruct(&vertical, &horizontal, &bands)?;
    out.crop_to(img.height(), img.width())
}

/// Energy-crop followed by denoising.
pub fn preprocess(
    img: &ImageRaster,
    a: f64,
    filters: &CoefficientFilterBank,
    cache: &PlanCache,
) -> Result<(ImageRaster, CropReport)> {
    let (cropped, report) = energy_crop(img, a)?;
    let denoised = wavelet_denoise_cached(&cropped, filters, cache)?;
    Ok((denoised, report))
}
