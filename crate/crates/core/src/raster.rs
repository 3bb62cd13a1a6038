use crate::error::{invalid, shape, Result};

/// Real-valued 2D raster, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageRaster {
    height: usize,
    width: usize,
    pixels: Vec<f64>,
}

impl ImageRaster {
    pub fn new(height: usize, width: usize, pixels: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(invalid(format!("empty raster {height}x{width}")));
        }
        if pixels.len() != height * width {
            return Err(shape(format!(
                "{height}x{width} raster needs {} pixels, got {}",
                height * width,
                pixels.len()
            )));
        }
        if pixels.iter().any(|p| !p.is_finite()) {
            return Err(invalid("raster values must be finite"));
        }
        Ok(Self {
            height,
            width,
            pixels,
        })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            pixels: vec![0.0; height * width],
        }
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Self {
        Self {
            height,
            width,
            pixels: vec![value; height * width],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let height = rows.len();
        let width = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != width) {
            return Err(shape("ragged rows"));
        }
        Self::new(height, width, rows.concat())
    }

    pub fn from_fn(height: usize, width: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut pixels = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(y, x));
            }
        }
        Self {
            height,
            width,
            pixels,
        }
    }

    // Internal constructor for results whose shape is already guaranteed.
    pub(crate) fn from_parts(height: usize, width: usize, pixels: Vec<f64>) -> Self {
        debug_assert_eq!(pixels.len(), height * width);
        Self {
            height,
            width,
            pixels,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<f64> {
        self.pixels
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> f64 {
        self.pixels[y * self.width + x]
    }

    pub fn row(&self, y: usize) -> &[f64] {
        &self.pixels[y * self.width..(y + 1) * self.width]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.pixels.chunks_exact(self.width)
    }

    /// Keeps rows `first..=last`.
    pub fn crop_rows(&self, first: usize, last: usize) -> Result<Self> {
        if first > last || last >= self.height {
            return Err(invalid(format!(
                "row range {first}..={last} outside height {}",
                self.height
            )));
        }
        Ok(Self::from_parts(
            last - first + 1,
            self.width,
            self.pixels[first * self.width..(last + 1) * self.width].to_vec(),
        ))
    }

    /// Top-left `height x width` window.
    pub fn crop_to(&self, height: usize, width: usize) -> Result<Self> {
        if height > self.height || width > self.width || height == 0 || width == 0 {
            return Err(invalid(format!(
                "cannot crop {}x{} to {height}x{width}",
                self.height, self.width
            )));
        }
        Ok(Self::from_fn(height, width, |y, x| self.get(y, x)))
    }

    /// Pads by replicating the last row/column so both sides are even.
    /// Returns the padded raster and the `(rows, cols)` added.
    pub fn pad_to_even(&self) -> (Self, (usize, usize)) {
        let pad_r = self.height % 2;
        let pad_c = self.width % 2;
        if pad_r == 0 && pad_c == 0 {
            return (self.clone(), (0, 0));
        }
        let (h, w) = (self.height + pad_r, self.width + pad_c);
        let padded = Self::from_fn(h, w, |y, x| {
            self.get(y.min(self.height - 1), x.min(self.width - 1))
        });
        (padded, (pad_r, pad_c))
    }

    pub fn energy(&self) -> f64 {
        self.pixels.iter().map(|v| v * v).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.pixels.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!(
            (self.height, self.width),
            (other.height, other.width),
            "raster shapes differ"
        );
        self.pixels
            .iter()
            .zip(&other.pixels)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }
}
