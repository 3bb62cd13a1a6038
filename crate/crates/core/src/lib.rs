//! Tunable wavelet filter banks and the pieces built on them: a matrix-form
//! 2D DWT, scan preprocessing, wavelet downsampling units, and a small
//! training harness that exercises the units end to end.

pub mod dwt2d;
pub mod error;
pub mod filterbank;
pub mod imageio;
pub mod layers;
pub mod preprocess;
pub mod raster;
pub mod trainer;
pub mod units;

pub use error::{Result, TwuError};
pub use raster::ImageRaster;
