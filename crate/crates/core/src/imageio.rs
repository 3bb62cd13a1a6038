//! Scan file formats: binary PGM (P5) and raw little-endian `f32` with a
//! `<file>.dims` sidecar holding `height width`.

use std::fs;
use std::path::{Path, PathBuf};

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{DynamicImage, ExtendedColorType, ImageEncoder, ImageFormat};

use crate::error::{invalid, Result};
use crate::raster::ImageRaster;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScanFormat {
    Pgm { sixteen_bit: bool },
    RawF32,
}

/// A decoded scan and the format it came from.
#[derive(Debug, Clone)]
pub struct Scan {
    pub raster: ImageRaster,
    pub format: ScanFormat,
}

pub fn is_scan_path(path: &Path) -> bool {
    matches!(
        path.extension().and_then(|e| e.to_str()),
        Some("pgm" | "f32")
    ) && !path
        .file_stem()
        .and_then(|s| s.to_str())
        .is_some_and(|s| s.ends_with(".prep"))
}

fn sidecar(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".dims");
    PathBuf::from(name)
}

pub fn read_scan(path: &Path) -> Result<Scan> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("pgm") => read_pgm(path),
        Some("f32") => read_raw_f32(path),
        _ => Err(invalid(format!(
            "{}: expected a .pgm or .f32 file",
            path.display()
        ))),
    }
}

fn read_pgm(path: &Path) -> Result<Scan> {
    let bytes = fs::read(path)?;
    let img = image::load_from_memory_with_format(&bytes, ImageFormat::Pnm)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let (pixels, sixteen_bit): (Vec<f64>, bool) = match img {
        DynamicImage::ImageLuma8(buf) => (buf.into_raw().into_iter().map(f64::from).collect(), false),
        DynamicImage::ImageLuma16(buf) => (buf.into_raw().into_iter().map(f64::from).collect(), true),
        other => {
            return Err(invalid(format!(
                "{}: expected a grayscale PGM, got {:?}",
                path.display(),
                other.color()
            )))
        }
    };
    Ok(Scan {
        raster: ImageRaster::new(h, w, pixels)?,
        format: ScanFormat::Pgm { sixteen_bit },
    })
}

fn read_raw_f32(path: &Path) -> Result<Scan> {
    let dims = fs::read_to_string(sidecar(path))?;
    let parsed: Vec<usize> = dims
        .split_whitespace()
        .map(|t| t.parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| invalid(format!("bad dims sidecar: {e}")))?;
    let [h, w] = parsed[..] else {
        return Err(invalid("dims sidecar must hold 'height width'"));
    };
    let bytes = fs::read(path)?;
    if bytes.len() != h * w * 4 {
        return Err(invalid(format!(
            "{}: {} bytes but dims {h}x{w} need {}",
            path.display(),
            bytes.len(),
            h * w * 4
        )));
    }
    let pixels = bytes
        .chunks_exact(4)
        .map(|c| f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]])))
        .collect();
    Ok(Scan {
        raster: ImageRaster::new(h, w, pixels)?,
        format: ScanFormat::RawF32,
    })
}

/// Writes a raster; PGM output is rounded and clamped to the sample range.
pub fn write_scan(path: &Path, raster: &ImageRaster, format: ScanFormat) -> Result<()> {
    let (w, h) = (raster.width() as u32, raster.height() as u32);
    match format {
        ScanFormat::RawF32 => {
            let bytes: Vec<u8> = raster
                .pixels()
                .iter()
                .flat_map(|&p| (p as f32).to_le_bytes())
                .collect();
            fs::write(path, bytes)?;
            fs::write(sidecar(path), format!("{} {}\n", raster.height(), raster.width()))?;
        }
        ScanFormat::Pgm { sixteen_bit } => {
            if sixteen_bit {
                // PGM samples above 255 are two bytes, most significant first
                let mut data = format!("P5\n{w} {h}\n65535\n").into_bytes();
                data.extend(
                    raster
                        .pixels()
                        .iter()
                        .flat_map(|&p| (p.round().clamp(0.0, 65535.0) as u16).to_be_bytes()),
                );
                fs::write(path, data)?;
            } else {
                let file = fs::File::create(path)?;
                let encoder = PnmEncoder::new(std::io::BufWriter::new(file))
                    .with_subtype(PnmSubtype::Graymap(SampleEncoding::Binary));
                let data: Vec<u8> = raster
                    .pixels()
                    .iter()
                    .map(|&p| p.round().clamp(0.0, 255.0) as u8)
                    .collect();
                encoder.write_image(&data, w, h, ExtendedColorType::L8)?;
            }
        }
    }
    Ok(())
}

/// `scan.pgm` -> `scan.prep.pgm`, beside the input.
pub fn prep_output_path(input: &Path) -> PathBuf {
    let stem = input.file_stem().and_then(|s| s.to_str()).unwrap_or("scan");
    let ext = input.extension().and_then(|s| s.to_str()).unwrap_or("f32");
    input.with_file_name(format!("{stem}.prep.{ext}"))
}
