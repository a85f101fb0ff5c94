//! 8-bit PNG composites.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use super::{BandName, Raster};
use crate::error::{Error, Result};

/// Percentile `p` (0–100) of `sorted` with linear interpolation between ranks.
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty());
    let pos = (p / 100.0).clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// Linear 2nd–98th percentile stretch to 0–255; a zero-width range maps to 128.
pub fn stretch_band(values: &[f32]) -> Vec<u8> {
    if values.is_empty() {
        return Vec::new();
    }
    let mut sorted: Vec<f64> = values.iter().map(|&v| v as f64).collect();
    sorted.sort_by(f64::total_cmp);
    let lo = percentile(&sorted, 2.0);
    let hi = percentile(&sorted, 98.0);
    if hi - lo <= 0.0 {
        return vec![128; values.len()];
    }
    values
        .iter()
        .map(|&v| {
            (((v as f64 - lo) / (hi - lo)) * 255.0)
                .round()
                .clamp(0.0, 255.0) as u8
        })
        .collect()
}

/// Writes an 8-bit RGB PNG from interleaved `rgb` bytes.
pub fn write_png_rgb(
    path: impl AsRef<Path>,
    width: usize,
    height: usize,
    rgb: &[u8],
) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    encode_png_rgb(BufWriter::new(file), width, height, rgb)
}

pub(crate) fn encode_png_rgb<W: std::io::Write>(
    w: W,
    width: usize,
    height: usize,
    rgb: &[u8],
) -> Result<()> {
    if rgb.len() != width * height * 3 {
        return Err(Error::DimensionMismatch(format!(
            "{} bytes for a {width}x{height} RGB image",
            rgb.len()
        )));
    }
    let mut encoder = png::Encoder::new(w, width as u32, height as u32);
    encoder.set_color(png::ColorType::Rgb);
    encoder.set_depth(png::BitDepth::Eight);
    let mut writer = encoder.write_header()?;
    writer.write_image_data(rgb)?;
    writer.finish()?;
    Ok(())
}

/// Interleaved RGB bytes of a three-band stretched composite.
pub(crate) fn composite_rgb(
    r: &Raster,
    red: &BandName,
    green: &BandName,
    blue: &BandName,
) -> Result<Vec<u8>> {
    let channels = [
        stretch_band(r.band(red)?),
        stretch_band(r.band(green)?),
        stretch_band(r.band(blue)?),
    ];
    let mut rgb = Vec::with_capacity(r.pixel_count() * 3);
    for p in 0..r.pixel_count() {
        rgb.extend(channels.iter().map(|c| c[p]));
    }
    Ok(rgb)
}

/// Renders three bands of `r` as a percentile-stretched RGB PNG.
///
/// `(Red, Green, Blue)` gives a true-colour view; `(SWIR1, Green, Blue)` the
/// SWGB view in which water stands out against sediment and vegetation.
pub fn export_png(
    r: &Raster,
    red: &BandName,
    green: &BandName,
    blue: &BandName,
    path: impl AsRef<Path>,
) -> Result<()> {
    let rgb = composite_rgb(r, red, green, blue)?;
    write_png_rgb(path, r.width(), r.height(), &rgb)
}

/// PNG bytes of a composite, for serving over HTTP.
pub fn composite_png_bytes(
    r: &Raster,
    red: &BandName,
    green: &BandName,
    blue: &BandName,
) -> Result<Vec<u8>> {
    let rgb = composite_rgb(r, red, green, blue)?;
    let mut out = Vec::new();
    encode_png_rgb(&mut out, r.width(), r.height(), &rgb)?;
    Ok(out)
}
