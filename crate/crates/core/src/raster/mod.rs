//! Raster containers, label rasters, and the on-disk band-stack format.
//!
//! A [`Raster`] stores `f32` samples band-sequentially (BSQ): all pixels of
//! the first band, then all pixels of the second, and so on. Pixels are in
//! row-major order inside each band.

pub(crate) mod format;
pub(crate) mod labels;
pub(crate) mod render;

pub use format::{read_raster, read_segmentation, write_raster, write_segmentation, Header};
pub use labels::{
    read_labels, read_labels_with_revision, write_labels, write_labels_as, ChangeClass, LabelKind,
    LabelRaster, PondState, NODATA,
};
pub use render::{composite_png_bytes, export_png, percentile, stretch_band, write_png_rgb};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Name of a spectral or derived band.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BandName {
    Red,
    Green,
    Blue,
    Nir,
    Swir1,
    Swir2,
    /// CIELAB lightness.
    L,
    /// CIELAB green-red opponent axis.
    A,
    /// CIELAB blue-yellow opponent axis.
    B,
    /// Any other band, e.g. a date-suffixed stack band such as `Red_t1`.
    Tagged(String),
}

impl BandName {
    /// The six reflectance bands in canonical order.
    pub const SIX: [BandName; 6] = [
        BandName::Red,
        BandName::Green,
        BandName::Blue,
        BandName::Nir,
        BandName::Swir1,
        BandName::Swir2,
    ];
    pub const RGB: [BandName; 3] = [BandName::Red, BandName::Green, BandName::Blue];
    pub const LAB: [BandName; 3] = [BandName::L, BandName::A, BandName::B];

    pub fn as_str(&self) -> &str {
        match self {
            BandName::Red => "Red",
            BandName::Green => "Green",
            BandName::Blue => "Blue",
            BandName::Nir => "NIR",
            BandName::Swir1 => "SWIR1",
            BandName::Swir2 => "SWIR2",
            BandName::L => "L",
            BandName::A => "a",
            BandName::B => "b",
            BandName::Tagged(s) => s,
        }
    }

    /// Appends `_suffix` to the name, producing a tagged band.
    pub fn suffixed(&self, suffix: &str) -> BandName {
        BandName::Tagged(format!("{}_{}", self.as_str(), suffix))
    }

    /// Splits a suffixed stack band back into its base band and suffix.
    pub fn split_suffix(&self) -> Option<(BandName, &str)> {
        let BandName::Tagged(s) = self else {
            return None;
        };
        let (base, suffix) = s.rsplit_once('_')?;
        Some((base.parse().ok()?, suffix))
    }
}

impl fmt::Display for BandName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BandName {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(match s {
            "Red" => BandName::Red,
            "Green" => BandName::Green,
            "Blue" => BandName::Blue,
            "NIR" => BandName::Nir,
            "SWIR1" => BandName::Swir1,
            "SWIR2" => BandName::Swir2,
            "L" => BandName::L,
            "a" => BandName::A,
            "b" => BandName::B,
            other => BandName::Tagged(other.to_string()),
        })
    }
}

impl Serialize for BandName {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for BandName {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Ok(s.parse().unwrap_or_else(|never| match never {}))
    }
}

/// A width × height × bands image of `f32` samples in band-sequential order.
#[derive(Clone, Debug, PartialEq)]
pub struct Raster {
    width: usize,
    height: usize,
    bands: Vec<BandName>,
    data: Vec<f32>,
}

impl Raster {
    /// Builds a raster, checking the data length and band-name uniqueness.
    ///
    /// Finiteness is checked separately by [`Raster::validate`] so that
    /// callers can construct and then reject bad data explicitly.
    pub fn new(width: usize, height: usize, bands: Vec<BandName>, data: Vec<f32>) -> Result<Self> {
        let expected = width * height * bands.len();
        if data.len() != expected {
            return Err(Error::SizeMismatch {
                expected: expected * 4,
                found: data.len() * 4,
            });
        }
        for (i, b) in bands.iter().enumerate() {
            if bands[..i].contains(b) {
                return Err(Error::DuplicateBand(b.to_string()));
            }
        }
        Ok(Raster {
            width,
            height,
            bands,
            data,
        })
    }

    /// Builds a raster from named per-band pixel vectors.
    pub fn from_bands(
        width: usize,
        height: usize,
        bands: Vec<(BandName, Vec<f32>)>,
    ) -> Result<Self> {
        let n = width * height;
        let mut names = Vec::with_capacity(bands.len());
        let mut data = Vec::with_capacity(n * bands.len());
        for (name, values) in bands {
            if values.len() != n {
                return Err(Error::DimensionMismatch(format!(
                    "band {name} has {} pixels, expected {n}",
                    values.len()
                )));
            }
            names.push(name);
            data.extend_from_slice(&values);
        }
        Raster::new(width, height, names, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn bands(&self) -> &[BandName] {
        &self.bands
    }

    pub fn band_count(&self) -> usize {
        self.bands.len()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn band_index(&self, name: &BandName) -> Option<usize> {
        self.bands.iter().position(|b| b == name)
    }

    pub fn has_band(&self, name: &BandName) -> bool {
        self.band_index(name).is_some()
    }

    /// Pixel values of band number `i`.
    pub fn band_at(&self, i: usize) -> &[f32] {
        let n = self.pixel_count();
        &self.data[i * n..(i + 1) * n]
    }

    pub fn band_at_mut(&mut self, i: usize) -> &mut [f32] {
        let n = self.pixel_count();
        &mut self.data[i * n..(i + 1) * n]
    }

    /// Pixel values of the named band.
    pub fn band(&self, name: &BandName) -> Result<&[f32]> {
        self.band_index(name)
            .map(|i| self.band_at(i))
            .ok_or_else(|| Error::MissingBand(name.to_string()))
    }

    /// Copies the spectrum of pixel `p` into `out` (one value per band).
    pub fn pixel_into(&self, p: usize, out: &mut [f64]) {
        let n = self.pixel_count();
        for (b, o) in out.iter_mut().enumerate() {
            *o = self.data[b * n + p] as f64;
        }
    }

    /// All pixels as feature rows of length `band_count`.
    pub fn pixel_rows(&self) -> Vec<Vec<f64>> {
        (0..self.pixel_count())
            .map(|p| {
                let mut row = vec![0.0; self.band_count()];
                self.pixel_into(p, &mut row);
                row
            })
            .collect()
    }

    /// Checks the ingest invariants: non-empty and all samples finite.
    pub fn validate(&self) -> Result<()> {
        if self.pixel_count() == 0 || self.bands.is_empty() {
            return Err(Error::EmptyRaster);
        }
        let n = self.pixel_count();
        if let Some(i) = self.data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                band: self.bands[i / n].to_string(),
                pixel: i % n,
            });
        }
        Ok(())
    }

    /// A new raster with the bands of `self` followed by those of `other`.
    pub fn concat(&self, other: &Raster) -> Result<Raster> {
        if self.width != other.width || self.height != other.height {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} vs {}x{}",
                self.width, self.height, other.width, other.height
            )));
        }
        let mut bands = self.bands.clone();
        bands.extend(other.bands.iter().cloned());
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        Raster::new(self.width, self.height, bands, data)
    }

    /// Same samples under new band names.
    pub fn renamed(&self, bands: Vec<BandName>) -> Result<Raster> {
        Raster::new(self.width, self.height, bands, self.data.clone())
    }
}

/// Two co-registered rasters of one region at two dates.
#[derive(Clone, Debug, PartialEq)]
pub struct BiTemporalPair {
    pub t1: Raster,
    pub t2: Raster,
    pub t1_date: String,
    pub t2_date: String,
}

impl BiTemporalPair {
    pub fn new(
        t1: Raster,
        t2: Raster,
        t1_date: impl Into<String>,
        t2_date: impl Into<String>,
    ) -> Result<Self> {
        let pair = BiTemporalPair {
            t1,
            t2,
            t1_date: t1_date.into(),
            t2_date: t2_date.into(),
        };
        pair.check()?;
        Ok(pair)
    }

    /// Both dates must share width, height, and band list.
    pub fn check(&self) -> Result<()> {
        if self.t1.width() != self.t2.width() || self.t1.height() != self.t2.height() {
            return Err(Error::DimensionMismatch(format!(
                "t1 is {}x{}, t2 is {}x{}",
                self.t1.width(),
                self.t1.height(),
                self.t2.width(),
                self.t2.height()
            )));
        }
        if self.t1.bands() != self.t2.bands() {
            return Err(Error::DimensionMismatch(
                "t1 and t2 band lists differ".into(),
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn band_names_round_trip_through_strings() {
        for b in BandName::SIX.iter().chain(BandName::LAB.iter()) {
            assert_eq!(&b.as_str().parse::<BandName>().unwrap(), b);
        }
        let t = BandName::Swir1.suffixed("t2");
        assert_eq!(t.as_str(), "SWIR1_t2");
        assert_eq!(t.split_suffix(), Some((BandName::Swir1, "t2")));
    }

    #[test]
    fn rejects_duplicate_bands_and_bad_length() {
        let e = Raster::new(1, 1, vec![BandName::Red, BandName::Red], vec![0.0, 0.0]).unwrap_err();
        assert!(matches!(e, Error::DuplicateBand(_)));
        let e = Raster::new(2, 2, vec![BandName::Red], vec![0.0; 3]).unwrap_err();
        assert!(matches!(e, Error::SizeMismatch { .. }));
    }

    #[test]
    fn validate_flags_non_finite() {
        let mut r = Raster::new(2, 1, vec![BandName::Green], vec![0.1, 0.2]).unwrap();
        r.band_at_mut(0)[1] = f32::NAN;
        assert!(matches!(
            r.validate(),
            Err(Error::NonFinite { pixel: 1, .. })
        ));
    }

    #[test]
    fn pair_requires_matching_shape() {
        let a = Raster::new(2, 2, vec![BandName::Red], vec![0.0; 4]).unwrap();
        let b = Raster::new(2, 1, vec![BandName::Red], vec![0.0; 2]).unwrap();
        assert!(BiTemporalPair::new(a, b, "2019-08-18", "2021-07-23").is_err());
    }
}
