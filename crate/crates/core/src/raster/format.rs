//! `<name>.json` header plus `<name>.bin` little-endian BSQ data.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{BandName, Raster};
use crate::error::{Error, Result};
use crate::spatial::SegmentationMap;

/// JSON header shared by band stacks, label rasters, and segmentations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub width: usize,
    pub height: usize,
    pub dtype: String,
    pub byte_order: String,
    pub interleave: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub bands: Vec<BandName>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classes: Option<BTreeMap<u8, String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nodata: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub segments: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub revision: Option<u64>,
    /// Data file name, relative to the header's directory.
    pub data: String,
}

impl Header {
    pub(crate) fn new(width: usize, height: usize, dtype: &str, data: String) -> Self {
        Header {
            width,
            height,
            dtype: dtype.to_string(),
            byte_order: "LE".to_string(),
            interleave: "BSQ".to_string(),
            bands: Vec::new(),
            classes: None,
            nodata: None,
            segments: None,
            revision: None,
            data,
        }
    }

    fn check_layout(&self, path: &Path, dtype: &str) -> Result<()> {
        let bad = |message: String| Error::Header {
            path: path.to_path_buf(),
            message,
        };
        if self.dtype != dtype {
            return Err(bad(format!(
                "dtype {} where {dtype} was expected",
                self.dtype
            )));
        }
        if self.byte_order != "LE" {
            return Err(bad(format!("unsupported byte order {}", self.byte_order)));
        }
        if self.interleave != "BSQ" {
            return Err(bad(format!("unsupported interleave {}", self.interleave)));
        }
        Ok(())
    }
}

/// `foo`, `foo.json` and `foo.bin` all name the header `foo.json`.
pub(crate) fn header_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

pub(crate) fn data_file_name(header: &Path) -> String {
    let stem = header
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "data".to_string());
    format!("{stem}.bin")
}

pub(crate) fn read_header(path: &Path, dtype: &str) -> Result<(Header, Vec<u8>)> {
    let hp = header_path(path);
    let text = fs::read_to_string(&hp).map_err(|e| Error::io(&hp, e))?;
    let header: Header = serde_json::from_str(&text).map_err(|e| Error::Header {
        path: hp.clone(),
        message: e.to_string(),
    })?;
    header.check_layout(&hp, dtype)?;
    let dp = hp.parent().unwrap_or(Path::new(".")).join(&header.data);
    let bytes = fs::read(&dp).map_err(|e| Error::io(&dp, e))?;
    Ok((header, bytes))
}

pub(crate) fn write_pair(path: &Path, header: &Header, bytes: &[u8]) -> Result<()> {
    let hp = header_path(path);
    let dp = hp.parent().unwrap_or(Path::new(".")).join(&header.data);
    fs::write(&dp, bytes).map_err(|e| Error::io(&dp, e))?;
    let json = serde_json::to_string_pretty(header)?;
    fs::write(&hp, json).map_err(|e| Error::io(&hp, e))?;
    Ok(())
}

/// Reads a float32 band stack.
pub fn read_raster(path: impl AsRef<Path>) -> Result<Raster> {
    let (header, bytes) = read_header(path.as_ref(), "float32")?;
    let expected = header.width * header.height * header.bands.len() * 4;
    if bytes.len() != expected {
        return Err(Error::SizeMismatch {
            expected,
            found: bytes.len(),
        });
    }
    let data = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    let raster = Raster::new(header.width, header.height, header.bands, data)?;
    raster.validate()?;
    Ok(raster)
}

/// Writes a float32 band stack; refuses empty or non-finite rasters.
pub fn write_raster(raster: &Raster, path: impl AsRef<Path>) -> Result<()> {
    raster.validate()?;
    let hp = header_path(path.as_ref());
    let mut header = Header::new(
        raster.width(),
        raster.height(),
        "float32",
        data_file_name(&hp),
    );
    header.bands = raster.bands().to_vec();
    let bytes: Vec<u8> = raster.data().iter().flat_map(|v| v.to_le_bytes()).collect();
    write_pair(&hp, &header, &bytes)
}

/// Writes superpixel ids as a uint16 raster.
pub fn write_segmentation(seg: &SegmentationMap, path: impl AsRef<Path>) -> Result<()> {
    if seg.count > u16::MAX as usize + 1 {
        return Err(Error::InvalidParameter(format!(
            "{} superpixels do not fit in uint16",
            seg.count
        )));
    }
    let hp = header_path(path.as_ref());
    let mut header = Header::new(seg.width, seg.height, "uint16", data_file_name(&hp));
    header.segments = Some(seg.count);
    let bytes: Vec<u8> = seg
        .ids
        .iter()
        .flat_map(|&v| (v as u16).to_le_bytes())
        .collect();
    write_pair(&hp, &header, &bytes)
}

pub fn read_segmentation(path: impl AsRef<Path>) -> Result<SegmentationMap> {
    let (header, bytes) = read_header(path.as_ref(), "uint16")?;
    let expected = header.width * header.height * 2;
    if bytes.len() != expected {
        return Err(Error::SizeMismatch {
            expected,
            found: bytes.len(),
        });
    }
    let ids: Vec<u32> = bytes
        .chunks_exact(2)
        .map(|c| u16::from_le_bytes([c[0], c[1]]) as u32)
        .collect();
    let count = header
        .segments
        .unwrap_or_else(|| ids.iter().max().map_or(0, |&m| m as usize + 1));
    Ok(SegmentationMap {
        width: header.width,
        height: header.height,
        ids,
        count,
    })
}
