use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::format::{data_file_name, header_path, read_header, write_pair, Header};
use crate::error::{Error, Result};

/// Class code marking unlabeled pixels.
pub const NODATA: u8 = 255;

/// Per-pixel pond state at one date.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[repr(u8)]
pub enum PondState {
    NoWater = 0,
    Inactive = 1,
    Transition = 2,
    Active = 3,
}

impl PondState {
    pub const ALL: [PondState; 4] = [
        PondState::NoWater,
        PondState::Inactive,
        PondState::Transition,
        PondState::Active,
    ];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Self> {
        PondState::ALL.get(code as usize).copied()
    }

    pub fn is_water(self) -> bool {
        self != PondState::NoWater
    }

    /// Mining-intensity order among water states: Inactive < Transition < Active.
    pub fn rank(self) -> Option<u8> {
        match self {
            PondState::NoWater => None,
            PondState::Inactive => Some(0),
            PondState::Transition => Some(1),
            PondState::Active => Some(2),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            PondState::NoWater => "NoWater",
            PondState::Inactive => "Inactive",
            PondState::Transition => "Transition",
            PondState::Active => "Active",
        }
    }
}

/// Change category between two dates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[repr(u8)]
pub enum ChangeClass {
    NoChange = 0,
    Decrease = 1,
    Increase = 2,
    WaterExistAbsence = 3,
}

impl ChangeClass {
    pub const ALL: [ChangeClass; 4] = [
        ChangeClass::NoChange,
        ChangeClass::Decrease,
        ChangeClass::Increase,
        ChangeClass::WaterExistAbsence,
    ];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Self> {
        ChangeClass::ALL.get(code as usize).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            ChangeClass::NoChange => "NoChange",
            ChangeClass::Decrease => "Decrease",
            ChangeClass::Increase => "Increase",
            ChangeClass::WaterExistAbsence => "WaterExistAbsence",
        }
    }
}

/// The class set a label raster draws from.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum LabelKind {
    State,
    Change,
    /// Any other class list, codes `0..names.len()`.
    Custom(Vec<String>),
}

impl LabelKind {
    pub fn class_names(&self) -> Vec<String> {
        match self {
            LabelKind::State => PondState::ALL
                .iter()
                .map(|s| s.name().to_string())
                .collect(),
            LabelKind::Change => ChangeClass::ALL
                .iter()
                .map(|c| c.name().to_string())
                .collect(),
            LabelKind::Custom(names) => names.clone(),
        }
    }

    pub fn class_count(&self) -> usize {
        match self {
            LabelKind::State | LabelKind::Change => 4,
            LabelKind::Custom(names) => names.len(),
        }
    }

    fn class_map(&self) -> BTreeMap<u8, String> {
        self.class_names()
            .into_iter()
            .enumerate()
            .map(|(i, n)| (i as u8, n))
            .collect()
    }

    fn from_class_map(map: &BTreeMap<u8, String>) -> Result<Self> {
        let names: Vec<String> = map.values().cloned().collect();
        let contiguous = map.keys().enumerate().all(|(i, &k)| i == k as usize);
        if !contiguous || names.is_empty() || names.len() > NODATA as usize {
            return Err(Error::InvalidParameter(
                "class codes must be contiguous from 0 and fewer than 255".into(),
            ));
        }
        Ok(if names == LabelKind::State.class_names() {
            LabelKind::State
        } else if names == LabelKind::Change.class_names() {
            LabelKind::Change
        } else {
            LabelKind::Custom(names)
        })
    }
}

/// A per-pixel class map with nodata code 255.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelRaster {
    pub width: usize,
    pub height: usize,
    pub kind: LabelKind,
    pub values: Vec<u8>,
}

impl LabelRaster {
    pub fn new(width: usize, height: usize, kind: LabelKind, values: Vec<u8>) -> Result<Self> {
        if values.len() != width * height {
            return Err(Error::SizeMismatch {
                expected: width * height,
                found: values.len(),
            });
        }
        let l = LabelRaster {
            width,
            height,
            kind,
            values,
        };
        l.validate()?;
        Ok(l)
    }

    pub fn filled(width: usize, height: usize, kind: LabelKind, value: u8) -> Self {
        LabelRaster {
            width,
            height,
            kind,
            values: vec![value; width * height],
        }
    }

    pub fn from_states(width: usize, height: usize, states: &[PondState]) -> Result<Self> {
        LabelRaster::new(
            width,
            height,
            LabelKind::State,
            states.iter().map(|s| s.code()).collect(),
        )
    }

    pub fn from_changes(width: usize, height: usize, changes: &[ChangeClass]) -> Result<Self> {
        LabelRaster::new(
            width,
            height,
            LabelKind::Change,
            changes.iter().map(|c| c.code()).collect(),
        )
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn class_count(&self) -> usize {
        self.kind.class_count()
    }

    /// Every non-nodata value must be a declared class code.
    pub fn validate(&self) -> Result<()> {
        let k = self.class_count();
        match self
            .values
            .iter()
            .position(|&v| v != NODATA && v as usize >= k)
        {
            Some(pixel) => Err(Error::UnknownClassCode {
                code: self.values[pixel],
                pixel,
            }),
            None => Ok(()),
        }
    }

    /// Pond state at pixel `p`, `None` for nodata or non-state rasters.
    pub fn state(&self, p: usize) -> Option<PondState> {
        match self.kind {
            LabelKind::State => PondState::from_code(self.values[p]),
            _ => None,
        }
    }

    pub fn same_shape(&self, other: &LabelRaster) -> Result<()> {
        if self.width != other.width || self.height != other.height {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} vs {}x{}",
                self.width, self.height, other.width, other.height
            )));
        }
        Ok(())
    }

    pub(crate) fn header(&self, data: String) -> Header {
        let mut h = Header::new(self.width, self.height, "uint8", data);
        h.classes = Some(self.kind.class_map());
        h.nodata = Some(NODATA as u32);
        h
    }

    pub(crate) fn from_header(header: &Header, bytes: Vec<u8>, path: &Path) -> Result<Self> {
        if bytes.len() != header.width * header.height {
            return Err(Error::SizeMismatch {
                expected: header.width * header.height,
                found: bytes.len(),
            });
        }
        if header.nodata.is_some_and(|n| n != NODATA as u32) {
            return Err(Error::Header {
                path: path.to_path_buf(),
                message: "label nodata must be 255".into(),
            });
        }
        let classes = header.classes.as_ref().ok_or_else(|| Error::Header {
            path: path.to_path_buf(),
            message: "label header lacks a class map".into(),
        })?;
        let kind = LabelKind::from_class_map(classes)?;
        LabelRaster::new(header.width, header.height, kind, bytes)
    }
}

/// Reads a label raster, validating every code against its class map.
pub fn read_labels(path: impl AsRef<Path>) -> Result<LabelRaster> {
    let (header, bytes) = read_header(path.as_ref(), "uint8")?;
    LabelRaster::from_header(&header, bytes, path.as_ref())
}

/// Reads a label raster together with the revision stored in its header.
pub fn read_labels_with_revision(path: impl AsRef<Path>) -> Result<(LabelRaster, Option<u64>)> {
    let (header, bytes) = read_header(path.as_ref(), "uint8")?;
    let labels = LabelRaster::from_header(&header, bytes, path.as_ref())?;
    Ok((labels, header.revision))
}

pub fn write_labels(labels: &LabelRaster, path: impl AsRef<Path>) -> Result<()> {
    write_labels_as(labels, path, None)
}

/// Writes labels carrying an explicit revision number in the header.
pub fn write_labels_as(
    labels: &LabelRaster,
    path: impl AsRef<Path>,
    revision: Option<u64>,
) -> Result<()> {
    labels.validate()?;
    let hp = header_path(path.as_ref());
    let mut header = labels.header(data_file_name(&hp));
    header.revision = revision;
    write_pair(&hp, &header, &labels.values)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_nodata_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let l = LabelRaster::filled(3, 2, LabelKind::Change, NODATA);
        let p = dir.path().join("l.json");
        write_labels(&l, &p).unwrap();
        assert_eq!(read_labels(&p).unwrap(), l);
    }

    #[test]
    fn unknown_change_code_is_rejected_on_read() {
        let dir = tempfile::tempdir().unwrap();
        let l = LabelRaster::filled(2, 1, LabelKind::Change, 0);
        let p = dir.path().join("c.json");
        write_labels(&l, &p).unwrap();
        std::fs::write(dir.path().join("c.bin"), [0u8, 7]).unwrap();
        let err = read_labels(&p).unwrap_err();
        assert!(err.to_string().contains("unknown class code"));
    }

    #[test]
    fn state_codes_zero_to_three_are_accepted() {
        let dir = tempfile::tempdir().unwrap();
        let l = LabelRaster::new(4, 1, LabelKind::State, vec![0, 1, 2, 3]).unwrap();
        let p = dir.path().join("s.json");
        write_labels(&l, &p).unwrap();
        let back = read_labels(&p).unwrap();
        assert_eq!(back.kind, LabelKind::State);
        assert_eq!(back.state(3), Some(PondState::Active));
    }

    #[test]
    fn revision_is_recorded_in_the_header() {
        let dir = tempfile::tempdir().unwrap();
        let l = LabelRaster::filled(1, 1, LabelKind::State, 0);
        let p = dir.path().join("r.json");
        write_labels_as(&l, &p, Some(7)).unwrap();
        let (h, _) = read_header(&p, "uint8").unwrap();
        assert_eq!(h.revision, Some(7));
    }
}
