//! Semi-automatic labeling: water indices, colour-index thresholds, pond
//! cleanup, and subtraction of two state maps into change categories.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::label_components;
use crate::raster::{BandName, ChangeClass, LabelKind, LabelRaster, PondState, Raster, NODATA};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Cleanup {
    None,
    Majority,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AutoLabelConfig {
    /// Colour-index cut between Active (below) and Transition.
    pub ci_low: f64,
    /// Colour-index cut between Transition and Inactive (at or above).
    pub ci_high: f64,
    pub mndwi_water_threshold: f64,
    pub min_pond_pixels: usize,
    pub cleanup: Cleanup,
    /// Reverses the Ci interval assignment (Inactive below `ci_low`, Active above `ci_high`).
    pub swap_active_inactive: bool,
}

impl Default for AutoLabelConfig {
    fn default() -> Self {
        AutoLabelConfig {
            ci_low: 0.0,
            ci_high: 0.15,
            mndwi_water_threshold: 0.0,
            min_pond_pixels: 5,
            cleanup: Cleanup::Majority,
            swap_active_inactive: false,
        }
    }
}

impl AutoLabelConfig {
    pub fn validate(&self) -> Result<()> {
        let in_range = |v: f64| (-1.0..=1.0).contains(&v);
        if !(self.ci_low < self.ci_high) {
            return Err(Error::InvalidParameter(format!(
                "ci_low {} must be below ci_high {}",
                self.ci_low, self.ci_high
            )));
        }
        if !in_range(self.ci_low)
            || !in_range(self.ci_high)
            || !in_range(self.mndwi_water_threshold)
        {
            return Err(Error::InvalidParameter(
                "thresholds must lie in [-1, 1]".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum IndexKind {
    Ci,
    Ndwi,
    Mndwi,
}

/// A per-pixel normalized-difference index in [-1, 1].
#[derive(Clone, Debug, PartialEq)]
pub struct IndexMap {
    pub width: usize,
    pub height: usize,
    pub kind: IndexKind,
    pub values: Vec<f32>,
}

/// `(a - b) / (a + b)` per pixel; a zero denominator yields 0.
pub fn normalized_difference(a: &[f32], b: &[f32]) -> Result<Vec<f32>> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} vs {} pixels",
            a.len(),
            b.len()
        )));
    }
    Ok(a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let (x, y) = (x as f64, y as f64);
            let s = x + y;
            if s == 0.0 {
                0.0
            } else {
                ((x - y) / s).clamp(-1.0, 1.0) as f32
            }
        })
        .collect())
}

fn index(r: &Raster, a: &BandName, b: &BandName, kind: IndexKind) -> Result<IndexMap> {
    Ok(IndexMap {
        width: r.width(),
        height: r.height(),
        kind,
        values: normalized_difference(r.band(a)?, r.band(b)?)?,
    })
}

/// Colour index `(green - red) / (green + red)`: low for sediment-laden
/// water, high where photosynthetic material tints the water green.
pub fn color_index(r: &Raster) -> Result<IndexMap> {
    index(r, &BandName::Green, &BandName::Red, IndexKind::Ci)
}

/// `(green - NIR) / (green + NIR)`.
pub fn ndwi(r: &Raster) -> Result<IndexMap> {
    index(r, &BandName::Green, &BandName::Nir, IndexKind::Ndwi)
}

/// `(green - SWIR1) / (green + SWIR1)`, the index used for water masking.
pub fn mndwi(r: &Raster) -> Result<IndexMap> {
    index(r, &BandName::Green, &BandName::Swir1, IndexKind::Mndwi)
}

/// Water iff the index strictly exceeds `threshold`.
pub fn water_mask(m: &IndexMap, threshold: f64) -> Vec<bool> {
    m.values.iter().map(|&v| v as f64 > threshold).collect()
}

/// Assigns a pond state to every pixel from the colour index and water mask.
pub fn pond_states(ci: &IndexMap, water: &[bool], cfg: &AutoLabelConfig) -> Result<LabelRaster> {
    if water.len() != ci.values.len() {
        return Err(Error::DimensionMismatch(format!(
            "mask has {} pixels, index has {}",
            water.len(),
            ci.values.len()
        )));
    }
    let (low_state, high_state) = if cfg.swap_active_inactive {
        (PondState::Inactive, PondState::Active)
    } else {
        (PondState::Active, PondState::Inactive)
    };
    let states: Vec<PondState> = ci
        .values
        .iter()
        .zip(water)
        .map(|(&c, &w)| {
            let c = c as f64;
            if !w {
                PondState::NoWater
            } else if c < cfg.ci_low {
                low_state
            } else if c < cfg.ci_high {
                PondState::Transition
            } else {
                high_state
            }
        })
        .collect();
    LabelRaster::from_states(ci.width, ci.height, &states)
}

/// Relabels each 4-connected water component to its majority state and
/// drops components smaller than `min_pond_pixels` to NoWater.
///
/// Majority ties go to the lowest state code.
pub fn majority_cleanup(s: &LabelRaster, min_pond_pixels: usize) -> LabelRaster {
    let is_water = |p: usize| PondState::from_code(s.values[p]).is_some_and(PondState::is_water);
    let (ids, count) = label_components(s.width, s.height, is_water, |_, _| true);
    let mut votes = vec![[0usize; 4]; count];
    for (p, &id) in ids.iter().enumerate() {
        if id != u32::MAX {
            votes[id as usize][s.values[p] as usize] += 1;
        }
    }
    let winners: Vec<u8> = votes
        .iter()
        .map(|v| {
            let size: usize = v.iter().sum();
            if size < min_pond_pixels {
                PondState::NoWater.code()
            } else {
                // max_by_key keeps the last maximum; iterate in reverse so ties pick the lowest code.
                (0..4u8).rev().max_by_key(|&c| v[c as usize]).unwrap_or(0)
            }
        })
        .collect();
    let mut out = s.clone();
    for (p, &id) in ids.iter().enumerate() {
        if id != u32::MAX {
            out.values[p] = winners[id as usize];
        }
    }
    out
}

/// The change category between two pond states.
pub fn change_between(s1: PondState, s2: PondState) -> ChangeClass {
    match (s1.rank(), s2.rank()) {
        (None, None) => ChangeClass::NoChange,
        (Some(_), None) | (None, Some(_)) => ChangeClass::WaterExistAbsence,
        (Some(a), Some(b)) if b < a => ChangeClass::Decrease,
        (Some(a), Some(b)) if b > a => ChangeClass::Increase,
        _ => ChangeClass::NoChange,
    }
}

/// Subtracts two state maps into a change map; nodata in either date stays nodata.
pub fn change_map(s1: &LabelRaster, s2: &LabelRaster) -> Result<LabelRaster> {
    s1.same_shape(s2)?;
    let values = s1
        .values
        .iter()
        .zip(&s2.values)
        .map(
            |(&a, &b)| match (PondState::from_code(a), PondState::from_code(b)) {
                (Some(a), Some(b)) => change_between(a, b).code(),
                _ => NODATA,
            },
        )
        .collect();
    LabelRaster::new(s1.width, s1.height, LabelKind::Change, values)
}

/// Labels one date: MNDWI water mask, colour-index states, optional cleanup.
pub fn label_date(r: &Raster, cfg: &AutoLabelConfig) -> Result<LabelRaster> {
    cfg.validate()?;
    let water = water_mask(&mndwi(r)?, cfg.mndwi_water_threshold);
    let states = pond_states(&color_index(r)?, &water, cfg)?;
    Ok(match cfg.cleanup {
        Cleanup::None => states,
        Cleanup::Majority => majority_cleanup(&states, cfg.min_pond_pixels),
    })
}
