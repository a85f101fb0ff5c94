//! On-disk region directories and the revisioned label store behind the
//! correction service.
//!
//! ```text
//! <root>/<region id>/
//!     region.json               metadata
//!     t1.json/.bin, t2.json/.bin   band stacks
//!     labels_t1, labels_t2, labels_change   editable labels (uint8)
//!     truth_t1, truth_t2, truth_change      generator truth (synthetic only)
//! ```

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use super::synth::SynthScene;
use crate::autolabel::{change_map, label_date, AutoLabelConfig};
use crate::error::{Error, Result};
use crate::raster::format::{header_path, read_header};
use crate::raster::labels::{read_labels_with_revision, write_labels_as};
use crate::raster::{
    read_raster, write_labels, write_raster, BiTemporalPair, LabelKind, LabelRaster,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionMeta {
    pub id: String,
    pub width: usize,
    pub height: usize,
    pub t1_date: String,
    pub t2_date: String,
    #[serde(default)]
    pub synthetic: bool,
}

/// An editable label layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Layer {
    T1,
    T2,
    Change,
}

impl Layer {
    pub fn file_stem(self) -> &'static str {
        match self {
            Layer::T1 => "labels_t1",
            Layer::T2 => "labels_t2",
            Layer::Change => "labels_change",
        }
    }

    pub fn kind(self) -> LabelKind {
        match self {
            Layer::Change => LabelKind::Change,
            _ => LabelKind::State,
        }
    }

    pub fn parse(s: &str) -> Option<Layer> {
        match s {
            "t1" => Some(Layer::T1),
            "t2" => Some(Layer::T2),
            "change" => Some(Layer::Change),
            _ => None,
        }
    }
}

/// Index-threshold labels for both dates and their change map.
pub fn autolabel_region(
    pair: &BiTemporalPair,
    cfg: &AutoLabelConfig,
) -> Result<(LabelRaster, LabelRaster, LabelRaster)> {
    pair.check()?;
    let s1 = label_date(&pair.t1, cfg)?;
    let s2 = label_date(&pair.t2, cfg)?;
    let change = change_map(&s1, &s2)?;
    Ok((s1, s2, change))
}

fn check_id(id: &str) -> Result<()> {
    let ok = !id.is_empty()
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
        && !id.starts_with('-');
    if ok {
        Ok(())
    } else {
        Err(Error::UnknownRegion(id.to_string()))
    }
}

/// Writes a region directory: bands, metadata, and optional truth.
pub fn write_region(dir: &Path, meta: &RegionMeta, pair: &BiTemporalPair) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_raster(&pair.t1, dir.join("t1.json"))?;
    write_raster(&pair.t2, dir.join("t2.json"))?;
    let mp = dir.join("region.json");
    fs::write(&mp, serde_json::to_string_pretty(meta)?).map_err(|e| Error::io(&mp, e))
}

/// Writes a synthetic scene with its truth layers and, when `labels` is given,
/// autolabel output as the editable layers.
pub fn write_synthetic_region(
    dir: &Path,
    id: &str,
    scene: &SynthScene,
    labels: Option<&AutoLabelConfig>,
) -> Result<()> {
    check_id(id)?;
    let meta = RegionMeta {
        id: id.to_string(),
        width: scene.pair.t1.width(),
        height: scene.pair.t1.height(),
        t1_date: scene.pair.t1_date.clone(),
        t2_date: scene.pair.t2_date.clone(),
        synthetic: true,
    };
    write_region(dir, &meta, &scene.pair)?;
    write_labels(&scene.states_t1, dir.join("truth_t1.json"))?;
    write_labels(&scene.states_t2, dir.join("truth_t2.json"))?;
    write_labels(&scene.change, dir.join("truth_change.json"))?;
    if let Some(cfg) = labels {
        let (s1, s2, c) = autolabel_region(&scene.pair, cfg)?;
        write_labels_as(&s1, dir.join("labels_t1.json"), Some(0))?;
        write_labels_as(&s2, dir.join("labels_t2.json"), Some(0))?;
        write_labels_as(&c, dir.join("labels_change.json"), Some(0))?;
    }
    Ok(())
}

pub fn read_meta(dir: &Path) -> Result<RegionMeta> {
    let mp = dir.join("region.json");
    let text = fs::read_to_string(&mp).map_err(|e| Error::io(&mp, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Header {
        path: mp,
        message: e.to_string(),
    })
}

pub fn read_pair(dir: &Path) -> Result<BiTemporalPair> {
    let meta = read_meta(dir)?;
    BiTemporalPair::new(
        read_raster(dir.join("t1.json"))?,
        read_raster(dir.join("t2.json"))?,
        meta.t1_date,
        meta.t2_date,
    )
}

/// Region directories under a root, with per-region write locks.
///
/// Label writes are optimistic: the caller names the revision it last read,
/// and a mismatch is a [`Error::RevisionConflict`]. A write lands as a new
/// data file followed by an atomic rename of the header, so readers see
/// either the old or the new labels, never a mix.
#[derive(Debug, Default)]
pub struct RegionStore {
    root: PathBuf,
    locks: Mutex<HashMap<String, Arc<Mutex<()>>>>,
}

impl RegionStore {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        RegionStore {
            root: root.into(),
            locks: Mutex::new(HashMap::new()),
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Metadata of every subdirectory holding a `region.json`, sorted by id.
    pub fn list(&self) -> Result<Vec<RegionMeta>> {
        let entries = fs::read_dir(&self.root).map_err(|e| Error::io(&self.root, e))?;
        let mut out = Vec::new();
        for entry in entries {
            let entry = entry.map_err(|e| Error::io(&self.root, e))?;
            let dir = entry.path();
            if dir.join("region.json").is_file() {
                out.push(read_meta(&dir)?);
            }
        }
        out.sort_by(|a, b| a.id.cmp(&b.id));
        Ok(out)
    }

    pub fn dir(&self, id: &str) -> Result<PathBuf> {
        check_id(id)?;
        let dir = self.root.join(id);
        if dir.join("region.json").is_file() {
            Ok(dir)
        } else {
            Err(Error::UnknownRegion(id.to_string()))
        }
    }

    pub fn meta(&self, id: &str) -> Result<RegionMeta> {
        read_meta(&self.dir(id)?)
    }

    pub fn pair(&self, id: &str) -> Result<BiTemporalPair> {
        read_pair(&self.dir(id)?)
    }

    /// Labels of a layer and their revision (0 when the header carries none).
    pub fn labels(&self, id: &str, layer: Layer) -> Result<(LabelRaster, u64)> {
        let path = self.dir(id)?.join(format!("{}.json", layer.file_stem()));
        let (labels, revision) = read_labels_with_revision(&path)?;
        Ok((labels, revision.unwrap_or(0)))
    }

    fn lock(&self, id: &str) -> Arc<Mutex<()>> {
        let mut locks = self.locks.lock().unwrap_or_else(|e| e.into_inner());
        locks.entry(id.to_string()).or_default().clone()
    }

    /// Replaces a layer's values if `expected_revision` is current; returns the new revision.
    pub fn put_labels(
        &self,
        id: &str,
        layer: Layer,
        expected_revision: u64,
        values: Vec<u8>,
    ) -> Result<u64> {
        let dir = self.dir(id)?;
        let lock = self.lock(id);
        let _guard = lock.lock().unwrap_or_else(|e| e.into_inner());
        let (current, revision) = self.labels(id, layer)?;
        if revision != expected_revision {
            return Err(Error::RevisionConflict {
                expected: expected_revision,
                current: revision,
            });
        }
        let updated =
            LabelRaster::new(current.width, current.height, current.kind.clone(), values)?;
        let next = revision + 1;
        let stem = layer.file_stem();
        let hp = header_path(&dir.join(stem));
        let (old_header, _) = read_header(&hp, "uint8")?;

        let data_name = format!("{stem}.r{next}.bin");
        let dp = dir.join(&data_name);
        fs::write(&dp, &updated.values).map_err(|e| Error::io(&dp, e))?;
        let mut header = updated.header(data_name);
        header.revision = Some(next);
        let tmp = dir.join(format!("{stem}.json.tmp"));
        fs::write(&tmp, serde_json::to_string_pretty(&header)?).map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, &hp).map_err(|e| Error::io(&hp, e))?;
        if old_header.data != header.data {
            let old = dir.join(&old_header.data);
            if let Err(e) = fs::remove_file(&old) {
                log::warn!("could not remove superseded {}: {e}", old.display());
            }
        }
        Ok(next)
    }
}
