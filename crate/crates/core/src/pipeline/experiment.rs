//! Repeated-trial experiments over regions, methods, and label sizes.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{
    confusion, metrics_csv, misclassification_heatmap, sample_training, summarize,
    write_heatmap_png, GroupSummary, MetricsReport, TrialPlan,
};
use crate::preprocess::{prepare_features, BandMode, MatchReference, PreprocessConfig};
use crate::raster::{
    read_labels, write_labels, write_raster, BandName, LabelKind, LabelRaster, Raster, NODATA,
};
use crate::spatial::{
    composite_features, scmk_features, slic_superpixels, CompositeKernelParams, ScMkParams,
};
use crate::stv::{argmax_map, stv_denoise, StvParams};
use crate::svm::{train_multiclass, ProbabilityTensor, SvmParams};

use super::region::read_pair;

/// The compared classifiers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    NuSvm,
    SvmCk,
    ScMk,
    SvmStv,
    SvmStvLifted,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::NuSvm,
        Method::SvmCk,
        Method::ScMk,
        Method::SvmStv,
        Method::SvmStvLifted,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::NuSvm => "nu_svm",
            Method::SvmCk => "svm_ck",
            Method::ScMk => "sc_mk",
            Method::SvmStv => "svm_stv",
            Method::SvmStvLifted => "svm_stv_lifted",
        }
    }
}

/// Where a region's inputs live.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionSpec {
    pub id: String,
    /// Region directory holding `region.json`, `t1` and `t2`.
    pub dir: PathBuf,
    /// Change-map truth; defaults to `truth_change` when present, else `labels_change`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<PathBuf>,
}

impl RegionSpec {
    pub fn truth_path(&self) -> PathBuf {
        self.truth.clone().unwrap_or_else(|| {
            let generated = self.dir.join("truth_change.json");
            if generated.is_file() {
                generated
            } else {
                self.dir.join("labels_change.json")
            }
        })
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MethodParams {
    pub svm: SvmParams,
    pub composite: CompositeKernelParams,
    pub scmk: ScMkParams,
    pub stv: StvParams,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub regions: Vec<RegionSpec>,
    pub band_mode: BandMode,
    /// Append Lab channels to every method's features.
    pub lift: bool,
    pub methods: Vec<Method>,
    pub params: MethodParams,
    /// Trial count and base seed; `n_per_class` is replaced by each entry of `label_sizes`.
    pub trials: TrialPlan,
    pub label_sizes: Vec<usize>,
    pub output_dir: PathBuf,
    pub match_reference: MatchReference,
    pub histogram_bins: usize,
    /// Persist every trial's prediction raster.
    pub write_predictions: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            regions: Vec::new(),
            band_mode: BandMode::Six,
            lift: false,
            methods: vec![Method::NuSvm, Method::SvmCk, Method::ScMk, Method::SvmStv],
            params: MethodParams::default(),
            trials: TrialPlan::default(),
            label_sizes: vec![10, 20, 30, 50, 100],
            output_dir: PathBuf::from("out"),
            match_reference: MatchReference::T1,
            histogram_bins: 65536,
            write_predictions: true,
        }
    }
}

impl ExperimentConfig {
    /// Reads a JSON config; relative region paths resolve against the file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: ExperimentConfig = serde_json::from_str(&text).map_err(|e| Error::Header {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        for r in &mut cfg.regions {
            if r.dir.is_relative() {
                r.dir = base.join(&r.dir);
            }
            if let Some(t) = r.truth.as_mut().filter(|t| t.is_relative()) {
                *t = base.join(&*t);
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.methods.is_empty() || self.label_sizes.is_empty() {
            return bad("methods and label_sizes must be non-empty".into());
        }
        if self.label_sizes.contains(&0) {
            return bad("label sizes must be positive".into());
        }
        self.trials.validate()?;
        self.params.composite.validate()?;
        self.params.scmk.validate()?;
        self.params.stv.validate()?;
        let mut ids: Vec<&str> = self.regions.iter().map(|r| r.id.as_str()).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return bad("region ids must be unique".into());
        }
        for r in &self.regions {
            for p in [r.dir.join("region.json"), r.truth_path()] {
                if !p.is_file() {
                    return bad(format!("region {}: {} does not exist", r.id, p.display()));
                }
            }
        }
        Ok(())
    }

    fn preprocess(&self, lift: bool) -> PreprocessConfig {
        PreprocessConfig {
            band_mode: self.band_mode,
            lift,
            match_reference: self.match_reference,
            histogram_bins: self.histogram_bins,
        }
    }

    fn band_label(&self) -> String {
        if self.lift {
            format!("{}+LAB", self.band_mode.as_str())
        } else {
            self.band_mode.as_str().to_string()
        }
    }

    /// Methods in canonical order, without duplicates.
    fn method_order(&self) -> Vec<Method> {
        let mut m = self.methods.clone();
        m.sort_unstable();
        m.dedup();
        m
    }
}

/// A cell (region, method, label size, trial) that did not produce metrics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellFailure {
    pub region: String,
    pub method: String,
    pub labels_per_class: usize,
    pub trial: usize,
    pub error: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub band_mode: String,
    pub groups: Vec<GroupSummary>,
    pub failures: Vec<CellFailure>,
}

#[derive(Clone, Debug)]
pub struct ExperimentOutcome {
    pub reports: Vec<MetricsReport>,
    pub failures: Vec<CellFailure>,
}

/// Per-region inputs shared by every trial.
struct RegionData {
    id: String,
    truth: LabelRaster,
    base: Raster,
    base_rows: Vec<Vec<f64>>,
    ck_rows: Option<Vec<Vec<f64>>>,
    scmk_rows: Option<Vec<Vec<f64>>>,
    lifted_rows: Option<Vec<Vec<f64>>>,
}

fn load_region(
    cfg: &ExperimentConfig,
    spec: &RegionSpec,
    methods: &[Method],
) -> Result<RegionData> {
    let pair = read_pair(&spec.dir)?;
    let truth = read_labels(spec.truth_path())?;
    if truth.kind != LabelKind::Change {
        return Err(Error::InvalidParameter(format!(
            "region {}: truth is not a change map",
            spec.id
        )));
    }
    if truth.width != pair.t1.width() || truth.height != pair.t1.height() {
        return Err(Error::DimensionMismatch(format!(
            "region {}: truth and bands differ in size",
            spec.id
        )));
    }
    let base = prepare_features(&pair, &cfg.preprocess(cfg.lift))?;
    let base_rows = base.pixel_rows();
    let ck_rows = methods
        .contains(&Method::SvmCk)
        .then(|| composite_features(&base, cfg.params.composite.window))
        .transpose()?;
    let scmk_rows = if methods.contains(&Method::ScMk) {
        let target = cfg.params.scmk.target_count(base.pixel_count());
        let seg = slic_superpixels(&base, target, cfg.params.scmk.compactness)?;
        log::debug!("region {}: {} superpixels", spec.id, seg.count);
        Some(scmk_features(&base, &seg)?)
    } else {
        None
    };
    let lifted_rows = if methods.contains(&Method::SvmStvLifted) {
        if !BandName::RGB.iter().all(|b| pair.t1.has_band(b)) {
            return Err(Error::MissingBand(
                "Red/Green/Blue for svm_stv_lifted".into(),
            ));
        }
        Some(prepare_features(&pair, &cfg.preprocess(true))?.pixel_rows())
    } else {
        None
    };
    Ok(RegionData {
        id: spec.id.clone(),
        truth,
        base,
        base_rows,
        ck_rows,
        scmk_rows,
        lifted_rows,
    })
}

/// Fills unset sub-kernels with the base SVM kernel so all methods share one kernel family.
fn method_params(
    cfg: &ExperimentConfig,
) -> (SvmParams, CompositeKernelParams, ScMkParams, StvParams) {
    let p = &cfg.params;
    let mut ck = p.composite.clone();
    ck.spectral_kernel = ck.spectral_kernel.or_else(|| p.svm.kernel.clone());
    ck.spatial_kernel = ck.spatial_kernel.or_else(|| p.svm.kernel.clone());
    let mut mk = p.scmk.clone();
    mk.kernel = mk.kernel.or_else(|| p.svm.kernel.clone());
    (p.svm.clone(), ck, mk, p.stv.clone())
}

fn predict(
    rows: &[Vec<f64>],
    train: &[usize],
    truth: &LabelRaster,
    params: &SvmParams,
    w: usize,
    h: usize,
) -> Result<ProbabilityTensor> {
    let x: Vec<Vec<f64>> = train.iter().map(|&p| rows[p].clone()).collect();
    let y: Vec<u8> = train.iter().map(|&p| truth.values[p]).collect();
    let model = train_multiclass(&x, &y, params)?;
    model.predict_tensor(rows, w, h)
}

/// One method's prediction and metrics for a trial, tagged with the trial seed.
type CellResult = (Method, u64, Result<(LabelRaster, MetricsReport)>);

/// Runs every trial of one region and label size for all methods.
fn run_trial(
    cfg: &ExperimentConfig,
    region: &RegionData,
    methods: &[Method],
    size: usize,
    trial: usize,
) -> Vec<CellResult> {
    let plan = TrialPlan {
        n_per_class: size,
        ..cfg.trials.clone()
    };
    let seed = plan.trial_seed(trial);
    let (svm, ck, mk, stv) = method_params(cfg);
    let (w, h) = (region.base.width(), region.base.height());
    let truth = &region.truth;
    let train = match sample_training(truth, size, seed) {
        Ok(t) => t,
        Err(e) => {
            let msg = e.to_string();
            return methods
                .iter()
                .map(|&m| (m, seed, Err(Error::InvalidParameter(msg.clone()))))
                .collect();
        }
    };
    let kind = LabelKind::Change;
    let plain = if methods.contains(&Method::NuSvm) || methods.contains(&Method::SvmStv) {
        Some(predict(&region.base_rows, &train, truth, &svm, w, h))
    } else {
        None
    };
    let with_kernel =
        |rows: &[Vec<f64>], kernel: Result<crate::svm::KernelSpec>| -> Result<ProbabilityTensor> {
            let params = SvmParams {
                kernel: Some(kernel?),
                ..svm.clone()
            };
            predict(rows, &train, truth, &params, w, h)
        };
    let d = region.base.band_count();
    let labeled = truth.values.iter().filter(|&&v| v != NODATA).count() as u64;

    methods
        .iter()
        .map(|&m| {
            let prediction: Result<LabelRaster> = (|| match m {
                Method::NuSvm => argmax_map(
                    plain
                        .as_ref()
                        .expect("plain model")
                        .as_ref()
                        .map_err(clone_err)?,
                    kind.clone(),
                ),
                Method::SvmStv => {
                    let p = plain
                        .as_ref()
                        .expect("plain model")
                        .as_ref()
                        .map_err(clone_err)?;
                    argmax_map(&stv_denoise(p, &stv)?, kind.clone())
                }
                Method::SvmCk => {
                    let rows = region.ck_rows.as_ref().expect("composite features");
                    argmax_map(&with_kernel(rows, ck.kernel_spec(d))?, kind.clone())
                }
                Method::ScMk => {
                    let rows = region.scmk_rows.as_ref().expect("superpixel features");
                    argmax_map(&with_kernel(rows, mk.kernel_spec(d))?, kind.clone())
                }
                Method::SvmStvLifted => {
                    let rows = region.lifted_rows.as_ref().expect("lifted features");
                    let p = predict(rows, &train, truth, &svm, w, h)?;
                    argmax_map(&stv_denoise(&p, &stv)?, kind.clone())
                }
            })();
            let result = prediction.and_then(|pred| {
                let cm = confusion(&pred, truth, &train)?;
                // Evaluation covers exactly the labeled pixels outside the training set.
                if cm.total() + train.len() as u64 != labeled {
                    return Err(Error::InvalidParameter(
                        "training pixels overlap the evaluation set".into(),
                    ));
                }
                let mut r = MetricsReport::from_confusion(&cm);
                r.region = region.id.clone();
                r.method = m.as_str().into();
                r.band_mode = cfg.band_label();
                r.labels_per_class = size;
                r.trial = trial;
                r.seed = seed;
                r.train_pixels = train.len();
                Ok((pred, r))
            });
            (m, seed, result)
        })
        .collect()
}

fn clone_err(e: &Error) -> Error {
    Error::InvalidParameter(e.to_string())
}

/// Runs the configured sweep, writing `metrics.csv`, `summary.json`,
/// predictions, and heatmaps under `output_dir`.
///
/// A failing cell is logged and recorded in the outcome; the others still run.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    cfg.validate()?;
    let methods = cfg.method_order();
    let out = &cfg.output_dir;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;

    let mut reports = Vec::new();
    let mut failures = Vec::new();
    for spec in &cfg.regions {
        log::info!("region {}: preparing features", spec.id);
        let region = match load_region(cfg, spec, &methods) {
            Ok(r) => r,
            Err(e) => {
                log::error!("region {}: {e}", spec.id);
                for &m in &methods {
                    for &size in &cfg.label_sizes {
                        for trial in 0..cfg.trials.n_trials {
                            failures.push(CellFailure {
                                region: spec.id.clone(),
                                method: m.as_str().into(),
                                labels_per_class: size,
                                trial,
                                error: e.to_string(),
                            });
                        }
                    }
                }
                continue;
            }
        };
        let units: Vec<(usize, usize)> = cfg
            .label_sizes
            .iter()
            .flat_map(|&s| (0..cfg.trials.n_trials).map(move |t| (s, t)))
            .collect();
        let results: Vec<_> = units
            .par_iter()
            .map(|&(size, trial)| (size, trial, run_trial(cfg, &region, &methods, size, trial)))
            .collect();

        for &m in &methods {
            for &size in &cfg.label_sizes {
                let mut predictions = Vec::new();
                for (s, trial, cell) in &results {
                    if *s != size {
                        continue;
                    }
                    let Some((_, _, res)) = cell.iter().find(|(mm, _, _)| *mm == m) else {
                        continue;
                    };
                    match res {
                        Ok((pred, report)) => {
                            if cfg.write_predictions {
                                let path = prediction_path(cfg, &region.id, m, size, *trial);
                                if let Some(dir) = path.parent() {
                                    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
                                }
                                write_labels(pred, path)?;
                            }
                            predictions.push(pred.clone());
                            reports.push(report.clone());
                        }
                        Err(e) => {
                            log::error!("{} {} n={size} trial {trial}: {e}", region.id, m.as_str());
                            failures.push(CellFailure {
                                region: region.id.clone(),
                                method: m.as_str().into(),
                                labels_per_class: size,
                                trial: *trial,
                                error: e.to_string(),
                            });
                        }
                    }
                }
                if !predictions.is_empty() {
                    write_heatmap(cfg, &region.id, m, size, &predictions, &region.truth)?;
                }
            }
        }
    }

    let csv = out.join("metrics.csv");
    fs::write(&csv, metrics_csv(&reports)).map_err(|e| Error::io(&csv, e))?;
    let summary = ExperimentSummary {
        band_mode: cfg.band_label(),
        groups: summarize(&reports),
        failures: failures.clone(),
    };
    let sp = out.join("summary.json");
    fs::write(&sp, serde_json::to_string_pretty(&summary)?).map_err(|e| Error::io(&sp, e))?;
    Ok(ExperimentOutcome { reports, failures })
}

fn write_heatmap(
    cfg: &ExperimentConfig,
    region: &str,
    method: Method,
    size: usize,
    predictions: &[LabelRaster],
    truth: &LabelRaster,
) -> Result<()> {
    let heat = misclassification_heatmap(predictions, truth)?;
    let dir = cfg.output_dir.join("heatmaps").join(region);
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let stem = format!("{}_n{size}", method.as_str());
    write_raster(&heat, dir.join(format!("{stem}.json")))?;
    write_heatmap_png(&heat, cfg.trials.n_trials, dir.join(format!("{stem}.png")))
}

fn prediction_path(
    cfg: &ExperimentConfig,
    region: &str,
    method: Method,
    size: usize,
    trial: usize,
) -> PathBuf {
    cfg.output_dir
        .join("predictions")
        .join(region)
        .join(method.as_str())
        .join(format!("n{size}_t{trial}.json"))
}

/// Rebuilds heatmaps from saved predictions; returns how many were written.
pub fn render_heatmaps(cfg: &ExperimentConfig) -> Result<usize> {
    cfg.validate()?;
    let mut written = 0;
    for spec in &cfg.regions {
        let truth = read_labels(spec.truth_path())?;
        for m in cfg.method_order() {
            for &size in &cfg.label_sizes {
                let predictions = (0..cfg.trials.n_trials)
                    .map(|t| prediction_path(cfg, &spec.id, m, size, t))
                    .filter(|p| p.is_file())
                    .map(read_labels)
                    .collect::<Result<Vec<_>>>()?;
                if !predictions.is_empty() {
                    write_heatmap(cfg, &spec.id, m, size, &predictions, &truth)?;
                    written += 1;
                }
            }
        }
    }
    Ok(written)
}

/// Recomputes metrics from predictions saved by [`run_experiment`], redrawing
/// each trial's training set from its seed.
pub fn recompute_metrics(cfg: &ExperimentConfig) -> Result<Vec<MetricsReport>> {
    cfg.validate()?;
    let mut reports = Vec::new();
    for spec in &cfg.regions {
        let truth = read_labels(spec.truth_path())?;
        for m in cfg.method_order() {
            for &size in &cfg.label_sizes {
                for trial in 0..cfg.trials.n_trials {
                    let path = prediction_path(cfg, &spec.id, m, size, trial);
                    if !path.is_file() {
                        continue;
                    }
                    let pred = read_labels(&path)?;
                    let seed = cfg.trials.trial_seed(trial);
                    let train = sample_training(&truth, size, seed)?;
                    let cm = confusion(&pred, &truth, &train)?;
                    let mut r = MetricsReport::from_confusion(&cm);
                    r.region = spec.id.clone();
                    r.method = m.as_str().into();
                    r.band_mode = cfg.band_label();
                    r.labels_per_class = size;
                    r.trial = trial;
                    r.seed = seed;
                    r.train_pixels = train.len();
                    reports.push(r);
                }
            }
        }
    }
    Ok(reports)
}
