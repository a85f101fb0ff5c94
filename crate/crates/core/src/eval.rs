//! Agreement metrics, training-set sampling, trial aggregation, and
//! misclassification heatmaps.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::render::encode_png_rgb;
use crate::raster::{BandName, LabelRaster, Raster, NODATA};

/// `k × k` counts, rows indexed by truth and columns by prediction.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfusionMatrix {
    k: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn zeros(k: usize) -> Self {
        ConfusionMatrix {
            k,
            counts: vec![0; k * k],
        }
    }

    pub fn from_rows(rows: &[Vec<u64>]) -> Result<Self> {
        let k = rows.len();
        if rows.iter().any(|r| r.len() != k) {
            return Err(Error::DimensionMismatch(
                "confusion matrix must be square".into(),
            ));
        }
        Ok(ConfusionMatrix {
            k,
            counts: rows.concat(),
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn get(&self, truth: usize, pred: usize) -> u64 {
        self.counts[truth * self.k + pred]
    }

    pub fn add(&mut self, truth: usize, pred: usize) {
        self.counts[truth * self.k + pred] += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn row_sum(&self, i: usize) -> u64 {
        (0..self.k).map(|j| self.get(i, j)).sum()
    }

    pub fn col_sum(&self, j: usize) -> u64 {
        (0..self.k).map(|i| self.get(i, j)).sum()
    }

    /// Classes occurring in truth or prediction.
    fn present(&self, i: usize) -> bool {
        self.row_sum(i) + self.col_sum(i) > 0
    }
}

/// Counts over pixels that are labeled in `truth` and not listed in `exclude`.
pub fn confusion(
    pred: &LabelRaster,
    truth: &LabelRaster,
    exclude: &[usize],
) -> Result<ConfusionMatrix> {
    pred.same_shape(truth)?;
    if pred.kind != truth.kind {
        return Err(Error::DimensionMismatch(
            "prediction and truth use different class sets".into(),
        ));
    }
    let mut skip = vec![false; truth.pixel_count()];
    for &p in exclude {
        *skip.get_mut(p).ok_or_else(|| {
            Error::InvalidParameter(format!("excluded pixel {p} outside the raster"))
        })? = true;
    }
    let k = truth.class_count();
    let mut cm = ConfusionMatrix::zeros(k);
    for (p, (&t, &y)) in truth.values.iter().zip(&pred.values).enumerate() {
        if t == NODATA || skip[p] {
            continue;
        }
        if y == NODATA || y as usize >= k {
            return Err(Error::UnknownClassCode { code: y, pixel: p });
        }
        cm.add(t as usize, y as usize);
    }
    if cm.total() == 0 {
        log::warn!("empty evaluation set; confusion matrix is all zero");
    }
    Ok(cm)
}

/// Cohen's κ. When chance agreement is total (`p_e = 1`), returns 1 if the
/// observed agreement is also total and 0 otherwise; an empty matrix gives 0.
pub fn cohen_kappa(cm: &ConfusionMatrix) -> f64 {
    let n = cm.total() as f64;
    if n == 0.0 {
        return 0.0;
    }
    let po = (0..cm.k).map(|i| cm.get(i, i)).sum::<u64>() as f64 / n;
    let pe = (0..cm.k)
        .map(|i| cm.row_sum(i) as f64 * cm.col_sum(i) as f64)
        .sum::<f64>()
        / (n * n);
    if pe == 1.0 {
        return if po == 1.0 { 1.0 } else { 0.0 };
    }
    (po - pe) / (1.0 - pe)
}

fn tp_fp_fn(cm: &ConfusionMatrix, i: usize) -> (f64, f64, f64) {
    let tp = cm.get(i, i) as f64;
    (tp, cm.col_sum(i) as f64 - tp, cm.row_sum(i) as f64 - tp)
}

/// Per-class Jaccard index; `None` for classes absent from both truth and prediction.
pub fn jaccard_per_class(cm: &ConfusionMatrix) -> Vec<Option<f64>> {
    (0..cm.k)
        .map(|i| {
            cm.present(i).then(|| {
                let (tp, fp, fn_) = tp_fp_fn(cm, i);
                tp / (tp + fp + fn_)
            })
        })
        .collect()
}

/// Per-class F1; `None` for classes absent from both truth and prediction.
pub fn f1_per_class(cm: &ConfusionMatrix) -> Vec<Option<f64>> {
    (0..cm.k)
        .map(|i| {
            cm.present(i).then(|| {
                let (tp, fp, fn_) = tp_fp_fn(cm, i);
                2.0 * tp / (2.0 * tp + fp + fn_)
            })
        })
        .collect()
}

fn macro_mean(v: &[Option<f64>]) -> f64 {
    let present: Vec<f64> = v.iter().flatten().copied().collect();
    if present.is_empty() {
        0.0
    } else {
        present.iter().sum::<f64>() / present.len() as f64
    }
}

pub fn jaccard_macro(cm: &ConfusionMatrix) -> f64 {
    macro_mean(&jaccard_per_class(cm))
}

pub fn f1_macro(cm: &ConfusionMatrix) -> f64 {
    macro_mean(&f1_per_class(cm))
}

/// Draws `min(n_per_class, population - 1)` pixels per class without
/// replacement, so every class keeps at least one pixel for evaluation.
/// Returns sorted pixel indices.
pub fn sample_training(truth: &LabelRaster, n_per_class: usize, seed: u64) -> Result<Vec<usize>> {
    let k = truth.class_count();
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (p, &v) in truth.values.iter().enumerate() {
        if v != NODATA {
            members
                .get_mut(v as usize)
                .ok_or(Error::UnknownClassCode { code: v, pixel: p })?
                .push(p);
        }
    }
    if let Some((class, m)) = members.iter().enumerate().find(|(_, m)| m.len() <= 1) {
        return Err(Error::SparseClass {
            class: class as u8,
            count: m.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen = Vec::new();
    for m in &members {
        let take = n_per_class.min(m.len() - 1);
        chosen.extend(sample(&mut rng, m.len(), take).into_iter().map(|i| m[i]));
    }
    chosen.sort_unstable();
    Ok(chosen)
}

/// Marks nodata in heatmap rasters.
pub const HEATMAP_NODATA: f32 = -1.0;

/// Per-pixel count of trials whose prediction differs from truth, as a single
/// `errors` band; unlabeled pixels hold [`HEATMAP_NODATA`].
pub fn misclassification_heatmap(
    predictions: &[LabelRaster],
    truth: &LabelRaster,
) -> Result<Raster> {
    let mut counts: Vec<f32> = truth
        .values
        .iter()
        .map(|&t| if t == NODATA { HEATMAP_NODATA } else { 0.0 })
        .collect();
    for pred in predictions {
        pred.same_shape(truth)?;
        for ((c, &t), &y) in counts.iter_mut().zip(&truth.values).zip(&pred.values) {
            if t != NODATA && y != t {
                *c += 1.0;
            }
        }
    }
    Raster::new(
        truth.width,
        truth.height,
        vec![BandName::Tagged("errors".into())],
        counts,
    )
}

/// Colour for `count` of `n_trials` errors: dark blue through yellow to red.
pub fn heat_colour(count: f32, n_trials: usize) -> [u8; 3] {
    if count < 0.0 {
        return [128, 128, 128];
    }
    const STOPS: [[f64; 3]; 3] = [
        [20.0, 30.0, 110.0],
        [250.0, 220.0, 60.0],
        [200.0, 20.0, 20.0],
    ];
    let t = (count as f64 / n_trials.max(1) as f64).clamp(0.0, 1.0) * 2.0;
    let (lo, hi, f) = if t <= 1.0 { (0, 1, t) } else { (1, 2, t - 1.0) };
    std::array::from_fn(|c| (STOPS[lo][c] + (STOPS[hi][c] - STOPS[lo][c]) * f).round() as u8)
}

/// PNG of a heatmap raster on the fixed `0..=n_trials` ramp.
pub fn heatmap_png_bytes(heatmap: &Raster, n_trials: usize) -> Result<Vec<u8>> {
    let rgb: Vec<u8> = heatmap
        .band_at(0)
        .iter()
        .flat_map(|&c| heat_colour(c, n_trials))
        .collect();
    let mut out = Vec::new();
    encode_png_rgb(&mut out, heatmap.width(), heatmap.height(), &rgb)?;
    Ok(out)
}

pub fn write_heatmap_png(
    heatmap: &Raster,
    n_trials: usize,
    path: impl AsRef<std::path::Path>,
) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, heatmap_png_bytes(heatmap, n_trials)?).map_err(|e| Error::io(path, e))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalOn {
    #[default]
    AllLabeledMinusTrain,
}

/// Repeated random training draws for one label size.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrialPlan {
    pub n_per_class: usize,
    pub n_trials: usize,
    pub seed: u64,
    pub eval_on: EvalOn,
}

impl Default for TrialPlan {
    fn default() -> Self {
        TrialPlan {
            n_per_class: 100,
            n_trials: 10,
            seed: 0,
            eval_on: EvalOn::AllLabeledMinusTrain,
        }
    }
}

impl TrialPlan {
    pub fn trial_seed(&self, trial: usize) -> u64 {
        self.seed.wrapping_add(trial as u64)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_trials == 0 || self.n_per_class == 0 {
            return Err(Error::InvalidParameter(
                "n_trials and n_per_class must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Metrics for one region × method × label size × trial.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub region: String,
    pub method: String,
    pub band_mode: String,
    pub labels_per_class: usize,
    pub trial: usize,
    pub seed: u64,
    pub kappa: f64,
    pub jaccard_macro: f64,
    pub f1_macro: f64,
    pub jaccard: Vec<Option<f64>>,
    pub f1: Vec<Option<f64>>,
    pub train_pixels: usize,
    pub eval_pixels: u64,
}

impl MetricsReport {
    pub fn from_confusion(cm: &ConfusionMatrix) -> Self {
        MetricsReport {
            region: String::new(),
            method: String::new(),
            band_mode: String::new(),
            labels_per_class: 0,
            trial: 0,
            seed: 0,
            kappa: cohen_kappa(cm),
            jaccard_macro: jaccard_macro(cm),
            f1_macro: f1_macro(cm),
            jaccard: jaccard_per_class(cm),
            f1: f1_per_class(cm),
            train_pixels: 0,
            eval_pixels: cm.total(),
        }
    }
}

pub const CSV_HEADER: &str =
    "region,method,band_mode,labels_per_class,trial,seed,kappa,jaccard_macro,f1_macro,jaccard_per_class,f1_per_class,train_pixels,eval_pixels";

fn per_class_field(v: &[Option<f64>]) -> String {
    v.iter()
        .map(|x| x.map(|x| format!("{x:.6}")).unwrap_or_default())
        .collect::<Vec<_>>()
        .join(";")
}

/// CSV with fixed six-decimal floats, one row per report in the given order.
pub fn metrics_csv(reports: &[MetricsReport]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in reports {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{:.6},{:.6},{:.6},{},{},{},{}",
            r.region,
            r.method,
            r.band_mode,
            r.labels_per_class,
            r.trial,
            r.seed,
            r.kappa,
            r.jaccard_macro,
            r.f1_macro,
            per_class_field(&r.jaccard),
            per_class_field(&r.f1),
            r.train_pixels,
            r.eval_pixels
        );
    }
    out
}

/// Parses [`metrics_csv`] output. Floats come back at CSV precision.
pub fn parse_metrics_csv(text: &str) -> Result<Vec<MetricsReport>> {
    let bad = |line: usize, what: &str| {
        Error::InvalidParameter(format!("metrics CSV line {line}: {what}"))
    };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == CSV_HEADER => {}
        _ => return Err(bad(1, "unexpected header")),
    }
    let num = |s: &str, line: usize| s.parse::<f64>().map_err(|_| bad(line, "bad number"));
    let per_class = |s: &str, line: usize| -> Result<Vec<Option<f64>>> {
        if s.is_empty() {
            return Ok(Vec::new());
        }
        s.split(';')
            .map(|x| {
                if x.is_empty() {
                    Ok(None)
                } else {
                    num(x, line).map(Some)
                }
            })
            .collect()
    };
    lines
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, l)| {
            let line = i + 1;
            let f: Vec<&str> = l.split(',').collect();
            if f.len() != 13 {
                return Err(bad(line, "expected 13 fields"));
            }
            let int = |s: &str| s.parse::<u64>().map_err(|_| bad(line, "bad integer"));
            Ok(MetricsReport {
                region: f[0].into(),
                method: f[1].into(),
                band_mode: f[2].into(),
                labels_per_class: int(f[3])? as usize,
                trial: int(f[4])? as usize,
                seed: int(f[5])?,
                kappa: num(f[6], line)?,
                jaccard_macro: num(f[7], line)?,
                f1_macro: num(f[8], line)?,
                jaccard: per_class(f[9], line)?,
                f1: per_class(f[10], line)?,
                train_pixels: int(f[11])? as usize,
                eval_pixels: int(f[12])?,
            })
        })
        .collect()
}

/// Median of a non-empty slice; the mean of the middle pair for even lengths.
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Aggregates of one metric over all trials and regions of a group.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    /// Mean over every (region, trial) value.
    pub mean: f64,
    /// Median over every (region, trial) value.
    pub median: f64,
    /// Best trial after averaging each trial over regions.
    pub best_trial_of_region_average: f64,
    /// Best region after averaging each region over trials.
    pub best_region: f64,
    pub best_region_id: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub band_mode: String,
    pub method: String,
    pub labels_per_class: usize,
    pub n: usize,
    pub kappa: MetricSummary,
    pub jaccard_macro: MetricSummary,
    pub f1_macro: MetricSummary,
}

fn summarize_metric(
    rows: &[&MetricsReport],
    metric: impl Fn(&MetricsReport) -> f64,
) -> MetricSummary {
    let all: Vec<f64> = rows.iter().map(|r| metric(r)).collect();
    let mut by_trial: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    let mut by_region: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for r in rows {
        by_trial.entry(r.trial).or_default().push(metric(r));
        by_region.entry(&r.region).or_default().push(metric(r));
    }
    let best_trial = by_trial
        .values()
        .map(|v| mean(v))
        .fold(f64::NEG_INFINITY, f64::max);
    let (best_region_id, best_region) = by_region
        .iter()
        .map(|(k, v)| (k.to_string(), mean(v)))
        .fold((String::new(), f64::NEG_INFINITY), |acc, cur| {
            if cur.1 > acc.1 {
                cur
            } else {
                acc
            }
        });
    MetricSummary {
        mean: mean(&all),
        median: median(&all),
        best_trial_of_region_average: best_trial,
        best_region,
        best_region_id,
    }
}

/// One summary per (band mode, method, label size), sorted by those keys.
pub fn summarize(reports: &[MetricsReport]) -> Vec<GroupSummary> {
    let mut groups: BTreeMap<(&str, &str, usize), Vec<&MetricsReport>> = BTreeMap::new();
    for r in reports {
        groups
            .entry((&r.band_mode, &r.method, r.labels_per_class))
            .or_default()
            .push(r);
    }
    groups
        .into_iter()
        .map(
            |((band_mode, method, labels_per_class), rows)| GroupSummary {
                band_mode: band_mode.into(),
                method: method.into(),
                labels_per_class,
                n: rows.len(),
                kappa: summarize_metric(&rows, |r| r.kappa),
                jaccard_macro: summarize_metric(&rows, |r| r.jaccard_macro),
                f1_macro: summarize_metric(&rows, |r| r.f1_macro),
            },
        )
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::LabelKind;

    fn worked() -> ConfusionMatrix {
        ConfusionMatrix::from_rows(&[vec![50, 10], vec![5, 35]]).unwrap()
    }

    #[test]
    fn worked_matrix_values() {
        let cm = worked();
        // p_o = 85/100, p_e = (60·55 + 40·45)/100² = 0.51.
        assert!((cohen_kappa(&cm) - 0.34 / 0.49).abs() < 1e-12);
        assert!((cohen_kappa(&cm) - 0.6939).abs() < 1e-4);
        assert!((jaccard_macro(&cm) - (50.0 / 65.0 + 0.7) / 2.0).abs() < 1e-12);
        assert!((jaccard_macro(&cm) - 0.7346).abs() < 1e-4);
        assert!((f1_macro(&cm) - (100.0 / 115.0 + 70.0 / 85.0) / 2.0).abs() < 1e-12);
        assert!((f1_macro(&cm) - 0.8466).abs() < 1e-4);
    }

    #[test]
    fn degenerate_kappa_rule() {
        let single = ConfusionMatrix::from_rows(&[vec![7, 0], vec![0, 0]]).unwrap();
        assert_eq!(cohen_kappa(&single), 1.0);
        let independent = ConfusionMatrix::from_rows(&[vec![6, 4], vec![3, 2]]).unwrap();
        assert!(cohen_kappa(&independent).abs() < 1e-12);
    }

    #[test]
    fn confusion_counts_by_hand() {
        let truth = LabelRaster::new(3, 1, LabelKind::State, vec![0, 1, NODATA]).unwrap();
        let pred = LabelRaster::new(3, 1, LabelKind::State, vec![0, 2, 3]).unwrap();
        let cm = confusion(&pred, &truth, &[]).unwrap();
        assert_eq!(cm.total(), 2);
        assert_eq!(cm.get(0, 0), 1);
        assert_eq!(cm.get(1, 2), 1);
        let cm = confusion(&pred, &truth, &[0, 1]).unwrap();
        assert_eq!(cm.total(), 0);
    }

    #[test]
    fn absent_classes_leave_the_macro_mean() {
        let cm =
            ConfusionMatrix::from_rows(&[vec![3, 0, 0], vec![0, 2, 0], vec![0, 0, 0]]).unwrap();
        assert_eq!(jaccard_per_class(&cm)[2], None);
        assert_eq!(jaccard_macro(&cm), 1.0);
        assert_eq!(f1_macro(&cm), 1.0);
    }

    #[test]
    fn sampling_caps_and_repeats() {
        let mut values = vec![0u8; 20];
        values[3] = 1;
        values[8] = 1;
        values[15] = 1;
        let truth = LabelRaster::new(
            20,
            1,
            LabelKind::Custom(vec!["a".into(), "b".into()]),
            values,
        )
        .unwrap();
        let s = sample_training(&truth, 100, 9).unwrap();
        assert_eq!(s.iter().filter(|&&p| truth.values[p] == 1).count(), 2);
        assert_eq!(s.iter().filter(|&&p| truth.values[p] == 0).count(), 16);
        assert_eq!(s, sample_training(&truth, 100, 9).unwrap());
    }

    #[test]
    fn sparse_class_is_named() {
        let truth = LabelRaster::new(
            3,
            1,
            LabelKind::Custom(vec!["a".into(), "b".into()]),
            vec![0, 0, 1],
        )
        .unwrap();
        let e = sample_training(&truth, 5, 0).unwrap_err();
        assert!(e.to_string().starts_with("class 1 "), "{e}");
    }

    #[test]
    fn heatmap_counts_and_colours() {
        let truth = LabelRaster::new(2, 1, LabelKind::State, vec![1, NODATA]).unwrap();
        let wrong = LabelRaster::new(2, 1, LabelKind::State, vec![2, 0]).unwrap();
        let right = LabelRaster::new(2, 1, LabelKind::State, vec![1, 0]).unwrap();
        let h = misclassification_heatmap(&[wrong, right.clone(), right], &truth).unwrap();
        assert_eq!(h.band_at(0), &[1.0, HEATMAP_NODATA]);
        assert_eq!(heat_colour(0.0, 10), [20, 30, 110]);
        assert_eq!(heat_colour(10.0, 10), [200, 20, 20]);
        assert_eq!(heat_colour(HEATMAP_NODATA, 10), [128, 128, 128]);
        assert!(heatmap_png_bytes(&h, 3).unwrap().starts_with(b"\x89PNG"));
    }

    #[test]
    fn csv_round_trip_and_summary() {
        let mut rows = Vec::new();
        for (region, k) in [("a", 0.5), ("b", 0.7)] {
            for trial in 0..3 {
                let mut r = MetricsReport::from_confusion(&worked());
                r.region = region.into();
                r.method = "nu_svm".into();
                r.band_mode = "SIX".into();
                r.labels_per_class = 10;
                r.trial = trial;
                r.kappa = k + trial as f64 * 0.1;
                rows.push(r);
            }
        }
        let csv = metrics_csv(&rows);
        let back = parse_metrics_csv(&csv).unwrap();
        assert_eq!(metrics_csv(&back), csv);
        let s = summarize(&rows);
        assert_eq!(s.len(), 1);
        assert!((s[0].kappa.median - 0.7).abs() < 1e-12);
        assert!((s[0].kappa.best_trial_of_region_average - 0.8).abs() < 1e-12);
        assert!((s[0].kappa.best_region - 0.8).abs() < 1e-12);
        assert_eq!(s[0].kappa.best_region_id, "b");
    }
}
