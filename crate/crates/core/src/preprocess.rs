//! Everything applied to a bi-temporal pair before labeling or training:
//! histogram matching, band selection, Lab lifting, stacking, and scaling.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{BandName, BiTemporalPair, Raster};

/// Which spectral bands feed the classifiers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum BandMode {
    Rgb,
    Six,
}

impl BandMode {
    pub fn bands(self) -> &'static [BandName] {
        match self {
            BandMode::Rgb => &BandName::RGB,
            BandMode::Six => &BandName::SIX,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            BandMode::Rgb => "RGB",
            BandMode::Six => "SIX",
        }
    }
}

/// Which date serves as the histogram-matching reference.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum MatchReference {
    T1,
    T2,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PreprocessConfig {
    pub band_mode: BandMode,
    pub lift: bool,
    pub match_reference: MatchReference,
    pub histogram_bins: usize,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            band_mode: BandMode::Six,
            lift: false,
            match_reference: MatchReference::T1,
            histogram_bins: 65536,
        }
    }
}

/// Remaps `source` so its empirical distribution follows `reference`.
///
/// Both bands are histogrammed on a shared grid of `bins` equal-width bins
/// spanning their joint range. Each source value is sent through the source
/// CDF (linear inside its bin) and then through the inverse reference CDF
/// (again linear inside a bin). Results are clamped to the reference range.
pub fn histogram_match(source: &[f32], reference: &[f32], bins: usize) -> Result<Vec<f32>> {
    if source.is_empty() || reference.is_empty() {
        return Err(Error::InvalidParameter(
            "histogram matching needs non-empty bands".into(),
        ));
    }
    if bins < 2 {
        return Err(Error::InvalidParameter(format!(
            "need at least 2 bins, got {bins}"
        )));
    }
    if source.iter().chain(reference).any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter(
            "histogram matching needs finite values".into(),
        ));
    }
    let (ref_min, ref_max) = min_max(reference);
    let (src_min, src_max) = min_max(source);
    let lo = ref_min.min(src_min);
    let hi = ref_max.max(src_max);
    if hi <= lo {
        return Ok(vec![ref_min as f32; source.len()]);
    }
    let width = (hi - lo) / bins as f64;
    let bin_of = |v: f64| (((v - lo) / width) as usize).min(bins - 1);

    let cdf = |values: &[f32]| {
        let mut hist = vec![0usize; bins];
        for &v in values {
            hist[bin_of(v as f64)] += 1;
        }
        let n = values.len() as f64;
        let mut acc = 0usize;
        let cum: Vec<f64> = hist
            .iter()
            .map(|&h| {
                acc += h;
                acc as f64 / n
            })
            .collect();
        (hist, cum)
    };
    let (src_hist, src_cdf) = cdf(source);
    let (ref_hist, ref_cdf) = cdf(reference);
    let n_src = source.len() as f64;
    let n_ref = reference.len() as f64;

    let matched = source
        .iter()
        .map(|&v| {
            let v = v as f64;
            let b = bin_of(v);
            let frac = ((v - lo) / width - b as f64).clamp(0.0, 1.0);
            let below = if b == 0 { 0.0 } else { src_cdf[b - 1] };
            let q = below + frac * src_hist[b] as f64 / n_src;
            // First reference bin whose cumulative mass strictly exceeds q.
            let j = ref_cdf.partition_point(|&c| c <= q);
            let out = if j >= bins {
                ref_max
            } else {
                let below = if j == 0 { 0.0 } else { ref_cdf[j - 1] };
                let mass = ref_hist[j] as f64 / n_ref;
                let t = ((q - below) / mass).clamp(0.0, 1.0);
                lo + (j as f64 + t) * width
            };
            out.clamp(ref_min, ref_max) as f32
        })
        .collect();
    Ok(matched)
}

fn min_max(values: &[f32]) -> (f64, f64) {
    values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v as f64), hi.max(v as f64))
        })
}

/// Matches every band of `source` to the same-named band of `reference`.
pub fn match_raster(source: &Raster, reference: &Raster, bins: usize) -> Result<Raster> {
    let mut out = source.clone();
    for (i, name) in source.bands().iter().enumerate() {
        let matched = histogram_match(source.band_at(i), reference.band(name)?, bins)?;
        out.band_at_mut(i).copy_from_slice(&matched);
    }
    Ok(out)
}

/// Matches the non-reference date of a pair to the reference date.
pub fn match_pair(
    pair: &BiTemporalPair,
    reference: MatchReference,
    bins: usize,
) -> Result<BiTemporalPair> {
    pair.check()?;
    let mut out = pair.clone();
    match reference {
        MatchReference::T1 => out.t2 = match_raster(&pair.t2, &pair.t1, bins)?,
        MatchReference::T2 => out.t1 = match_raster(&pair.t1, &pair.t2, bins)?,
    }
    Ok(out)
}

/// Keeps exactly the bands of `mode`, in canonical order.
pub fn select_bands(r: &Raster, mode: BandMode) -> Result<Raster> {
    let bands = mode
        .bands()
        .iter()
        .map(|b| Ok((b.clone(), r.band(b)?.to_vec())))
        .collect::<Result<Vec<_>>>()?;
    Raster::from_bands(r.width(), r.height(), bands)
}

fn srgb_to_linear(c: f64) -> f64 {
    if c <= 0.04045 {
        c / 12.92
    } else {
        ((c + 0.055) / 1.055).powf(2.4)
    }
}

// Linear sRGB to CIEXYZ under D65.
const RGB_TO_XYZ: [[f64; 3]; 3] = [
    [0.4124564, 0.3575761, 0.1804375],
    [0.2126729, 0.7151522, 0.0721750],
    [0.0193339, 0.1191920, 0.9503041],
];

fn lab_f(t: f64) -> f64 {
    const DELTA: f64 = 6.0 / 29.0;
    if t > DELTA * DELTA * DELTA {
        t.cbrt()
    } else {
        t / (3.0 * DELTA * DELTA) + 4.0 / 29.0
    }
}

/// Converts one sRGB triple (components clamped to [0, 1]) to CIELAB.
///
/// The reference white is the image of sRGB white under the conversion
/// matrix, so `(1, 1, 1)` lands exactly on `L = 100, a = b = 0`.
pub fn srgb_to_lab(rgb: [f64; 3]) -> [f64; 3] {
    let lin = rgb.map(|c| srgb_to_linear(c.clamp(0.0, 1.0)));
    let mut xyz = [0.0; 3];
    let mut white = [0.0; 3];
    for i in 0..3 {
        for j in 0..3 {
            xyz[i] += RGB_TO_XYZ[i][j] * lin[j];
            white[i] += RGB_TO_XYZ[i][j];
        }
    }
    let fx = lab_f(xyz[0] / white[0]);
    let fy = lab_f(xyz[1] / white[1]);
    let fz = lab_f(xyz[2] / white[2]);
    [116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)]
}

/// Converts the Red/Green/Blue bands to a three-band `[L, a, b]` raster.
pub fn rgb_to_lab(r: &Raster) -> Result<Raster> {
    let red = r.band(&BandName::Red)?;
    let green = r.band(&BandName::Green)?;
    let blue = r.band(&BandName::Blue)?;
    let n = r.pixel_count();
    let mut data = vec![0f32; 3 * n];
    for p in 0..n {
        let lab = srgb_to_lab([red[p] as f64, green[p] as f64, blue[p] as f64]);
        for (c, v) in lab.iter().enumerate() {
            data[c * n + p] = *v as f32;
        }
    }
    Raster::new(r.width(), r.height(), BandName::LAB.to_vec(), data)
}

/// Appends Lab channels, each affinely rescaled into [0, 1], to `r`.
pub fn lift(r: &Raster) -> Result<Raster> {
    if BandName::LAB.iter().any(|b| r.has_band(b)) {
        return Err(Error::AlreadyLifted);
    }
    let mut lab = rgb_to_lab(r)?;
    let scale = [
        (1.0 / 100.0, 0.0),
        (1.0 / 255.0, 128.0),
        (1.0 / 255.0, 128.0),
    ];
    for (c, (s, off)) in scale.iter().enumerate() {
        for v in lab.band_at_mut(c) {
            *v = ((*v as f64 + off) * s) as f32;
        }
    }
    r.concat(&lab)
}

/// Band-wise concatenation of the two dates, suffixing names with `_t1`/`_t2`.
pub fn stack_bitemporal(pair: &BiTemporalPair) -> Result<Raster> {
    pair.check()?;
    let t1 = pair
        .t1
        .renamed(pair.t1.bands().iter().map(|b| b.suffixed("t1")).collect())?;
    let t2 = pair
        .t2
        .renamed(pair.t2.bands().iter().map(|b| b.suffixed("t2")).collect())?;
    t1.concat(&t2)
}

fn rescale(values: &mut [f32], lo: f64, hi: f64) {
    if hi > lo {
        for v in values {
            *v = ((*v as f64 - lo) / (hi - lo)) as f32;
        }
    } else {
        values.fill(0.5);
    }
}

/// Min-max scales each band independently into [0, 1]; constant bands become 0.5.
pub fn normalize(r: &Raster) -> Raster {
    let mut out = r.clone();
    for i in 0..out.band_count() {
        let (lo, hi) = min_max(out.band_at(i));
        rescale(out.band_at_mut(i), lo, hi);
    }
    out
}

/// Like [`normalize`], but bands of a stack that share a base name (e.g.
/// `Red_t1` and `Red_t2`) share one min/max so the dates stay comparable.
pub fn normalize_stack(r: &Raster) -> Raster {
    let key = |b: &BandName| match b.split_suffix() {
        Some((base, _)) => base,
        None => b.clone(),
    };
    let mut out = r.clone();
    let keys: Vec<BandName> = r.bands().iter().map(key).collect();
    for (i, k) in keys.iter().enumerate() {
        let (lo, hi) = keys
            .iter()
            .enumerate()
            .filter(|(_, other)| *other == k)
            .map(|(j, _)| min_max(r.band_at(j)))
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), (c, d)| {
                (a.min(c), b.max(d))
            });
        rescale(out.band_at_mut(i), lo, hi);
    }
    out
}

/// Match, select, optionally lift, stack, and normalize a pair into one feature raster.
pub fn prepare_features(pair: &BiTemporalPair, cfg: &PreprocessConfig) -> Result<Raster> {
    pair.check()?;
    let selected = BiTemporalPair {
        t1: select_bands(&pair.t1, cfg.band_mode)?,
        t2: select_bands(&pair.t2, cfg.band_mode)?,
        t1_date: pair.t1_date.clone(),
        t2_date: pair.t2_date.clone(),
    };
    let mut matched = match_pair(&selected, cfg.match_reference, cfg.histogram_bins)?;
    if cfg.lift {
        matched.t1 = lift(&matched.t1)?;
        matched.t2 = lift(&matched.t2)?;
    }
    Ok(normalize_stack(&stack_bitemporal(&matched)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn six_band(w: usize, h: usize) -> Raster {
        let n = w * h;
        let bands = BandName::SIX
            .iter()
            .enumerate()
            .map(|(b, name)| {
                (
                    name.clone(),
                    (0..n).map(|p| (p + b) as f32 / 10.0).collect(),
                )
            })
            .collect();
        Raster::from_bands(w, h, bands).unwrap()
    }

    #[test]
    fn identity_match_moves_no_pixel_more_than_one_bin() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x: Vec<f32> = (0..5000).map(|_| rng.random::<f32>() * 0.4).collect();
        let m = histogram_match(&x, &x, 256).unwrap();
        let (lo, hi) = min_max(&x);
        let tol = (hi - lo) / 256.0;
        for (a, b) in x.iter().zip(&m) {
            assert!(((a - b) as f64).abs() <= tol + 1e-7);
        }
    }

    #[test]
    fn offset_source_maps_back_onto_reference() {
        // Oracle: explicit ECDF inversion, i.e. the i-th smallest source value
        // goes to the i-th smallest reference value.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let reference: Vec<f32> = (0..1000).map(|_| rng.random::<f32>()).collect();
        let source: Vec<f32> = reference.iter().map(|v| v + 0.3).collect();
        let matched = histogram_match(&source, &reference, 65536).unwrap();
        let mut order: Vec<usize> = (0..source.len()).collect();
        order.sort_by(|&a, &b| source[a].total_cmp(&source[b]));
        let mut sorted_ref = reference.clone();
        sorted_ref.sort_by(f32::total_cmp);
        let bin = 1.3 / 65536.0;
        for (rank, &i) in order.iter().enumerate() {
            assert!((matched[i] - sorted_ref[rank]).abs() as f64 <= 2.0 * bin + 1e-6);
            // Reference equals source - 0.3 exactly here.
            assert!((matched[i] - (source[i] - 0.3)).abs() as f64 <= 2.0 * bin + 1e-6);
        }
    }

    #[test]
    fn constant_source_maps_to_one_value() {
        let reference: Vec<f32> = (0..100).map(|i| i as f32 / 100.0).collect();
        let m = histogram_match(&[0.42; 50], &reference, 1024).unwrap();
        assert!(m.iter().all(|&v| v == m[0]));
        assert!(m[0] >= 0.0 && m[0] <= 0.99);
    }

    #[test]
    fn matching_rejects_degenerate_arguments() {
        assert!(histogram_match(&[], &[1.0], 10).is_err());
        assert!(histogram_match(&[1.0], &[1.0], 1).is_err());
    }

    #[test]
    fn select_bands_orders_canonically() {
        let r = six_band(2, 2);
        let rgb = select_bands(&r, BandMode::Rgb).unwrap();
        assert_eq!(rgb.bands(), &BandName::RGB);
        assert_eq!(
            rgb.band(&BandName::Blue).unwrap(),
            r.band(&BandName::Blue).unwrap()
        );
        let shuffled = Raster::from_bands(
            2,
            2,
            BandName::SIX
                .iter()
                .rev()
                .map(|b| (b.clone(), r.band(b).unwrap().to_vec()))
                .collect(),
        )
        .unwrap();
        assert_eq!(select_bands(&shuffled, BandMode::Six).unwrap(), r);
        let err = select_bands(&rgb, BandMode::Six).unwrap_err();
        assert_eq!(err.to_string(), "missing band NIR");
    }

    #[test]
    fn lab_reference_points() {
        let w = srgb_to_lab([1.0, 1.0, 1.0]);
        assert_abs_diff_eq!(w[0], 100.0, epsilon = 1e-6);
        assert_abs_diff_eq!(w[1], 0.0, epsilon = 1e-6);
        assert_abs_diff_eq!(w[2], 0.0, epsilon = 1e-6);
        assert_eq!(
            srgb_to_lab([0.0, 0.0, 0.0]).map(|v| v.abs() < 1e-12),
            [true; 3]
        );
        // Independent computation: 0.5 decodes to ((0.555)/1.055)^2.4 = 0.21404;
        // gray keeps Y/Yn at that value, L = 116 * 0.21404^(1/3) - 16.
        let g = srgb_to_lab([0.5, 0.5, 0.5]);
        let y: f64 = (0.555f64 / 1.055).powf(2.4);
        assert_abs_diff_eq!(g[0], 116.0 * y.cbrt() - 16.0, epsilon = 1e-9);
        assert_abs_diff_eq!(g[0], 53.39, epsilon = 0.01);
        assert_abs_diff_eq!(g[1], 0.0, epsilon = 1e-6);
        assert_abs_diff_eq!(g[2], 0.0, epsilon = 1e-6);
    }

    #[test]
    fn lift_appends_scaled_lab_once() {
        let r = select_bands(&six_band(3, 3), BandMode::Rgb).unwrap();
        let lifted = lift(&r).unwrap();
        assert_eq!(lifted.band_count(), 6);
        assert!(lifted
            .data()
            .iter()
            .all(|v| (-1e-6..=1.0 + 1e-6).contains(v)));
        assert!(matches!(lift(&lifted), Err(Error::AlreadyLifted)));
        assert_eq!(lift(&six_band(3, 3)).unwrap().band_count(), 9);
    }

    #[test]
    fn stacking_concatenates_and_suffixes() {
        let a = select_bands(&six_band(2, 3), BandMode::Rgb).unwrap();
        let pair = BiTemporalPair::new(a.clone(), a.clone(), "d1", "d2").unwrap();
        let s = stack_bitemporal(&pair).unwrap();
        assert_eq!(s.band_count(), 6);
        assert_eq!(s.bands()[0].as_str(), "Red_t1");
        assert_eq!(s.bands()[5].as_str(), "Blue_t2");
        assert_eq!(&s.data()[..a.data().len()], a.data());
        let six = six_band(2, 3);
        let pair = BiTemporalPair::new(six.clone(), six, "d1", "d2").unwrap();
        assert_eq!(stack_bitemporal(&pair).unwrap().band_count(), 12);
        let short = six_band(2, 2);
        let bad = BiTemporalPair {
            t1: six_band(2, 3),
            t2: short,
            t1_date: "d1".into(),
            t2_date: "d2".into(),
        };
        assert!(stack_bitemporal(&bad).is_err());
    }

    #[test]
    fn normalize_rules() {
        let r = Raster::new(
            3,
            1,
            vec![BandName::Red, BandName::Green, BandName::Blue],
            vec![0.0, 2.0, 4.0, 0.7, 0.7, 0.7, 0.0, 0.25, 1.0],
        )
        .unwrap();
        let n = normalize(&r);
        assert_eq!(n.band_at(0), &[0.0, 0.5, 1.0]);
        assert_eq!(n.band_at(1), &[0.5, 0.5, 0.5]);
        assert_eq!(n.band_at(2), r.band_at(2));
    }

    #[test]
    fn stack_normalization_shares_range_across_dates() {
        let t1 = Raster::new(2, 1, vec![BandName::Red], vec![0.0, 1.0]).unwrap();
        let t2 = Raster::new(2, 1, vec![BandName::Red], vec![1.0, 3.0]).unwrap();
        let s = stack_bitemporal(&BiTemporalPair::new(t1, t2, "a", "b").unwrap()).unwrap();
        let n = normalize_stack(&s);
        assert_eq!(n.band_at(0), &[0.0, 1.0 / 3.0]);
        assert_eq!(n.band_at(1), &[1.0 / 3.0, 1.0]);
    }
}
