//! nu-SVM classification with calibrated multiclass probabilities.
//!
//! Binary problems are solved by [`solver::solve_nu`]; multiclass models
//! train one binary model per unordered class pair, calibrate each with a
//! Platt sigmoid, and couple the pairwise probabilities into one vector per
//! pixel.

pub mod calibration;
pub mod kernel;
mod persist;
pub mod solver;

pub use kernel::{kernel_eval, KernelSpec, KernelTerm};
pub use persist::{load_model, save_model};

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use calibration::{couple_pairwise, fit_platt, platt_probability};
use kernel::{CachedGram, FullGram, Gram, FULL_GRAM_LIMIT};

/// Pairwise probabilities are kept away from 0 and 1 before coupling.
const PROB_FLOOR: f64 = 1e-7;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Calibration {
    #[default]
    PlattPairwise,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SvmParams {
    /// Upper bound on the margin-error fraction, lower bound on the support-vector fraction.
    pub nu: f64,
    /// `None` means RBF with `gamma = 1 / feature_dim`.
    pub kernel: Option<KernelSpec>,
    /// KKT violation at which the solver stops.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Kernel rows kept in memory when the training set is too large for a full Gram matrix.
    pub cache_rows: usize,
    pub calibration: Calibration,
}

impl Default for SvmParams {
    fn default() -> Self {
        SvmParams {
            nu: 0.1,
            kernel: None,
            tolerance: 1e-4,
            max_iterations: 100_000,
            cache_rows: 2000,
            calibration: Calibration::PlattPairwise,
        }
    }
}

impl SvmParams {
    pub fn with_kernel(mut self, kernel: KernelSpec) -> Self {
        self.kernel = Some(kernel);
        self
    }

    pub fn with_nu(mut self, nu: f64) -> Self {
        self.nu = nu;
        self
    }

    pub fn resolved_kernel(&self, dim: usize) -> Result<KernelSpec> {
        let k = self
            .kernel
            .clone()
            .unwrap_or_else(|| KernelSpec::rbf_for_dim(dim));
        k.validate(dim)?;
        Ok(k)
    }

    fn check(&self) -> Result<()> {
        if !(self.nu > 0.0 && self.nu < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "nu must lie in (0, 1), got {}",
                self.nu
            )));
        }
        if !(self.tolerance > 0.0) || self.max_iterations == 0 {
            return Err(Error::InvalidParameter(
                "tolerance and max_iterations must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Largest feasible nu for a binary problem: `2 min(n₊, n₋) / n`.
const DEGENERATE_MARGIN: f64 = 1e-12;

pub fn nu_bound(n_pos: usize, n_neg: usize) -> f64 {
    2.0 * n_pos.min(n_neg) as f64 / (n_pos + n_neg) as f64
}

/// A trained two-class model. Positive decision values favour the `+1` class.
#[derive(Clone, Debug, PartialEq)]
pub struct BinaryModel {
    pub kernel: KernelSpec,
    pub support_vectors: Vec<Vec<f64>>,
    /// Signed dual coefficients `α_i y_i / r`, one per support vector.
    pub coef: Vec<f64>,
    pub rho: f64,
    pub platt_a: f64,
    pub platt_b: f64,
    /// Training-set indices of the support vectors.
    pub support_indices: Vec<usize>,
    /// Unscaled dual objective `½ αᵀ Q α`.
    pub dual_objective: f64,
    /// Solver margin scale `r`. At or below 1e-12 the margin is degenerate
    /// and `coef`/`rho` are left unscaled.
    pub margin_scale: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl BinaryModel {
    pub fn decision(&self, x: &[f64]) -> f64 {
        self.support_vectors
            .iter()
            .zip(&self.coef)
            .map(|(sv, c)| c * self.kernel.eval(sv, x))
            .sum::<f64>()
            - self.rho
    }

    /// Calibrated `P(+1 | x)`.
    pub fn probability(&self, x: &[f64]) -> f64 {
        platt_probability(self.decision(x), self.platt_a, self.platt_b)
    }

    /// True when the solution has zero margin (`r ≈ 0`), e.g. overlapping reduced hulls.
    pub fn is_degenerate(&self) -> bool {
        self.margin_scale <= DEGENERATE_MARGIN
    }
}

fn check_rows(x: &[Vec<f64>]) -> Result<usize> {
    let dim = x
        .first()
        .map(Vec::len)
        .ok_or_else(|| Error::InvalidParameter("empty training set".into()))?;
    if dim == 0 {
        return Err(Error::InvalidParameter("zero-dimensional features".into()));
    }
    if let Some(bad) = x.iter().position(|r| r.len() != dim) {
        return Err(Error::DimensionMismatch(format!(
            "row {bad} has {} features, expected {dim}",
            x[bad].len()
        )));
    }
    if x.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("non-finite feature value".into()));
    }
    Ok(dim)
}

/// Trains a binary nu-SVM on labels `y ∈ {+1, -1}`.
///
/// A solver that hits `max_iterations` still returns its model, with
/// `converged == false` and a logged warning.
pub fn train_binary(x: &[Vec<f64>], y: &[f64], params: &SvmParams) -> Result<BinaryModel> {
    params.check()?;
    let dim = check_rows(x)?;
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} rows but {} labels",
            x.len(),
            y.len()
        )));
    }
    if y.iter().any(|&v| v != 1.0 && v != -1.0) {
        return Err(Error::InvalidParameter(
            "binary labels must be +1 or -1".into(),
        ));
    }
    let n_pos = y.iter().filter(|&&v| v > 0.0).count();
    let n_neg = y.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleClass);
    }
    let bound = nu_bound(n_pos, n_neg);
    if params.nu > bound {
        return Err(Error::InfeasibleNu {
            nu: params.nu,
            bound,
            pair: "(+1, -1)".into(),
        });
    }
    let kernel = params.resolved_kernel(dim)?;
    let sol = if x.len() <= FULL_GRAM_LIMIT {
        let mut g = FullGram::new(x, &kernel);
        solver::solve_nu(
            &mut g as &mut dyn Gram,
            y,
            params.nu,
            params.tolerance,
            params.max_iterations,
        )
    } else {
        let mut g = CachedGram::new(x, &kernel, params.cache_rows);
        solver::solve_nu(
            &mut g as &mut dyn Gram,
            y,
            params.nu,
            params.tolerance,
            params.max_iterations,
        )
    };
    if !sol.converged {
        log::warn!(
            "nu-SVM stopped after {} iterations without reaching tolerance {}",
            sol.iterations,
            params.tolerance
        );
    }
    let r = if sol.r > DEGENERATE_MARGIN {
        sol.r
    } else {
        log::warn!(
            "degenerate margin (r = {}); decision values left unscaled",
            sol.r
        );
        1.0
    };

    // Training decision values come straight from the gradient: y_i G_i = Σ_j α_j y_j K_ij.
    let decision: Vec<f64> = sol
        .gradient
        .iter()
        .zip(y)
        .map(|(g, yi)| (yi * g - sol.rho) / r)
        .collect();
    let positive: Vec<bool> = y.iter().map(|&v| v > 0.0).collect();
    let (platt_a, platt_b) = fit_platt(&decision, &positive);

    let support_indices: Vec<usize> = (0..x.len()).filter(|&i| sol.alpha[i] > 0.0).collect();
    Ok(BinaryModel {
        kernel,
        support_vectors: support_indices.iter().map(|&i| x[i].clone()).collect(),
        coef: support_indices
            .iter()
            .map(|&i| sol.alpha[i] * y[i] / r)
            .collect(),
        rho: sol.rho / r,
        platt_a,
        platt_b,
        support_indices,
        dual_objective: sol.objective,
        margin_scale: sol.r,
        iterations: sol.iterations,
        converged: sol.converged,
    })
}

/// One-vs-one multiclass nu-SVM.
#[derive(Clone, Debug, PartialEq)]
pub struct MulticlassModel {
    /// Sorted class codes.
    pub classes: Vec<u8>,
    /// Binary models for pairs `(i, j)`, `i < j`, in lexicographic order;
    /// class `classes[i]` is the positive side.
    pub pairwise: Vec<BinaryModel>,
    pub dim: usize,
    pub params: SvmParams,
}

/// Index pairs `(i, j)` with `i < j < k`, in the order pairwise models are stored.
pub fn class_pairs(k: usize) -> Vec<(usize, usize)> {
    (0..k)
        .flat_map(|i| (i + 1..k).map(move |j| (i, j)))
        .collect()
}

/// Trains one binary model per class pair on that pair's samples.
pub fn train_multiclass(
    x: &[Vec<f64>],
    labels: &[u8],
    params: &SvmParams,
) -> Result<MulticlassModel> {
    params.check()?;
    let dim = check_rows(x)?;
    if x.len() != labels.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} rows but {} labels",
            x.len(),
            labels.len()
        )));
    }
    let mut classes = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    if classes.len() < 2 {
        return Err(Error::SingleClass);
    }
    let count = |c: u8| labels.iter().filter(|&&l| l == c).count();
    let pairs = class_pairs(classes.len());
    for &(i, j) in &pairs {
        let bound = nu_bound(count(classes[i]), count(classes[j]));
        if params.nu > bound {
            return Err(Error::InfeasibleNu {
                nu: params.nu,
                bound,
                pair: format!("({}, {})", classes[i], classes[j]),
            });
        }
    }
    let pairwise = pairs
        .par_iter()
        .map(|&(i, j)| {
            let (a, b) = (classes[i], classes[j]);
            let idx: Vec<usize> = (0..labels.len())
                .filter(|&t| labels[t] == a || labels[t] == b)
                .collect();
            let xs: Vec<Vec<f64>> = idx.iter().map(|&t| x[t].clone()).collect();
            let ys: Vec<f64> = idx
                .iter()
                .map(|&t| if labels[t] == a { 1.0 } else { -1.0 })
                .collect();
            train_binary(&xs, &ys, params)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MulticlassModel {
        classes,
        pairwise,
        dim,
        params: params.clone(),
    })
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

impl MulticlassModel {
    /// Matrix `r[i][j] = P(class i | class i or j, x)` from the calibrated pairs.
    pub fn pairwise_probabilities(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let k = self.classes.len();
        let mut r = vec![vec![0.0; k]; k];
        for ((i, j), m) in class_pairs(k).into_iter().zip(&self.pairwise) {
            let p = m.probability(x).clamp(PROB_FLOOR, 1.0 - PROB_FLOOR);
            r[i][j] = p;
            r[j][i] = 1.0 - p;
        }
        r
    }

    pub fn probabilities(&self, x: &[f64]) -> Vec<f64> {
        couple_pairwise(&self.pairwise_probabilities(x))
    }

    fn check_dim(&self, rows: &[Vec<f64>]) -> Result<()> {
        match rows.iter().position(|r| r.len() != self.dim) {
            Some(bad) => Err(Error::DimensionMismatch(format!(
                "pixel {bad} has {} features, model expects {}",
                rows[bad].len(),
                self.dim
            ))),
            None => Ok(()),
        }
    }

    /// Class-probability vector for every row, in the order of `classes`.
    pub fn predict_probabilities(&self, rows: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        self.check_dim(rows)?;
        let shared = self.pairwise.windows(2).all(|w| w[0].kernel == w[1].kernel);
        if !shared || self.pairwise.is_empty() {
            return Ok(rows.par_iter().map(|x| self.probabilities(x)).collect());
        }
        // Pairs share training points, so each distinct support vector is evaluated once per row.
        let mut union: Vec<&[f64]> = Vec::new();
        let mut slot: HashMap<Vec<u64>, usize> = HashMap::new();
        let maps: Vec<Vec<usize>> = self
            .pairwise
            .iter()
            .map(|m| {
                m.support_vectors
                    .iter()
                    .map(|sv| {
                        *slot
                            .entry(sv.iter().map(|v| v.to_bits()).collect())
                            .or_insert_with(|| {
                                union.push(sv);
                                union.len() - 1
                            })
                    })
                    .collect()
            })
            .collect();
        let kernel = &self.pairwise[0].kernel;
        let k = self.classes.len();
        let pairs = class_pairs(k);
        Ok(rows
            .par_iter()
            .map_init(
                || vec![0.0; union.len()],
                |kv, x| {
                    for (v, sv) in kv.iter_mut().zip(&union) {
                        *v = kernel.eval(sv, x);
                    }
                    let mut r = vec![vec![0.0; k]; k];
                    for ((&(i, j), m), map) in pairs.iter().zip(&self.pairwise).zip(&maps) {
                        let f =
                            m.coef.iter().zip(map).map(|(c, &s)| c * kv[s]).sum::<f64>() - m.rho;
                        let p = platt_probability(f, m.platt_a, m.platt_b)
                            .clamp(PROB_FLOOR, 1.0 - PROB_FLOOR);
                        r[i][j] = p;
                        r[j][i] = 1.0 - p;
                    }
                    couple_pairwise(&r)
                },
            )
            .collect())
    }

    pub fn predict_tensor(
        &self,
        rows: &[Vec<f64>],
        width: usize,
        height: usize,
    ) -> Result<ProbabilityTensor> {
        if rows.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "{} rows for a {width}x{height} image",
                rows.len()
            )));
        }
        let probs = self.predict_probabilities(rows)?;
        Ok(ProbabilityTensor {
            width,
            height,
            classes: self.classes.clone(),
            values: probs.into_iter().flatten().collect(),
        })
    }

    /// Most probable class code per row; ties go to the lowest code.
    pub fn predict_labels(&self, rows: &[Vec<f64>]) -> Result<Vec<u8>> {
        Ok(self
            .predict_probabilities(rows)?
            .iter()
            .map(|p| self.classes[argmax(p)])
            .collect())
    }
}

/// Per-pixel class-probability vectors, stored pixel-major.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbabilityTensor {
    pub width: usize,
    pub height: usize,
    /// Class code of each channel.
    pub classes: Vec<u8>,
    pub values: Vec<f64>,
}

impl ProbabilityTensor {
    pub fn k(&self) -> usize {
        self.classes.len()
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn pixel(&self, p: usize) -> &[f64] {
        let k = self.k();
        &self.values[p * k..(p + 1) * k]
    }

    /// Every vector nonnegative and summing to one within `tol`.
    pub fn validate(&self, tol: f64) -> Result<()> {
        if self.values.len() != self.pixel_count() * self.k() {
            return Err(Error::SizeMismatch {
                expected: self.pixel_count() * self.k(),
                found: self.values.len(),
            });
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("non-finite probability".into()));
        }
        for p in 0..self.pixel_count() {
            let v = self.pixel(p);
            let sum: f64 = v.iter().sum();
            if v.iter().any(|&x| x < -tol) || (sum - 1.0).abs() > tol {
                return Err(Error::InvalidParameter(format!(
                    "pixel {p} is not a probability vector"
                )));
            }
        }
        Ok(())
    }

    /// Class code of the most probable channel at every pixel.
    pub fn argmax_codes(&self) -> Vec<u8> {
        (0..self.pixel_count())
            .map(|p| self.classes[argmax(self.pixel(p))])
            .collect()
    }

    /// One float band per class, named `p<code>`, for the raster format.
    pub fn to_raster(&self) -> Result<crate::raster::Raster> {
        let n = self.pixel_count();
        let k = self.k();
        let mut data = vec![0f32; n * k];
        for p in 0..n {
            for c in 0..k {
                data[c * n + p] = self.values[p * k + c] as f32;
            }
        }
        let bands = self
            .classes
            .iter()
            .map(|c| crate::raster::BandName::Tagged(format!("p{c}")))
            .collect();
        crate::raster::Raster::new(self.width, self.height, bands, data)
    }

    /// Inverse of [`ProbabilityTensor::to_raster`]; vectors are renormalized after the `f32` round trip.
    pub fn from_raster(r: &crate::raster::Raster) -> Result<Self> {
        let classes = r
            .bands()
            .iter()
            .map(|b| {
                b.as_str()
                    .strip_prefix('p')
                    .and_then(|c| c.parse::<u8>().ok())
                    .ok_or_else(|| {
                        Error::InvalidParameter(format!("band {b} is not a class probability"))
                    })
            })
            .collect::<Result<Vec<u8>>>()?;
        let n = r.pixel_count();
        let k = classes.len();
        let mut values = vec![0.0; n * k];
        for p in 0..n {
            let mut sum = 0.0;
            for c in 0..k {
                let v = r.band_at(c)[p].max(0.0) as f64;
                values[p * k + c] = v;
                sum += v;
            }
            for c in 0..k {
                values[p * k + c] = if sum > 0.0 {
                    values[p * k + c] / sum
                } else {
                    1.0 / k as f64
                };
            }
        }
        Ok(ProbabilityTensor {
            width: r.width(),
            height: r.height(),
            classes,
            values,
        })
    }
}
