use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A Mercer kernel on feature rows.
///
/// `Sum` builds composite kernels: each term applies its own kernel to a
/// contiguous slice of the feature vector and the results are combined with
/// nonnegative weights, which keeps the sum positive semidefinite.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum KernelSpec {
    Linear,
    Rbf { gamma: f64 },
    Sum { terms: Vec<KernelTerm> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelTerm {
    pub weight: f64,
    pub offset: usize,
    pub len: usize,
    pub kernel: KernelSpec,
}

impl KernelSpec {
    /// RBF with the default `gamma = 1 / dim`.
    pub fn rbf_for_dim(dim: usize) -> Self {
        KernelSpec::Rbf {
            gamma: 1.0 / dim.max(1) as f64,
        }
    }

    /// Evaluates the kernel; `x` and `y` must have the dimension the kernel expects.
    #[inline]
    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        match self {
            KernelSpec::Linear => x.iter().zip(y).map(|(a, b)| a * b).sum(),
            KernelSpec::Rbf { gamma } => {
                let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
                (-gamma * d2).exp()
            }
            KernelSpec::Sum { terms } => terms
                .iter()
                .filter(|t| t.weight != 0.0)
                .map(|t| {
                    let r = t.offset..t.offset + t.len;
                    t.weight * t.kernel.eval(&x[r.clone()], &y[r])
                })
                .sum(),
        }
    }

    /// Checks parameters against a feature dimension.
    pub fn validate(&self, dim: usize) -> Result<()> {
        match self {
            KernelSpec::Linear => Ok(()),
            KernelSpec::Rbf { gamma } if *gamma > 0.0 && gamma.is_finite() => Ok(()),
            KernelSpec::Rbf { gamma } => Err(Error::InvalidParameter(format!(
                "gamma must be positive, got {gamma}"
            ))),
            KernelSpec::Sum { terms } => {
                for t in terms {
                    if !(t.weight >= 0.0) {
                        return Err(Error::InvalidParameter(
                            "kernel weights must be nonnegative".into(),
                        ));
                    }
                    if t.offset + t.len > dim {
                        return Err(Error::DimensionMismatch(format!(
                            "kernel term covers features {}..{} of {dim}",
                            t.offset,
                            t.offset + t.len
                        )));
                    }
                    t.kernel.validate(t.len)?;
                }
                Ok(())
            }
        }
    }
}

/// Dimension-checked kernel evaluation.
pub fn kernel_eval(spec: &KernelSpec, x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} vs {} features",
            x.len(),
            y.len()
        )));
    }
    spec.validate(x.len())?;
    Ok(spec.eval(x, y))
}

/// Training sets up to this size get a precomputed Gram matrix.
pub const FULL_GRAM_LIMIT: usize = 8000;

/// Row access to a kernel matrix over a training set.
pub trait Gram {
    fn size(&self) -> usize;
    fn diag(&self, i: usize) -> f64;
    fn row_into(&mut self, i: usize, out: &mut [f64]);
}

pub struct FullGram {
    n: usize,
    k: Vec<f64>,
}

impl FullGram {
    pub fn new(x: &[Vec<f64>], kernel: &KernelSpec) -> Self {
        use rayon::prelude::*;
        let n = x.len();
        let k: Vec<f64> = (0..n)
            .into_par_iter()
            .flat_map_iter(|i| (0..n).map(move |j| (i, j)))
            .map(|(i, j)| kernel.eval(&x[i], &x[j]))
            .collect();
        FullGram { n, k }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.k[i * self.n + j]
    }
}

impl Gram for FullGram {
    fn size(&self) -> usize {
        self.n
    }

    fn diag(&self, i: usize) -> f64 {
        self.k[i * self.n + i]
    }

    fn row_into(&mut self, i: usize, out: &mut [f64]) {
        out.copy_from_slice(&self.k[i * self.n..(i + 1) * self.n]);
    }
}

/// Kernel rows computed on demand and kept in a least-recently-used cache.
pub struct CachedGram<'a> {
    x: &'a [Vec<f64>],
    kernel: &'a KernelSpec,
    diag: Vec<f64>,
    rows: HashMap<usize, (Vec<f64>, u64)>,
    capacity: usize,
    tick: u64,
}

impl<'a> CachedGram<'a> {
    pub fn new(x: &'a [Vec<f64>], kernel: &'a KernelSpec, capacity_rows: usize) -> Self {
        let diag = x.iter().map(|xi| kernel.eval(xi, xi)).collect();
        CachedGram {
            x,
            kernel,
            diag,
            rows: HashMap::new(),
            capacity: capacity_rows.max(2),
            tick: 0,
        }
    }
}

impl Gram for CachedGram<'_> {
    fn size(&self) -> usize {
        self.x.len()
    }

    fn diag(&self, i: usize) -> f64 {
        self.diag[i]
    }

    fn row_into(&mut self, i: usize, out: &mut [f64]) {
        self.tick += 1;
        if let Some((row, stamp)) = self.rows.get_mut(&i) {
            *stamp = self.tick;
            out.copy_from_slice(row);
            return;
        }
        if self.rows.len() >= self.capacity {
            if let Some(oldest) = self
                .rows
                .iter()
                .min_by_key(|(_, (_, s))| *s)
                .map(|(&k, _)| k)
            {
                self.rows.remove(&oldest);
            }
        }
        let xi = &self.x[i];
        let row: Vec<f64> = self.x.iter().map(|xj| self.kernel.eval(xi, xj)).collect();
        out.copy_from_slice(&row);
        self.rows.insert(i, (row, self.tick));
    }
}
