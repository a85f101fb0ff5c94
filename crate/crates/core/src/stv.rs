//! Smoothed total-variation denoising of probability tensors.
//!
//! Minimizes
//!
//! ```text
//! E(u) = β/2 ‖u − p‖² + Σ_c Σ_x √(|∇u_c(x)|² + ε²)
//! ```
//!
//! over tensors whose pixel vectors lie on the probability simplex, with
//! forward differences and Neumann boundaries. Projected gradient with step
//! `1/L`, `L = β + 8/ε`, never increases `E`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{LabelKind, LabelRaster};
use crate::svm::ProbabilityTensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StvParams {
    pub beta: f64,
    pub epsilon: f64,
    /// `None` means `1 / L`.
    pub step: Option<f64>,
    pub max_iterations: usize,
    /// Stop when the relative decrease of `E` over one iteration falls below this.
    pub tolerance: f64,
}

impl Default for StvParams {
    fn default() -> Self {
        StvParams {
            beta: 2.0,
            epsilon: 1e-3,
            step: None,
            max_iterations: 2000,
            tolerance: 1e-6,
        }
    }
}

impl StvParams {
    pub fn lipschitz(&self) -> f64 {
        self.beta + 8.0 / self.epsilon
    }

    pub fn step_size(&self) -> f64 {
        self.step.unwrap_or_else(|| 1.0 / self.lipschitz())
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !positive(self.beta) || !positive(self.epsilon) || !(self.tolerance >= 0.0) {
            return Err(Error::InvalidParameter(
                "beta and epsilon must be positive".into(),
            ));
        }
        let step = self.step_size();
        if !positive(step) || step > 1.0 / self.lipschitz() * (1.0 + 1e-12) {
            return Err(Error::InvalidParameter(format!(
                "step {step} exceeds 1/L = {}",
                1.0 / self.lipschitz()
            )));
        }
        Ok(())
    }
}

/// Euclidean projection onto `{x ≥ 0, Σx = 1}` by sorting.
pub fn simplex_project(v: &[f64]) -> Vec<f64> {
    let mut out = v.to_vec();
    simplex_project_in_place(&mut out, &mut Vec::with_capacity(v.len()));
    out
}

fn simplex_project_in_place(v: &mut [f64], scratch: &mut Vec<f64>) {
    scratch.clear();
    scratch.extend_from_slice(v);
    scratch.sort_unstable_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (i, &s) in scratch.iter().enumerate() {
        cumsum += s;
        let t = (cumsum - 1.0) / (i + 1) as f64;
        if s - t > 0.0 {
            theta = t;
        }
    }
    for x in v.iter_mut() {
        *x = (*x - theta).max(0.0);
    }
}

/// `E(u)` for tensors laid out like [`ProbabilityTensor::values`].
pub fn stv_energy(u: &ProbabilityTensor, p: &ProbabilityTensor, params: &StvParams) -> f64 {
    let (w, h, k) = (u.width, u.height, u.k());
    let eps2 = params.epsilon * params.epsilon;
    let roots: Vec<f64> = (0..w * h * k)
        .map(|j| {
            let (i, c) = (j / k, j % k);
            let (x, y) = (i % w, i / w);
            let v = u.values[j];
            let gx = if x + 1 < w {
                u.values[(i + 1) * k + c] - v
            } else {
                0.0
            };
            let gy = if y + 1 < h {
                u.values[(i + w) * k + c] - v
            } else {
                0.0
            };
            (gx * gx + gy * gy + eps2).sqrt()
        })
        .collect();
    energy_from_roots(&u.values, &p.values, &roots, params.beta, w * k)
}

fn energy_from_roots(u: &[f64], p: &[f64], roots: &[f64], beta: f64, row: usize) -> f64 {
    let rows: Vec<f64> = u
        .par_chunks(row)
        .zip(p.par_chunks(row))
        .zip(roots.par_chunks(row))
        .map(|((u, p), r)| {
            u.iter()
                .zip(p)
                .zip(r)
                .map(|((a, b), r)| 0.5 * beta * (a - b) * (a - b) + r)
                .sum::<f64>()
        })
        .collect();
    // Sequential sum keeps the value independent of thread scheduling.
    rows.iter().sum()
}

/// Outcome of a denoising run.
#[derive(Clone, Debug)]
pub struct StvResult {
    pub tensor: ProbabilityTensor,
    pub iterations: usize,
    pub energy: f64,
}

/// Denoises `p`; see the module docs for the objective.
pub fn stv_denoise(p: &ProbabilityTensor, params: &StvParams) -> Result<ProbabilityTensor> {
    Ok(stv_denoise_with(p, params, |_, _, _| {})?.tensor)
}

/// Like [`stv_denoise`], calling `observe(iteration, iterate, energy)` for
/// every iterate, starting with iteration 0 for the input itself.
pub fn stv_denoise_with(
    p: &ProbabilityTensor,
    params: &StvParams,
    mut observe: impl FnMut(usize, &ProbabilityTensor, f64),
) -> Result<StvResult> {
    params.validate()?;
    if p.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("non-finite probability".into()));
    }
    if p.values.len() != p.pixel_count() * p.k() || p.k() == 0 {
        return Err(Error::SizeMismatch {
            expected: p.pixel_count() * p.k(),
            found: p.values.len(),
        });
    }
    let (w, h, k) = (p.width, p.height, p.k());
    let eps2 = params.epsilon * params.epsilon;
    let step = params.step_size();

    let mut u = p.clone();
    let mut roots = vec![0.0; w * h * k];
    let mut next = u.values.clone();
    let mut previous = f64::INFINITY;
    let mut iterations = 0;
    loop {
        // √(|∇u|² + ε²) per pixel and channel, reused for E(u) and the TV gradient.
        roots
            .par_chunks_mut(w * k)
            .enumerate()
            .for_each(|(y, row)| {
                for x in 0..w {
                    let i = y * w + x;
                    for c in 0..k {
                        let v = u.values[i * k + c];
                        let gx = if x + 1 < w {
                            u.values[(i + 1) * k + c] - v
                        } else {
                            0.0
                        };
                        let gy = if y + 1 < h {
                            u.values[(i + w) * k + c] - v
                        } else {
                            0.0
                        };
                        row[x * k + c] = (gx * gx + gy * gy + eps2).sqrt();
                    }
                }
            });
        let energy = energy_from_roots(&u.values, &p.values, &roots, params.beta, w * k);
        observe(iterations, &u, energy);
        let converged = previous - energy <= params.tolerance * energy.abs();
        previous = energy;
        if converged || iterations == params.max_iterations {
            break;
        }
        iterations += 1;
        next.par_chunks_mut(w * k).enumerate().for_each(|(y, row)| {
            let mut scratch = Vec::with_capacity(k);
            for x in 0..w {
                let i = y * w + x;
                for c in 0..k {
                    let at = |j: usize| u.values[j * k + c];
                    let v = at(i);
                    // Gradient of the TV term is −div(∇u / root).
                    let mut g = params.beta * (v - p.values[i * k + c]);
                    if x + 1 < w {
                        g -= (at(i + 1) - v) / roots[i * k + c];
                    }
                    if y + 1 < h {
                        g -= (at(i + w) - v) / roots[i * k + c];
                    }
                    if x > 0 {
                        g += (v - at(i - 1)) / roots[(i - 1) * k + c];
                    }
                    if y > 0 {
                        g += (v - at(i - w)) / roots[(i - w) * k + c];
                    }
                    row[x * k + c] = v - step * g;
                }
                simplex_project_in_place(&mut row[x * k..(x + 1) * k], &mut scratch);
            }
        });
        std::mem::swap(&mut u.values, &mut next);
    }
    Ok(StvResult {
        tensor: u,
        iterations,
        energy: previous,
    })
}

/// Most probable class per pixel as a label raster; ties go to the lowest code.
pub fn argmax_map(p: &ProbabilityTensor, kind: LabelKind) -> Result<LabelRaster> {
    LabelRaster::new(p.width, p.height, kind, p.argmax_codes())
}
