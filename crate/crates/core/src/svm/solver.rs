//! SMO solver for the nu-SVM dual.
//!
//! With `Q_ij = y_i y_j K(x_i, x_j)` the problem is
//!
//! ```text
//! min  ½ αᵀ Q α
//! s.t. 0 ≤ α_i ≤ 1,   Σ_{y_i = +1} α_i = Σ_{y_i = -1} α_i = ν l / 2
//! ```
//!
//! The two equality constraints mean a working pair must share a label. Each
//! step picks the maximal violating index within a class and pairs it with
//! the partner giving the largest second-order decrease of the objective.

use super::kernel::Gram;

const TAU: f64 = 1e-12;

/// Solution of the unscaled dual.
#[derive(Clone, Debug)]
pub struct NuSolution {
    /// Dual variables in `[0, 1]`, summing to `ν l`.
    pub alpha: Vec<f64>,
    /// `Q α` at the solution.
    pub gradient: Vec<f64>,
    /// Offset in unscaled units; the decision function is `(Σ α_j y_j K_j(x) - rho) / r`.
    pub rho: f64,
    /// Margin scale; dividing by it puts the free support vectors on `y f(x) = 1`.
    pub r: f64,
    /// `½ αᵀ Q α`.
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Solves the nu-SVM dual on `gram` with labels `y ∈ {+1, -1}`.
///
/// Stops when the maximal KKT violation within each class drops below
/// `tolerance`, or after `max_iterations` pair updates.
pub fn solve_nu(
    gram: &mut dyn Gram,
    y: &[f64],
    nu: f64,
    tolerance: f64,
    max_iterations: usize,
) -> NuSolution {
    let l = y.len();
    assert_eq!(gram.size(), l);
    let mut alpha = vec![0.0; l];
    let mut remaining = [nu * l as f64 / 2.0; 2];
    for (a, &yi) in alpha.iter_mut().zip(y) {
        let side = usize::from(yi < 0.0);
        *a = remaining[side].min(1.0);
        remaining[side] -= *a;
    }

    let qd: Vec<f64> = (0..l).map(|i| gram.diag(i)).collect();
    let mut grad = vec![0.0; l];
    let mut row_i = vec![0.0; l];
    let mut row_j = vec![0.0; l];
    for i in 0..l {
        if alpha[i] > 0.0 {
            gram.row_into(i, &mut row_i);
            for t in 0..l {
                grad[t] += alpha[i] * y[i] * y[t] * row_i[t];
            }
        }
    }

    let mut iterations = 0;
    let mut converged = false;
    let mut row_p = vec![0.0; l];
    let mut row_n = vec![0.0; l];
    while iterations < max_iterations {
        let Some((i, j)) = select_pair(
            gram, y, &alpha, &grad, &qd, tolerance, &mut row_p, &mut row_n,
        ) else {
            converged = true;
            break;
        };
        iterations += 1;
        // The selected `i` is the violating index whose row was fetched during selection.
        if y[i] > 0.0 {
            row_i.copy_from_slice(&row_p);
        } else {
            row_i.copy_from_slice(&row_n);
        }
        gram.row_into(j, &mut row_j);

        let (old_i, old_j) = (alpha[i], alpha[j]);
        let mut quad = qd[i] + qd[j] - 2.0 * row_i[j];
        if quad <= 0.0 {
            quad = TAU;
        }
        let delta = (grad[i] - grad[j]) / quad;
        let sum = old_i + old_j;
        let mut ai = old_i - delta;
        let mut aj = old_j + delta;
        if sum > 1.0 {
            if ai > 1.0 {
                ai = 1.0;
                aj = sum - 1.0;
            }
        } else if aj < 0.0 {
            aj = 0.0;
            ai = sum;
        }
        if sum > 1.0 {
            if aj > 1.0 {
                aj = 1.0;
                ai = sum - 1.0;
            }
        } else if ai < 0.0 {
            ai = 0.0;
            aj = sum;
        }
        alpha[i] = ai;
        alpha[j] = aj;

        let (di, dj) = (ai - old_i, aj - old_j);
        for t in 0..l {
            grad[t] += y[t] * (y[i] * row_i[t] * di + y[j] * row_j[t] * dj);
        }
    }

    let (rho, r) = offsets(y, &alpha, &grad);
    let objective = 0.5 * alpha.iter().zip(&grad).map(|(a, g)| a * g).sum::<f64>();
    NuSolution {
        alpha,
        gradient: grad,
        rho,
        r,
        objective,
        iterations,
        converged,
    }
}

#[allow(clippy::too_many_arguments)]
fn select_pair(
    gram: &mut dyn Gram,
    y: &[f64],
    alpha: &[f64],
    grad: &[f64],
    qd: &[f64],
    tolerance: f64,
    row_p: &mut [f64],
    row_n: &mut [f64],
) -> Option<(usize, usize)> {
    let upper = |t: usize| alpha[t] >= 1.0;
    let lower = |t: usize| alpha[t] <= 0.0;

    let mut gmax_p = f64::NEG_INFINITY;
    let mut gmax_p_idx = None;
    let mut gmax_n = f64::NEG_INFINITY;
    let mut gmax_n_idx = None;
    for t in 0..y.len() {
        if y[t] > 0.0 {
            if !upper(t) && -grad[t] >= gmax_p {
                gmax_p = -grad[t];
                gmax_p_idx = Some(t);
            }
        } else if !lower(t) && grad[t] >= gmax_n {
            gmax_n = grad[t];
            gmax_n_idx = Some(t);
        }
    }
    if let Some(ip) = gmax_p_idx {
        gram.row_into(ip, row_p);
    }
    if let Some(in_) = gmax_n_idx {
        gram.row_into(in_, row_n);
    }

    let mut gmax_p2 = f64::NEG_INFINITY;
    let mut gmax_n2 = f64::NEG_INFINITY;
    let mut best = None;
    let mut best_obj = f64::INFINITY;
    for j in 0..y.len() {
        let (gain, quad) = if y[j] > 0.0 {
            if lower(j) {
                continue;
            }
            gmax_p2 = gmax_p2.max(grad[j]);
            let Some(ip) = gmax_p_idx else { continue };
            (gmax_p + grad[j], qd[ip] + qd[j] - 2.0 * row_p[j])
        } else {
            if upper(j) {
                continue;
            }
            gmax_n2 = gmax_n2.max(-grad[j]);
            let Some(in_) = gmax_n_idx else { continue };
            (gmax_n - grad[j], qd[in_] + qd[j] - 2.0 * row_n[j])
        };
        if gain > 0.0 {
            let obj = -(gain * gain) / if quad > 0.0 { quad } else { TAU };
            if obj <= best_obj {
                best_obj = obj;
                best = Some(j);
            }
        }
    }

    if (gmax_p + gmax_p2).max(gmax_n + gmax_n2) < tolerance {
        return None;
    }
    let j = best?;
    let i = if y[j] > 0.0 { gmax_p_idx? } else { gmax_n_idx? };
    Some((i, j))
}

/// Per-class offsets from the free variables (or the midpoint of the bounds
/// when a class has none); returns `(rho, r)` in unscaled units.
fn offsets(y: &[f64], alpha: &[f64], grad: &[f64]) -> (f64, f64) {
    let mut level = [0.0; 2];
    for (side, level) in level.iter_mut().enumerate() {
        let mut ub = f64::INFINITY;
        let mut lb = f64::NEG_INFINITY;
        let mut free_sum = 0.0;
        let mut free = 0usize;
        for t in (0..y.len()).filter(|&t| usize::from(y[t] < 0.0) == side) {
            if alpha[t] >= 1.0 {
                lb = lb.max(grad[t]);
            } else if alpha[t] <= 0.0 {
                ub = ub.min(grad[t]);
            } else {
                free += 1;
                free_sum += grad[t];
            }
        }
        *level = if free > 0 {
            free_sum / free as f64
        } else {
            (ub + lb) / 2.0
        };
    }
    ((level[0] - level[1]) / 2.0, (level[0] + level[1]) / 2.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::svm::kernel::{FullGram, KernelSpec};

    #[test]
    fn two_point_problem_has_closed_form() {
        // x = ±1 with a linear kernel: both α are ν·l/2 = 0.5 (ν = 0.5, l = 2).
        let x = vec![vec![1.0], vec![-1.0]];
        let y = [1.0, -1.0];
        let mut g = FullGram::new(&x, &KernelSpec::Linear);
        let s = solve_nu(&mut g, &y, 0.5, 1e-10, 1000);
        assert!(s.converged);
        assert_eq!(s.alpha, vec![0.5, 0.5]);
        // Q α = [0.5·1 + 0.5·1, ...] = [1, 1]; objective ½·(0.5 + 0.5) = 0.5.
        assert!((s.objective - 0.5).abs() < 1e-12);
        assert!(s.rho.abs() < 1e-12);
        assert!((s.r - 1.0).abs() < 1e-12);
    }

    #[test]
    fn equality_constraints_hold() {
        let x: Vec<Vec<f64>> = (0..20)
            .map(|i| vec![(i as f64 * 0.37).sin(), (i as f64 * 0.11).cos()])
            .collect();
        let y: Vec<f64> = (0..20)
            .map(|i| if i % 3 == 0 { 1.0 } else { -1.0 })
            .collect();
        let mut g = FullGram::new(&x, &KernelSpec::Rbf { gamma: 1.0 });
        let nu = 0.4;
        let s = solve_nu(&mut g, &y, nu, 1e-8, 100_000);
        assert!(s.converged);
        let pos: f64 = s
            .alpha
            .iter()
            .zip(&y)
            .filter(|(_, &y)| y > 0.0)
            .map(|(a, _)| a)
            .sum();
        let neg: f64 = s
            .alpha
            .iter()
            .zip(&y)
            .filter(|(_, &y)| y < 0.0)
            .map(|(a, _)| a)
            .sum();
        assert!((pos - nu * 10.0).abs() < 1e-9);
        assert!((neg - nu * 10.0).abs() < 1e-9);
        assert!(s.alpha.iter().all(|&a| (0.0..=1.0).contains(&a)));
    }
}
