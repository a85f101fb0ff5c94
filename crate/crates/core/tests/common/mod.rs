//! Independent reference computations shared by the property tests and the
//! acceptance harness. Nothing here calls into the code under test except
//! for plain data types.

#![allow(dead_code, clippy::needless_range_loop)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Textbook metrics from a k×k count matrix (rows truth, columns prediction).
pub struct TextbookMetrics {
    pub kappa: f64,
    pub jaccard: Vec<Option<f64>>,
    pub f1: Vec<Option<f64>>,
    pub jaccard_macro: f64,
    pub f1_macro: f64,
}

pub fn textbook_metrics(m: &[Vec<u64>]) -> TextbookMetrics {
    let k = m.len();
    let n: f64 = m.iter().flatten().map(|&v| v as f64).sum();
    let row = |i: usize| m[i].iter().map(|&v| v as f64).sum::<f64>();
    let col = |j: usize| m.iter().map(|r| r[j] as f64).sum::<f64>();
    let diag: f64 = (0..k).map(|i| m[i][i] as f64).sum();
    let chance: f64 = (0..k).map(|i| row(i) * col(i)).sum();
    // κ = (N·Σn_ii − Σ r_i c_i) / (N² − Σ r_i c_i)
    let kappa = if n == 0.0 {
        0.0
    } else if n * n == chance {
        if diag == n {
            1.0
        } else {
            0.0
        }
    } else {
        (n * diag - chance) / (n * n - chance)
    };
    let mut jaccard = Vec::new();
    let mut f1 = Vec::new();
    for i in 0..k {
        let tp = m[i][i] as f64;
        let fn_ = row(i) - tp;
        let fp = col(i) - tp;
        if row(i) + col(i) == 0.0 {
            jaccard.push(None);
            f1.push(None);
        } else {
            jaccard.push(Some(tp / (tp + fp + fn_)));
            f1.push(Some(2.0 * tp / (2.0 * tp + fp + fn_)));
        }
    }
    let mean = |v: &[Option<f64>]| {
        let present: Vec<f64> = v.iter().flatten().copied().collect();
        if present.is_empty() {
            0.0
        } else {
            present.iter().sum::<f64>() / present.len() as f64
        }
    };
    TextbookMetrics {
        kappa,
        jaccard_macro: mean(&jaccard),
        f1_macro: mean(&f1),
        jaccard,
        f1,
    }
}

/// Random count matrix with some zero cells.
pub fn random_counts(rng: &mut ChaCha8Rng, k: usize) -> Vec<Vec<u64>> {
    (0..k)
        .map(|_| {
            (0..k)
                .map(|_| {
                    if rng.random_bool(0.2) {
                        0
                    } else {
                        rng.random_range(0..200)
                    }
                })
                .collect()
        })
        .collect()
}

/// Two Gaussian blobs in `dim` dimensions; labels ±1.
pub fn gaussian_blobs(
    seed: u64,
    n: usize,
    dim: usize,
    separation: f64,
) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut x = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let label = if i % 2 == 0 { 1.0 } else { -1.0 };
        let row: Vec<f64> = (0..dim)
            .map(|d| {
                normal.sample(&mut rng)
                    + if d == 0 {
                        label * separation / 2.0
                    } else {
                        0.0
                    }
            })
            .collect();
        x.push(row);
        y.push(label);
    }
    (x, y)
}

pub fn rbf(gamma: f64, a: &[f64], b: &[f64]) -> f64 {
    let d2: f64 = a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum();
    (-gamma * d2).exp()
}

/// Euclidean projection onto `{0 ≤ a ≤ 1, Σa = s}`: the result is
/// `clamp(v − θ, 0, 1)` and `Σ clamp(v − θ)` is piecewise linear in θ with
/// breakpoints at `v_i` and `v_i − 1`, so θ is found exactly between two
/// consecutive breakpoints.
fn project_capped(v: &[f64], s: f64) -> Vec<f64> {
    let total = |t: f64| v.iter().map(|&x| (x - t).clamp(0.0, 1.0)).sum::<f64>();
    let mut points: Vec<f64> = v.iter().flat_map(|&x| [x, x - 1.0]).collect();
    points.sort_by(f64::total_cmp);
    // total is non-increasing in θ; find consecutive breakpoints bracketing s.
    let mut theta = points[0];
    for w in points.windows(2) {
        let (a, b) = (total(w[0]), total(w[1]));
        if a >= s && s >= b {
            theta = if a == b {
                w[0]
            } else {
                w[0] + (a - s) / (a - b) * (w[1] - w[0])
            };
            break;
        }
    }
    v.iter().map(|&x| (x - theta).clamp(0.0, 1.0)).collect()
}

/// Minimum of `½ αᵀQα` over `0 ≤ α ≤ 1`, `Σ_{y=+1} α = Σ_{y=-1} α = ν l / 2`,
/// by accelerated projected gradient with adaptive restart.
pub fn nu_dual_qp(q: &[Vec<f64>], y: &[f64], nu: f64) -> f64 {
    let l = y.len();
    let s = nu * l as f64 / 2.0;
    let pos: Vec<usize> = (0..l).filter(|&i| y[i] > 0.0).collect();
    let neg: Vec<usize> = (0..l).filter(|&i| y[i] < 0.0).collect();
    let project = |v: &[f64]| {
        let mut out = vec![0.0; l];
        for idx in [&pos, &neg] {
            let part: Vec<f64> = idx.iter().map(|&i| v[i]).collect();
            for (&i, a) in idx.iter().zip(project_capped(&part, s)) {
                out[i] = a;
            }
        }
        out
    };
    let qv = |a: &[f64]| -> Vec<f64> {
        q.iter()
            .map(|r| r.iter().zip(a).map(|(x, y)| x * y).sum())
            .collect()
    };
    let f = |a: &[f64]| 0.5 * a.iter().zip(qv(a)).map(|(x, g)| x * g).sum::<f64>();
    let lips: f64 = q
        .iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
        .max(1e-12);

    let mut x = project(&vec![s / l as f64 * 2.0; l]);
    let mut z = x.clone();
    let mut t = 1.0f64;
    let mut fx = f(&x);
    let mut stalled = 0;
    for _ in 0..200_000 {
        let g = qv(&z);
        let step: Vec<f64> = z.iter().zip(&g).map(|(a, b)| a - b / lips).collect();
        let next = project(&step);
        let fn_ = f(&next);
        if fn_ > fx {
            // Restart momentum when the objective goes up.
            z = x.clone();
            t = 1.0;
            continue;
        }
        let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
        z = next
            .iter()
            .zip(&x)
            .map(|(a, b)| a + (t - 1.0) / t_next * (a - b))
            .collect();
        stalled = if fx - fn_ <= 1e-15 * fx.abs().max(1e-300) {
            stalled + 1
        } else {
            0
        };
        let done = stalled >= 500;
        x = next;
        fx = fn_;
        t = t_next;
        if done {
            break;
        }
    }
    fx
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations.
pub fn jacobi_eigenvalues(mut a: Vec<Vec<f64>>) -> Vec<f64> {
    let n = a.len();
    for _ in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum();
        if off < 1e-22 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    (0..n).map(|i| a[i][i]).collect()
}

/// Two-class smoothed-TV energy on a w×h grid where pixel `i` holds `(t_i, 1 − t_i)`.
pub fn two_class_energy(t: &[f64], p: &[f64], w: usize, h: usize, beta: f64, eps: f64) -> f64 {
    let mut e = 0.0;
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            // Both channels have the same squared deviation and gradient magnitude.
            e += beta * (t[i] - p[i]).powi(2);
            let gx = if x + 1 < w { t[i + 1] - t[i] } else { 0.0 };
            let gy = if y + 1 < h { t[i + w] - t[i] } else { 0.0 };
            e += 2.0 * (gx * gx + gy * gy + eps * eps).sqrt();
        }
    }
    e
}

/// Minimizes [`two_class_energy`] by damped Newton steps with exact
/// derivatives. The energy is smooth and strictly convex, and clamping to
/// `[min p, max p]` lowers both terms, so the minimizer is interior.
pub fn two_class_optimum(p: &[f64], w: usize, h: usize, beta: f64, eps: f64) -> Vec<f64> {
    let n = w * h;
    let energy = |t: &[f64]| two_class_energy(t, p, w, h, beta, eps);
    let mut t = p.to_vec();
    for _ in 0..200 {
        let mut g = vec![0.0; n];
        let mut hess = vec![vec![0.0; n]; n];
        for i in 0..n {
            g[i] += 2.0 * beta * (t[i] - p[i]);
            hess[i][i] += 2.0 * beta;
            let (x, y) = (i % w, i / w);
            // a = t[right] - t[i], b = t[down] - t[i] as sparse coefficient lists.
            let a: Vec<(usize, f64)> = if x + 1 < w {
                vec![(i + 1, 1.0), (i, -1.0)]
            } else {
                vec![]
            };
            let b: Vec<(usize, f64)> = if y + 1 < h {
                vec![(i + w, 1.0), (i, -1.0)]
            } else {
                vec![]
            };
            let av: f64 = a.iter().map(|&(j, c)| c * t[j]).sum();
            let bv: f64 = b.iter().map(|&(j, c)| c * t[j]).sum();
            let s = (av * av + bv * bv + eps * eps).sqrt();
            // φ = 2s; ∇φ = 2(a, b)/s; ∇²φ = 2/s (I − (a, b)(a, b)ᵀ/s²).
            let dir = [(&a, av), (&b, bv)];
            for (u, uv) in dir {
                for &(j, c) in u.iter() {
                    g[j] += 2.0 * uv / s * c;
                }
            }
            for (u, uv) in dir {
                for (v, vv) in dir {
                    let m = 2.0 / s
                        * ((if std::ptr::eq(u, v) { 1.0 } else { 0.0 }) - uv * vv / (s * s));
                    for &(j, cj) in u.iter() {
                        for &(k, ck) in v.iter() {
                            hess[j][k] += m * cj * ck;
                        }
                    }
                }
            }
        }
        if g.iter().map(|v| v.abs()).fold(0.0, f64::max) < 1e-13 {
            break;
        }
        let step = solve_linear(hess, g.iter().map(|v| -v).collect());
        let e0 = energy(&t);
        let mut scale = 1.0;
        loop {
            let cand: Vec<f64> = t.iter().zip(&step).map(|(a, d)| a + scale * d).collect();
            if energy(&cand) <= e0 || scale < 1e-12 {
                t = cand;
                break;
            }
            scale *= 0.5;
        }
    }
    t
}

/// Gaussian elimination with partial pivoting.
fn solve_linear(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for c in 0..n {
        let pivot = (c..n)
            .max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs()))
            .unwrap();
        a.swap(c, pivot);
        b.swap(c, pivot);
        for r in c + 1..n {
            let f = a[r][c] / a[c][c];
            for k in c..n {
                a[r][k] -= f * a[c][k];
            }
            b[r] -= f * b[c];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|k| a[r][k] * x[k]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    x
}

/// Two-sample Kolmogorov–Smirnov distance between empirical CDFs.
pub fn ks_distance(a: &[f32], b: &[f32]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f32::total_cmp);
    b.sort_by(f32::total_cmp);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < a.len() && j < b.len() {
        let v = a[i].min(b[j]);
        while i < a.len() && a[i] <= v {
            i += 1;
        }
        while j < b.len() && b[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
    }
    d
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
