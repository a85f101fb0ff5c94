//! Platt sigmoid calibration and pairwise coupling of binary probabilities.

/// Fits `P(y = +1 | f) = 1 / (1 + exp(a f + b))` to decision values by
/// Newton's method with backtracking, using prior-corrected targets
/// `(N₊ + 1) / (N₊ + 2)` and `1 / (N₋ + 2)`.
pub fn fit_platt(decision: &[f64], positive: &[bool]) -> (f64, f64) {
    const MAX_ITER: usize = 100;
    const MIN_STEP: f64 = 1e-10;
    const SIGMA: f64 = 1e-12;
    const EPS: f64 = 1e-5;

    let prior1 = positive.iter().filter(|&&p| p).count() as f64;
    let prior0 = positive.len() as f64 - prior1;
    let hi = (prior1 + 1.0) / (prior1 + 2.0);
    let lo = 1.0 / (prior0 + 2.0);
    let target: Vec<f64> = positive.iter().map(|&p| if p { hi } else { lo }).collect();

    let objective = |a: f64, b: f64| -> f64 {
        decision
            .iter()
            .zip(&target)
            .map(|(&f, &t)| {
                let z = f * a + b;
                if z >= 0.0 {
                    t * z + (-z).exp().ln_1p()
                } else {
                    (t - 1.0) * z + z.exp().ln_1p()
                }
            })
            .sum()
    };

    let mut a = 0.0;
    let mut b = ((prior0 + 1.0) / (prior1 + 1.0)).ln();
    let mut fval = objective(a, b);
    for _ in 0..MAX_ITER {
        let (mut h11, mut h22, mut h21, mut g1, mut g2) = (SIGMA, SIGMA, 0.0, 0.0, 0.0);
        for (&f, &t) in decision.iter().zip(&target) {
            let z = f * a + b;
            let (p, q) = if z >= 0.0 {
                let e = (-z).exp();
                (e / (1.0 + e), 1.0 / (1.0 + e))
            } else {
                let e = z.exp();
                (1.0 / (1.0 + e), e / (1.0 + e))
            };
            let d2 = p * q;
            h11 += f * f * d2;
            h22 += d2;
            h21 += f * d2;
            let d1 = t - p;
            g1 += f * d1;
            g2 += d1;
        }
        if g1.abs() < EPS && g2.abs() < EPS {
            break;
        }
        let det = h11 * h22 - h21 * h21;
        let da = -(h22 * g1 - h21 * g2) / det;
        let db = -(-h21 * g1 + h11 * g2) / det;
        let gd = g1 * da + g2 * db;
        let mut step = 1.0;
        while step >= MIN_STEP {
            let (na, nb) = (a + step * da, b + step * db);
            let nf = objective(na, nb);
            if nf < fval + 1e-4 * step * gd {
                a = na;
                b = nb;
                fval = nf;
                break;
            }
            step /= 2.0;
        }
        if step < MIN_STEP {
            break;
        }
    }
    (a, b)
}

/// Evaluates the fitted sigmoid without overflow.
pub fn platt_probability(decision: f64, a: f64, b: f64) -> f64 {
    let z = decision * a + b;
    if z >= 0.0 {
        let e = (-z).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + z.exp())
    }
}

/// Couples pairwise probabilities `r[i][j] ≈ P(i | i or j)` into one
/// class-probability vector by the fixed-point iteration minimizing
/// `Σ_i Σ_{j≠i} (r_ji p_i - r_ij p_j)²` over the simplex.
///
/// The result is renormalized so it sums to one.
pub fn couple_pairwise(r: &[Vec<f64>]) -> Vec<f64> {
    let k = r.len();
    if k == 1 {
        return vec![1.0];
    }
    if k == 2 {
        return vec![r[0][1], r[1][0]];
    }
    let mut q = vec![vec![0.0; k]; k];
    for t in 0..k {
        for j in 0..k {
            if j != t {
                q[t][t] += r[j][t] * r[j][t];
                q[t][j] = -r[j][t] * r[t][j];
            }
        }
    }
    let mut p = vec![1.0 / k as f64; k];
    let mut qp = vec![0.0; k];
    // Far tighter than the customary 0.005/k so coupled vectors are reproducible to many digits.
    let eps = 1e-12;
    for _ in 0..k.max(1000) {
        let mut pqp = 0.0;
        for t in 0..k {
            qp[t] = (0..k).map(|j| q[t][j] * p[j]).sum();
            pqp += p[t] * qp[t];
        }
        let max_error = qp.iter().map(|v| (v - pqp).abs()).fold(0.0, f64::max);
        if max_error < eps {
            break;
        }
        for t in 0..k {
            let diff = (-qp[t] + pqp) / q[t][t];
            p[t] += diff;
            pqp = (pqp + diff * (diff * q[t][t] + 2.0 * qp[t])) / ((1.0 + diff) * (1.0 + diff));
            for j in 0..k {
                qp[j] = (qp[j] + diff * q[t][j]) / (1.0 + diff);
                p[j] /= 1.0 + diff;
            }
        }
    }
    let total: f64 = p.iter().map(|v| v.max(0.0)).sum();
    p.iter().map(|v| v.max(0.0) / total).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn platt_fit_orders_probabilities_with_decision_values() {
        let dec = [-3.0, -2.0, -1.5, -0.2, 0.3, 1.0, 2.0, 2.5];
        let pos = [false, false, false, true, false, true, true, true];
        let (a, b) = fit_platt(&dec, &pos);
        assert!(a < 0.0);
        let p: Vec<f64> = dec.iter().map(|&f| platt_probability(f, a, b)).collect();
        assert!(p.windows(2).all(|w| w[0] < w[1]));
        assert!(p[0] < 0.2 && p[7] > 0.8);
    }

    #[test]
    fn uniform_pairwise_gives_uniform_vector() {
        for k in 2..6 {
            let r = vec![vec![0.5; k]; k];
            let p = couple_pairwise(&r);
            assert!(p.iter().all(|&v| (v - 1.0 / k as f64).abs() < 1e-15));
        }
    }

    #[test]
    fn two_classes_reduce_to_the_pair() {
        let r = vec![vec![0.0, 0.73], vec![0.27, 0.0]];
        assert_eq!(couple_pairwise(&r), vec![0.73, 0.27]);
    }

    #[test]
    fn consistent_pairwise_probabilities_are_recovered() {
        // r_ij = p_i / (p_i + p_j) is an exact fixed point.
        let truth = [0.6, 0.25, 0.1, 0.05];
        let r: Vec<Vec<f64>> = (0..4)
            .map(|i| {
                (0..4)
                    .map(|j| {
                        if i == j {
                            0.0
                        } else {
                            truth[i] / (truth[i] + truth[j])
                        }
                    })
                    .collect()
            })
            .collect();
        let p = couple_pairwise(&r);
        for (a, b) in p.iter().zip(truth) {
            assert!((a - b).abs() < 1e-9, "{p:?}");
        }
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
