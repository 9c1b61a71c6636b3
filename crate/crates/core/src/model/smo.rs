//! Dual C-SVC solver: sequential minimal optimization with second-order
//! working-set selection.
//!
//! Minimizes `½ αᵀQα − eᵀα` subject to `0 ≤ α ≤ C`, `yᵀα = 0`, where
//! `Q_ij = y_i y_j K_ij`.

const TAU: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct SmoSolution {
    pub alpha: Vec<f64>,
    pub rho: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Dense symmetric kernel matrix, row-major.
pub(crate) struct Gram<'a> {
    pub n: usize,
    pub k: &'a [f64],
}

impl Gram<'_> {
    #[inline]
    fn at(&self, i: usize, j: usize) -> f64 {
        self.k[i * self.n + j]
    }
}

fn in_up(y: f64, a: f64, c: f64) -> bool {
    (y > 0.0 && a < c) || (y < 0.0 && a > 0.0)
}

fn in_low(y: f64, a: f64, c: f64) -> bool {
    (y > 0.0 && a > 0.0) || (y < 0.0 && a < c)
}

pub(crate) fn solve(gram: &Gram<'_>, y: &[f64], c: f64, eps: f64, max_iter: usize) -> SmoSolution {
    let n = y.len();
    debug_assert_eq!(gram.n, n);
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let mut iterations = 0;
    let mut converged = false;

    while iterations < max_iter {
        // i: maximal violator from the "up" set
        let mut gmax = f64::NEG_INFINITY;
        let mut i = usize::MAX;
        for t in 0..n {
            if in_up(y[t], alpha[t], c) {
                let v = -y[t] * grad[t];
                if v > gmax {
                    gmax = v;
                    i = t;
                }
            }
        }
        // j: largest second-order objective decrease from the "low" set
        let mut gmax2 = f64::NEG_INFINITY;
        let mut j = usize::MAX;
        let mut best = f64::INFINITY;
        if i != usize::MAX {
            let kii = gram.at(i, i);
            for t in 0..n {
                if !in_low(y[t], alpha[t], c) {
                    continue;
                }
                let yg = y[t] * grad[t];
                if yg > gmax2 {
                    gmax2 = yg;
                }
                let b = gmax + yg;
                if b > 0.0 {
                    let mut a = kii + gram.at(t, t) - 2.0 * gram.at(i, t);
                    if a <= 0.0 {
                        a = TAU;
                    }
                    let obj = -(b * b) / a;
                    if obj < best {
                        best = obj;
                        j = t;
                    }
                }
            }
        }
        if i == usize::MAX || j == usize::MAX || gmax + gmax2 < eps {
            converged = true;
            break;
        }
        iterations += 1;

        let (yi, yj) = (y[i], y[j]);
        let kij = gram.at(i, j);
        let (old_i, old_j) = (alpha[i], alpha[j]);
        let mut quad = gram.at(i, i) + gram.at(j, j) - 2.0 * kij;
        if quad <= 0.0 {
            quad = TAU;
        }
        if yi != yj {
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        alpha[i] = alpha[i].clamp(0.0, c);
        alpha[j] = alpha[j].clamp(0.0, c);

        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        if di != 0.0 || dj != 0.0 {
            for t in 0..n {
                grad[t] += y[t] * (yi * gram.at(i, t) * di + yj * gram.at(j, t) * dj);
            }
        }
    }

    let rho = compute_rho(y, &alpha, &grad, c);
    SmoSolution {
        alpha,
        rho,
        iterations,
        converged,
    }
}

/// Offset from free support vectors, or the midpoint of the feasible range
/// when none are free.
fn compute_rho(y: &[f64], alpha: &[f64], grad: &[f64], c: f64) -> f64 {
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut n_free, mut sum_free) = (0usize, 0.0);
    for t in 0..y.len() {
        let yg = y[t] * grad[t];
        if alpha[t] >= c {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            n_free += 1;
            sum_free += yg;
        }
    }
    if n_free > 0 {
        sum_free / n_free as f64
    } else if ub.is_finite() && lb.is_finite() {
        (ub + lb) / 2.0
    } else if ub.is_finite() {
        ub
    } else if lb.is_finite() {
        lb
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn linear_gram(x: &[[f64; 2]]) -> Vec<f64> {
        let n = x.len();
        let mut k = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                k[i * n + j] = x[i][0] * x[j][0] + x[i][1] * x[j][1];
            }
        }
        k
    }

    #[test]
    fn two_point_closed_form() {
        // Points at ±1 on a line: the max-margin solution has α = 0.5 each, ρ = 0.
        let x = [[1.0, 0.0], [-1.0, 0.0]];
        let k = linear_gram(&x);
        let s = solve(&Gram { n: 2, k: &k }, &[1.0, -1.0], 10.0, 1e-6, 1000);
        assert!(s.converged);
        assert!((s.alpha[0] - 0.5).abs() < 1e-9, "{:?}", s.alpha);
        assert!((s.alpha[1] - 0.5).abs() < 1e-9);
        assert!(s.rho.abs() < 1e-9);
    }

    #[test]
    fn kkt_conditions_hold() {
        let x = [[2.0, 2.0], [1.5, 3.0], [3.0, 1.0], [-1.0, -2.0], [-2.0, -1.0], [-0.5, -3.0], [0.2, 0.1]];
        let y = [1.0, 1.0, 1.0, -1.0, -1.0, -1.0, -1.0];
        let k = linear_gram(&x);
        let c = 1.0;
        let s = solve(&Gram { n: 7, k: &k }, &y, c, 1e-8, 100_000);
        assert!(s.converged);
        let eq: f64 = s.alpha.iter().zip(&y).map(|(a, y)| a * y).sum();
        assert!(eq.abs() < 1e-9);
        for t in 0..7 {
            let f: f64 = (0..7).map(|s_| s.alpha[s_] * y[s_] * k[s_ * 7 + t]).sum::<f64>() - s.rho;
            let m = y[t] * f;
            let a = s.alpha[t];
            assert!((0.0..=c).contains(&a));
            if a <= 0.0 {
                assert!(m >= 1.0 - 1e-5, "t={t} m={m}");
            } else if a >= c {
                assert!(m <= 1.0 + 1e-5, "t={t} m={m}");
            } else {
                assert!((m - 1.0).abs() < 1e-5, "t={t} m={m}");
            }
        }
    }
}
