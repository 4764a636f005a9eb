//! Non-negative least squares (Lawson–Hanson active set), solved through the
//! normal equations so that tall systems only cost one Gram product.

use nalgebra::{DMatrix, DVector};

/// Solves `min ‖A x − b‖₂` subject to `x ≥ 0`.
pub fn nnls(a: &DMatrix<f64>, b: &DVector<f64>, max_iter: usize) -> DVector<f64> {
    let at = a.transpose();
    nnls_gram(&(&at * a), &(&at * b), max_iter)
}

/// Same problem given the Gram matrix `AᵀA` and `Aᵀb`.
pub fn nnls_gram(gram: &DMatrix<f64>, atb: &DVector<f64>, max_iter: usize) -> DVector<f64> {
    let n = gram.ncols();
    let mut x = DVector::zeros(n);
    let mut passive = vec![false; n];
    let tol = 1e-12 * gram.amax().max(1.0) * (n as f64);

    for _ in 0..max_iter {
        let w = atb - gram * &x;
        let candidate = (0..n)
            .filter(|&j| !passive[j])
            .max_by(|&i, &j| w[i].total_cmp(&w[j]));
        let Some(j) = candidate else { break };
        if w[j] <= tol {
            break;
        }
        passive[j] = true;

        loop {
            let idx: Vec<usize> = (0..n).filter(|&j| passive[j]).collect();
            if idx.is_empty() {
                break;
            }
            let z_p = solve_subset(gram, atb, &idx);
            if z_p.iter().all(|v| *v > 0.0) {
                x.fill(0.0);
                for (k, &j) in idx.iter().enumerate() {
                    x[j] = z_p[k];
                }
                break;
            }
            // Step back toward the feasible region; at least one variable leaves.
            let mut alpha = f64::INFINITY;
            let mut leaving = idx[0];
            for (k, &j) in idx.iter().enumerate() {
                if z_p[k] <= 0.0 {
                    let step = x[j] / (x[j] - z_p[k]);
                    if step < alpha {
                        alpha = step;
                        leaving = j;
                    }
                }
            }
            for (k, &j) in idx.iter().enumerate() {
                x[j] += alpha * (z_p[k] - x[j]);
                if x[j] <= 0.0 || j == leaving {
                    x[j] = 0.0;
                    passive[j] = false;
                }
            }
        }
    }
    x
}

fn solve_subset(gram: &DMatrix<f64>, atb: &DVector<f64>, idx: &[usize]) -> DVector<f64> {
    let k = idx.len();
    let g = DMatrix::from_fn(k, k, |r, c| gram[(idx[r], idx[c])]);
    let rhs = DVector::from_fn(k, |r, _| atb[idx[r]]);
    if let Some(ch) = g.clone().cholesky() {
        let z = ch.solve(&rhs);
        if z.iter().all(|v| v.is_finite()) {
            return z;
        }
    }
    let eps = 1e-14 * g.amax().max(1e-300);
    g.svd(true, true)
        .solve(&rhs, eps)
        .unwrap_or_else(|_| DVector::zeros(k))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unconstrained_solution_when_positive() {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        let x_true = DVector::from_vec(vec![0.5, 2.0]);
        let b = &a * &x_true;
        let x = nnls(&a, &b, 100);
        assert!((x - x_true).norm() < 1e-12);
    }

    #[test]
    fn clamps_negative_component() {
        // unconstrained optimum is (2, -1); constrained optimum has x2 = 0
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        let b = DVector::from_vec(vec![2.0, -1.0]);
        let x = nnls(&a, &b, 100);
        assert!((x[0] - 2.0).abs() < 1e-12);
        assert_eq!(x[1], 0.0);
    }

    #[test]
    fn kkt_conditions_hold_on_random_problem() {
        let a = DMatrix::from_fn(12, 6, |i, j| ((i * 7 + j * 3) as f64 * 0.37).sin());
        let b = DVector::from_fn(12, |i, _| ((i as f64) * 0.9).cos());
        let x = nnls(&a, &b, 200);
        let w = a.transpose() * (&b - &a * &x);
        for j in 0..6 {
            assert!(x[j] >= 0.0);
            if x[j] > 0.0 {
                assert!(w[j].abs() < 1e-9, "gradient {} on active {j}", w[j]);
            } else {
                assert!(w[j] < 1e-9);
            }
        }
    }
}
