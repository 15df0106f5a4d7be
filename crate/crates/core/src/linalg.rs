//! Small dense solvers used by the time stepper: the Thomas algorithm for
//! tridiagonal systems (1D) and a matrix-free BiCGStab for the 2D stencil.

use crate::{CoreError, Result};

/// Tridiagonal system `lower[i-1]·x[i-1] + diag[i]·x[i] + upper[i]·x[i+1] = rhs[i]`,
/// solved in place by the Thomas algorithm.
///
/// `lower` and `upper` have length `n - 1`.
pub fn solve_tridiagonal(
    lower: &[f64],
    diag: &[f64],
    upper: &[f64],
    rhs: &[f64],
) -> Result<Vec<f64>> {
    let n = diag.len();
    assert_eq!(lower.len(), n - 1);
    assert_eq!(upper.len(), n - 1);
    assert_eq!(rhs.len(), n);

    let mut c = vec![0.0; n - 1];
    let mut d = vec![0.0; n];

    let mut denom = diag[0];
    if denom == 0.0 {
        return Err(CoreError::SolveFailure { residual: f64::INFINITY, iterations: 0 });
    }
    c[0] = upper[0] / denom;
    d[0] = rhs[0] / denom;
    for i in 1..n {
        denom = diag[i] - lower[i - 1] * c[i - 1];
        if denom == 0.0 {
            return Err(CoreError::SolveFailure { residual: f64::INFINITY, iterations: i });
        }
        if i < n - 1 {
            c[i] = upper[i] / denom;
        }
        d[i] = (rhs[i] - lower[i - 1] * d[i - 1]) / denom;
    }

    let mut x = d;
    for i in (0..n - 1).rev() {
        x[i] -= c[i] * x[i + 1];
    }
    Ok(x)
}

/// Matrix-free BiCGStab with a relative residual target; the operator is a
/// closure `y = A x`. Suited to the diagonally dominant Crank–Nicolson
/// systems this crate produces.
pub fn bicgstab(
    apply: impl Fn(&[f64]) -> Vec<f64>,
    rhs: &[f64],
    x0: &[f64],
    rel_tol: f64,
    max_iters: usize,
) -> Result<Vec<f64>> {
    let n = rhs.len();
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let norm = |a: &[f64]| dot(a, a).sqrt();

    let rhs_norm = norm(rhs);
    if rhs_norm == 0.0 {
        return Ok(vec![0.0; n]);
    }
    let tol = rel_tol * rhs_norm;

    let mut x = x0.to_vec();
    let ax = apply(&x);
    let mut r: Vec<f64> = rhs.iter().zip(&ax).map(|(b, a)| b - a).collect();
    if norm(&r) <= tol {
        return Ok(x);
    }
    let r_hat = r.clone();
    let mut rho = 1.0;
    let mut alpha = 1.0;
    let mut omega = 1.0;
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];

    for iter in 0..max_iters {
        let rho_next = dot(&r_hat, &r);
        if rho_next.abs() < 1e-300 {
            return Err(CoreError::SolveFailure { residual: norm(&r) / rhs_norm, iterations: iter });
        }
        let beta = (rho_next / rho) * (alpha / omega);
        rho = rho_next;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        v = apply(&p);
        alpha = rho / dot(&r_hat, &v);
        let s: Vec<f64> = r.iter().zip(&v).map(|(ri, vi)| ri - alpha * vi).collect();
        if norm(&s) <= tol {
            for i in 0..n {
                x[i] += alpha * p[i];
            }
            return Ok(x);
        }
        let t = apply(&s);
        let tt = dot(&t, &t);
        if tt == 0.0 {
            return Err(CoreError::SolveFailure { residual: norm(&s) / rhs_norm, iterations: iter });
        }
        omega = dot(&t, &s) / tt;
        for i in 0..n {
            x[i] += alpha * p[i] + omega * s[i];
            r[i] = s[i] - omega * t[i];
        }
        if norm(&r) <= tol {
            return Ok(x);
        }
    }
    Err(CoreError::SolveFailure { residual: norm(&r) / rhs_norm, iterations: max_iters })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn thomas_solves_small_system() {
        // A = [[2,1,0],[1,3,1],[0,1,2]], x = [1,2,3]
        let lower = [1.0, 1.0];
        let diag = [2.0, 3.0, 2.0];
        let upper = [1.0, 1.0];
        let rhs = [4.0, 10.0, 8.0];
        let x = solve_tridiagonal(&lower, &diag, &upper, &rhs).unwrap();
        assert_relative_eq!(x[0], 1.0, epsilon = 1e-13);
        assert_relative_eq!(x[1], 2.0, epsilon = 1e-13);
        assert_relative_eq!(x[2], 3.0, epsilon = 1e-13);
    }

    #[test]
    fn bicgstab_matches_thomas() {
        let n = 40;
        let lower = vec![-1.0; n - 1];
        let diag = vec![4.0; n];
        let upper = vec![-1.0; n - 1];
        let rhs: Vec<f64> = (0..n).map(|i| (i as f64 * 0.3).sin()).collect();
        let direct = solve_tridiagonal(&lower, &diag, &upper, &rhs).unwrap();

        let apply = |x: &[f64]| -> Vec<f64> {
            (0..n)
                .map(|i| {
                    let mut y = 4.0 * x[i];
                    if i > 0 {
                        y -= x[i - 1];
                    }
                    if i + 1 < n {
                        y -= x[i + 1];
                    }
                    y
                })
                .collect()
        };
        let x = bicgstab(apply, &rhs, &vec![0.0; n], 1e-13, 1000).unwrap();
        for i in 0..n {
            assert_relative_eq!(x[i], direct[i], epsilon = 1e-10);
        }
    }
}
