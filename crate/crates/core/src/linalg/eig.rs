//! Symmetric eigendecomposition by cyclic Jacobi rotations.
//!
//! Adequate for the feature dimensions this crate works with (a few hundred
//! at most) and easy to verify against a brute-force rotation oracle.

use super::Matrix;
use crate::error::{Error, Result};

const MAX_SWEEPS: usize = 64;
const SYMMETRY_TOL: f64 = 1e-10;

/// Eigenvalues sorted descending with matching eigenvector columns.
#[derive(Debug, Clone)]
pub struct SymEigen {
    pub values: Vec<f64>,
    /// Orthonormal eigenvectors, one column per eigenvalue.
    pub vectors: Matrix,
}

/// Decomposes a symmetric matrix. The input must be square and symmetric
/// within 1e-10; callers feed covariance-style (positive semi-definite)
/// matrices but only symmetry is checked here.
pub fn eig_sym(s: &Matrix) -> Result<SymEigen> {
    let n = s.rows();
    if n != s.cols() {
        return Err(Error::contract(format!(
            "eig_sym needs a square matrix, got {}x{}",
            s.rows(),
            s.cols()
        )));
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if (s.get(i, j) - s.get(j, i)).abs() > SYMMETRY_TOL {
                return Err(Error::contract(format!(
                    "eig_sym needs a symmetric matrix; entries ({i},{j}) and ({j},{i}) \
                     differ by {}",
                    (s.get(i, j) - s.get(j, i)).abs()
                )));
            }
        }
    }
    if n == 0 {
        return Ok(SymEigen {
            values: vec![],
            vectors: Matrix::zeros(0, 0),
        });
    }

    let mut a = s.clone();
    let mut v = Matrix::identity(n);
    let frob: f64 = s.data().iter().map(|x| x * x).sum::<f64>().sqrt();
    let tol = 1e-14 * frob.max(1.0);

    let mut converged = false;
    for _ in 0..MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|p| ((p + 1)..n).map(move |q| (p, q)))
            .map(|(p, q)| a.get(p, q) * a.get(p, q))
            .sum::<f64>()
            .sqrt();
        if off <= tol {
            converged = true;
            break;
        }
        for p in 0..n - 1 {
            for q in (p + 1)..n {
                rotate(&mut a, &mut v, p, q);
            }
        }
    }
    if !converged {
        // one last check: the final sweep may have finished the job
        let off: f64 = (0..n)
            .flat_map(|p| ((p + 1)..n).map(move |q| (p, q)))
            .map(|(p, q)| a.get(p, q) * a.get(p, q))
            .sum::<f64>()
            .sqrt();
        if off > tol {
            return Err(Error::Numeric(format!(
                "Jacobi eigendecomposition did not converge in {MAX_SWEEPS} sweeps \
                 (off-diagonal norm {off:e})"
            )));
        }
    }

    // sort descending, carrying the eigenvector columns along
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a.get(j, j).total_cmp(&a.get(i, i)));
    let values: Vec<f64> = order.iter().map(|&i| a.get(i, i)).collect();
    let mut vectors = Matrix::zeros(n, n);
    for (new_col, &old_col) in order.iter().enumerate() {
        for r in 0..n {
            vectors.set(r, new_col, v.get(r, old_col));
        }
    }
    Ok(SymEigen { values, vectors })
}

/// One Jacobi rotation annihilating `a[p][q]`, accumulated into `v`.
fn rotate(a: &mut Matrix, v: &mut Matrix, p: usize, q: usize) {
    let apq = a.get(p, q);
    if apq == 0.0 {
        return;
    }
    let app = a.get(p, p);
    let aqq = a.get(q, q);
    let theta = (aqq - app) / (2.0 * apq);
    let t = if theta >= 0.0 {
        1.0 / (theta + (theta * theta + 1.0).sqrt())
    } else {
        1.0 / (theta - (theta * theta + 1.0).sqrt())
    };
    let c = 1.0 / (t * t + 1.0).sqrt();
    let s = t * c;

    let n = a.rows();
    for i in 0..n {
        if i != p && i != q {
            let aip = a.get(i, p);
            let aiq = a.get(i, q);
            let new_ip = c * aip - s * aiq;
            let new_iq = s * aip + c * aiq;
            a.set(i, p, new_ip);
            a.set(p, i, new_ip);
            a.set(i, q, new_iq);
            a.set(q, i, new_iq);
        }
    }
    let new_pp = c * c * app - 2.0 * s * c * apq + s * s * aqq;
    let new_qq = s * s * app + 2.0 * s * c * apq + c * c * aqq;
    a.set(p, p, new_pp);
    a.set(q, q, new_qq);
    a.set(p, q, 0.0);
    a.set(q, p, 0.0);

    for i in 0..n {
        let vip = v.get(i, p);
        let viq = v.get(i, q);
        v.set(i, p, c * vip - s * viq);
        v.set(i, q, s * vip + c * viq);
    }
}
