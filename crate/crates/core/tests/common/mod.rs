//! Independent oracles used to check the library's numerics. These are
//! deliberately naive implementations kept apart from the library code
//! paths they verify.

#![allow(dead_code)]

use rexp_core::linalg::{Matrix, SeededRng};
use rexp_core::nn::{gradient, predict, ModelParams, ModelSpec};

/// Brute-force cyclic Jacobi eigendecomposition built from explicit
/// rotation-matrix products: `A <- J^T A J`, `V <- V J`. O(n^3) per
/// rotation and obviously correct; fine for test-sized matrices.
pub fn jacobi_oracle(s: &Matrix, sweeps: usize) -> (Vec<f64>, Matrix) {
    let n = s.rows();
    assert_eq!(n, s.cols());
    let mut a = s.clone();
    let mut v = Matrix::identity(n);
    for _ in 0..sweeps {
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a.get(p, q);
                if apq.abs() < 1e-300 {
                    continue;
                }
                let theta = (a.get(q, q) - a.get(p, p)) / (2.0 * apq);
                let t = if theta >= 0.0 {
                    1.0 / (theta + (theta * theta + 1.0).sqrt())
                } else {
                    1.0 / (theta - (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let sn = t * c;
                // full rotation matrix
                let mut j = Matrix::identity(n);
                let mut jd: Vec<f64> = j.data().to_vec();
                jd[p * n + p] = c;
                jd[q * n + q] = c;
                jd[p * n + q] = sn;
                jd[q * n + p] = -sn;
                j = Matrix::new(n, n, jd).unwrap();
                a = j.transpose().matmul(&a).unwrap().matmul(&j).unwrap();
                v = v.matmul(&j).unwrap();
            }
        }
    }
    // sort descending
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &jx| a.get(jx, jx).total_cmp(&a.get(i, i)));
    let values: Vec<f64> = order.iter().map(|&i| a.get(i, i)).collect();
    let mut vectors = vec![0.0; n * n];
    for (new_col, &old_col) in order.iter().enumerate() {
        for r in 0..n {
            vectors[r * n + new_col] = v.get(r, old_col);
        }
    }
    (values, Matrix::new(n, n, vectors).unwrap())
}

/// Brute-force PCA: naive covariance, oracle eigendecomposition, cumulative
/// ratio count, sign-fixed projection. Returns (retained, projection of the
/// fitted data, components, mean).
pub struct PcaOracle {
    pub retained: usize,
    pub projection: Matrix,
    pub components: Matrix,
    pub mean: Vec<f64>,
}

pub fn pca_oracle(features: &Matrix, theta: f64) -> PcaOracle {
    let n = features.rows();
    let d = features.cols();
    // per-column means, naive
    let mut mean = vec![0.0; d];
    for i in 0..n {
        for (m, &v) in mean.iter_mut().zip(features.row(i)) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    // naive covariance with divisor n-1
    let mut cov = vec![0.0; d * d];
    for a in 0..d {
        for b in 0..d {
            let mut acc = 0.0;
            for i in 0..n {
                acc += (features.get(i, a) - mean[a]) * (features.get(i, b) - mean[b]);
            }
            cov[a * d + b] = acc / (n as f64 - 1.0);
        }
    }
    let cov = Matrix::new(d, d, cov).unwrap();
    let (values, vectors) = jacobi_oracle(&cov, 40);
    let total: f64 = values.iter().map(|&l| l.max(0.0)).sum();
    let mut retained = d;
    if total > 0.0 {
        let mut cum = 0.0;
        for (i, &l) in values.iter().enumerate() {
            cum += l.max(0.0) / total;
            if cum >= theta {
                retained = i + 1;
                break;
            }
        }
    } else {
        retained = 1;
    }

    // sign fix: largest-magnitude entry positive
    let mut comp = vec![0.0; d * retained];
    for c in 0..retained {
        let mut pivot = 0;
        let mut best = 0.0;
        for r in 0..d {
            if vectors.get(r, c).abs() > best {
                best = vectors.get(r, c).abs();
                pivot = r;
            }
        }
        let flip = if vectors.get(pivot, c) < 0.0 {
            -1.0
        } else {
            1.0
        };
        for r in 0..d {
            comp[r * retained + c] = flip * vectors.get(r, c);
        }
    }
    let components = Matrix::new(d, retained, comp).unwrap();

    // naive projection (X - mean) * components
    let mut proj = vec![0.0; n * retained];
    for i in 0..n {
        for c in 0..retained {
            let mut acc = 0.0;
            for a in 0..d {
                acc += (features.get(i, a) - mean[a]) * components.get(a, c);
            }
            proj[i * retained + c] = acc;
        }
    }
    PcaOracle {
        retained,
        projection: Matrix::new(n, retained, proj).unwrap(),
        components,
        mean,
    }
}

/// MSE loss as an independent closure over flattened parameters.
fn loss_at(spec: &ModelSpec, params: &ModelParams, flat: &[f64], x: &Matrix, y: &Matrix) -> f64 {
    let mut p = params.clone();
    p.assign_from_flat(flat).unwrap();
    let preds = predict(spec, &p, x).unwrap();
    let n = x.rows() as f64;
    preds
        .data()
        .iter()
        .zip(y.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / n
}

/// Central finite differences of the loss over every trainable parameter.
pub fn finite_difference_gradient(
    spec: &ModelSpec,
    params: &ModelParams,
    x: &Matrix,
    y: &Matrix,
    h: f64,
) -> Vec<f64> {
    let flat = params.to_flat();
    let mut grad = vec![0.0; flat.len()];
    for i in 0..flat.len() {
        let mut plus = flat.clone();
        plus[i] += h;
        let mut minus = flat.clone();
        minus[i] -= h;
        grad[i] =
            (loss_at(spec, params, &plus, x, y) - loss_at(spec, params, &minus, x, y)) / (2.0 * h);
    }
    grad
}

/// Max relative error between analytic and numeric gradients. Pairs whose
/// magnitudes sit below the finite-difference noise floor (roundoff in the
/// loss divided by 2h, about 1e-7 here) cannot be measured by central
/// differences and count as matching.
pub fn max_rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| {
            let denom = a.abs().max(n.abs());
            if denom < 1e-7 {
                0.0
            } else {
                (a - n).abs() / denom
            }
        })
        .fold(0.0, f64::max)
}

/// Checks one spec's analytic gradient against central differences on a
/// seeded problem; returns the max relative error.
pub fn gradient_check(spec: &ModelSpec, data_seed: u64, samples: usize) -> f64 {
    let mut rng = SeededRng::new(spec.init_seed);
    let params = rexp_core::nn::init_model(spec, &mut rng).unwrap();
    let mut drng = SeededRng::new(data_seed);
    let x = Matrix::new(
        samples,
        spec.input_dim,
        (0..samples * spec.input_dim)
            .map(|_| drng.uniform())
            .collect(),
    )
    .unwrap();
    let y = Matrix::new(samples, 1, (0..samples).map(|_| drng.normal()).collect()).unwrap();
    let analytic = gradient(spec, &params, &x, &y).unwrap().to_flat();
    let numeric = finite_difference_gradient(spec, &params, &x, &y, 1e-6);
    max_rel_err(&analytic, &numeric)
}

pub fn random_matrix(seed: u64, rows: usize, cols: usize) -> Matrix {
    let mut rng = SeededRng::new(seed);
    Matrix::new(rows, cols, (0..rows * cols).map(|_| rng.normal()).collect()).unwrap()
}

pub fn random_psd(seed: u64, n: usize) -> Matrix {
    let b = random_matrix(seed, n, n);
    b.transpose().matmul(&b).unwrap()
}
