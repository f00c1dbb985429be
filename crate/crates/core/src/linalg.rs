//! Small dense linear algebra for the conjugate Gaussian updates.
//!
//! The precision matrices in this crate are tiny (factor dimension K or the
//! covariate design dimension, both far below 100), so a plain Cholesky and
//! a cyclic Jacobi eigensolver are all that is needed.

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::{Error, Result};

/// Lower-triangular Cholesky factor of a symmetric positive-definite matrix.
pub fn cholesky_lower(a: &Array2<f64>) -> Result<Array2<f64>> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::dim(format!(
            "cholesky needs a square matrix, got {}x{}",
            n,
            a.ncols()
        )));
    }
    let mut l = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[[i, j]];
            for k in 0..j {
                s -= l[[i, k]] * l[[j, k]];
            }
            if i == j {
                if s <= 0.0 || !s.is_finite() {
                    return Err(Error::numerical(format!(
                        "cholesky pivot {s:.3e} at index {i}; matrix not positive definite"
                    )));
                }
                l[[i, i]] = s.sqrt();
            } else {
                l[[i, j]] = s / l[[j, j]];
            }
        }
    }
    Ok(l)
}

/// Solves `L x = b` with `L` lower triangular.
pub fn solve_lower(l: &Array2<f64>, b: &Array1<f64>) -> Array1<f64> {
    let n = l.nrows();
    let mut x = b.clone();
    for i in 0..n {
        let mut s = x[i];
        for k in 0..i {
            s -= l[[i, k]] * x[k];
        }
        x[i] = s / l[[i, i]];
    }
    x
}

/// Solves `L^T x = b` with `L` lower triangular.
pub fn solve_lower_transpose(l: &Array2<f64>, b: &Array1<f64>) -> Array1<f64> {
    let n = l.nrows();
    let mut x = b.clone();
    for i in (0..n).rev() {
        let mut s = x[i];
        for k in i + 1..n {
            s -= l[[k, i]] * x[k];
        }
        x[i] = s / l[[i, i]];
    }
    x
}

/// Solves the SPD system `A x = b` given the Cholesky factor of `A`.
pub fn solve_spd(chol: &Array2<f64>, b: &Array1<f64>) -> Array1<f64> {
    solve_lower_transpose(chol, &solve_lower(chol, b))
}

/// Draws from `N(prec^{-1} b, prec^{-1})` given the Cholesky factor of the
/// precision matrix: the mean solves `prec m = b` and the noise is
/// `L^{-T} z` with standard-normal `z`.
pub fn sample_gaussian_from_precision<R: Rng + ?Sized>(
    chol_prec: &Array2<f64>,
    b: &Array1<f64>,
    rng: &mut R,
) -> Array1<f64> {
    let mean = solve_spd(chol_prec, b);
    let z = Array1::from_iter((0..b.len()).map(|_| rng.sample::<f64, _>(StandardNormal)));
    mean + solve_lower_transpose(chol_prec, &z)
}

/// Eigenvalues of a symmetric matrix in descending order, via cyclic Jacobi
/// rotations. Intended for the small correlation matrices produced by the
/// summaries; converges to machine precision in a handful of sweeps.
pub fn symmetric_eigenvalues(a: &Array2<f64>) -> Result<Vec<f64>> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::dim("eigenvalues need a square matrix".to_string()));
    }
    let mut m = a.clone();
    let max_sweeps = 64;
    for _ in 0..max_sweeps {
        let mut off = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                off += m[[i, j]] * m[[i, j]];
            }
        }
        if off.sqrt() < 1e-14 * (1.0 + frobenius(&m)) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[[p, q]];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let theta = (m[[q, q]] - m[[p, p]]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[[k, p]];
                    let mkq = m[[k, q]];
                    m[[k, p]] = c * mkp - s * mkq;
                    m[[k, q]] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[[p, k]];
                    let mqk = m[[q, k]];
                    m[[p, k]] = c * mpk - s * mqk;
                    m[[q, k]] = s * mpk + c * mqk;
                }
            }
        }
    }
    let mut eig: Vec<f64> = (0..n).map(|i| m[[i, i]]).collect();
    eig.sort_by(|a, b| b.partial_cmp(a).expect("non-finite eigenvalue"));
    Ok(eig)
}

fn frobenius(a: &Array2<f64>) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}
