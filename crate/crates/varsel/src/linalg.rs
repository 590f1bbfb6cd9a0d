//! Small dense linear-algebra kernels.
//!
//! Everything operating on model submatrices works at k x k for k well below
//! a hundred, so an unblocked Cholesky is plenty. The spectral norm estimate
//! feeds proximal-gradient step sizes and deliberately reports the Rayleigh
//! quotient after a fixed number of power iterations; callers backtrack if it
//! is an underestimate.

use crate::error::{Error, Result};
use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

/// Lower-triangular Cholesky factor of a symmetric positive-definite matrix.
pub fn cholesky(a: &ArrayView2<f64>) -> Result<Array2<f64>> {
    let n = a.nrows();
    assert_eq!(n, a.ncols());
    let mut l = Array2::<f64>::zeros((n, n));
    for j in 0..n {
        let mut d = a[[j, j]];
        for k in 0..j {
            d -= l[[j, k]] * l[[j, k]];
        }
        if d <= 0.0 || !d.is_finite() {
            return Err(Error::NotPositiveDefinite { index: j, pivot: d });
        }
        let dj = d.sqrt();
        l[[j, j]] = dj;
        for i in (j + 1)..n {
            let mut s = a[[i, j]];
            for k in 0..j {
                s -= l[[i, k]] * l[[j, k]];
            }
            l[[i, j]] = s / dj;
        }
    }
    Ok(l)
}

/// Cholesky that tolerates exact semi-definiteness: a pivot within
/// `tol * max_diag` of zero zeroes out its column instead of failing.
/// Used for knockoff noise covariances where `s = 0` is legal.
pub fn cholesky_psd(a: &ArrayView2<f64>, tol: f64) -> Result<Array2<f64>> {
    let n = a.nrows();
    let scale = (0..n).map(|i| a[[i, i]].abs()).fold(0.0_f64, f64::max).max(1.0);
    let cut = tol * scale;
    let mut l = Array2::<f64>::zeros((n, n));
    for j in 0..n {
        let mut d = a[[j, j]];
        for k in 0..j {
            d -= l[[j, k]] * l[[j, k]];
        }
        if d < -cut || !d.is_finite() {
            return Err(Error::NotPositiveDefinite { index: j, pivot: d });
        }
        if d <= cut {
            continue; // column stays zero
        }
        let dj = d.sqrt();
        l[[j, j]] = dj;
        for i in (j + 1)..n {
            let mut s = a[[i, j]];
            for k in 0..j {
                s -= l[[i, k]] * l[[j, k]];
            }
            l[[i, j]] = s / dj;
        }
    }
    Ok(l)
}

/// Solves `L x = b` for lower-triangular `L`.
pub fn solve_lower(l: &ArrayView2<f64>, b: &ArrayView1<f64>) -> Array1<f64> {
    let n = l.nrows();
    let mut x = b.to_owned();
    for i in 0..n {
        for k in 0..i {
            let v = x[k];
            x[i] -= l[[i, k]] * v;
        }
        x[i] /= l[[i, i]];
    }
    x
}

/// Solves `L' x = b` for lower-triangular `L`.
pub fn solve_lower_transpose(l: &ArrayView2<f64>, b: &ArrayView1<f64>) -> Array1<f64> {
    let n = l.nrows();
    let mut x = b.to_owned();
    for i in (0..n).rev() {
        for k in (i + 1)..n {
            let v = x[k];
            x[i] -= l[[k, i]] * v;
        }
        x[i] /= l[[i, i]];
    }
    x
}

/// Solves `A x = b` for symmetric positive-definite `A`.
pub fn solve_spd(a: &ArrayView2<f64>, b: &ArrayView1<f64>) -> Result<Array1<f64>> {
    let l = cholesky(a)?;
    let y = solve_lower(&l.view(), b);
    Ok(solve_lower_transpose(&l.view(), &y.view()))
}

/// Inverse of a symmetric positive-definite matrix via its Cholesky factor.
pub fn spd_inverse(a: &ArrayView2<f64>) -> Result<Array2<f64>> {
    let n = a.nrows();
    let l = cholesky(a)?;
    let mut inv = Array2::<f64>::zeros((n, n));
    for j in 0..n {
        let mut e = Array1::<f64>::zeros(n);
        e[j] = 1.0;
        let y = solve_lower(&l.view(), &e.view());
        let x = solve_lower_transpose(&l.view(), &y.view());
        inv.column_mut(j).assign(&x);
    }
    Ok(inv)
}

/// Smallest eigenvalue of a symmetric positive-semidefinite matrix, located by
/// bisection on the largest shift `t` keeping `A - t I` positive definite.
pub fn lambda_min_spd(a: &ArrayView2<f64>, tol: f64) -> f64 {
    let n = a.nrows();
    let is_pd = |t: f64| -> bool {
        let mut shifted = a.to_owned();
        for i in 0..n {
            shifted[[i, i]] -= t;
        }
        cholesky(&shifted.view()).is_ok()
    };
    // lambda_min <= max diagonal entry for symmetric a.
    let mut hi = (0..n).map(|i| a[[i, i]]).fold(f64::MIN, f64::max);
    if is_pd(hi) {
        return hi;
    }
    let mut lo = 0.0;
    if !is_pd(lo) {
        return 0.0;
    }
    while hi - lo > tol * hi.max(1.0) {
        let mid = 0.5 * (lo + hi);
        if is_pd(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Estimate of the largest eigenvalue of `X'X` (squared spectral norm of `X`)
/// from a fixed number of power iterations.
pub fn spectral_norm_sq(x: &ArrayView2<f64>, iterations: usize) -> f64 {
    let p = x.ncols();
    if p == 0 {
        return 0.0;
    }
    // Deterministic start with energy in every coordinate.
    let mut v = Array1::from_iter((0..p).map(|j| 1.0 + (j as f64) / (p as f64)));
    let mut norm = (v.dot(&v)).sqrt();
    v.mapv_inplace(|t| t / norm);
    let mut eig = 0.0;
    for _ in 0..iterations {
        let xv = x.dot(&v);
        let mut w = xv.dot(x); // X'(Xv)
        eig = v.dot(&w);
        norm = w.dot(&w).sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        w.mapv_inplace(|t| t / norm);
        v = w;
    }
    eig
}
