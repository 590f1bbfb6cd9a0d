//! Model-X Gaussian knockoffs with known covariance, flip-sign statistics
//! from cross-validated LASSO on the augmented design, and the
//! FDR-controlling selection threshold.
//!
//! The covariance must be supplied: for simulated designs it is the exact
//! row covariance, for real data an estimate has to come from elsewhere.

use crate::cv::{cv_select, CvSpec};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::linalg;
use crate::rng::RngStream;
use ndarray::{Array2, ArrayView2};

/// Output of the full filter.
#[derive(Debug, Clone)]
pub struct KnockoffResult {
    pub w: Vec<f64>,
    /// Selection threshold; `f64::INFINITY` when no threshold qualifies.
    pub threshold: f64,
    pub selected: Vec<usize>,
    pub q: f64,
}

/// The equicorrelated per-coordinate decorrelation vector
/// `s = min(lambda_min(Sigma), 1) * 1`.
pub fn equicorrelated_s(sigma: &ArrayView2<f64>) -> Vec<f64> {
    let lmin = linalg::lambda_min_spd(sigma, 1e-10);
    vec![lmin.min(1.0); sigma.nrows()]
}

/// Draws knockoffs conditionally on `x` under the Gaussian model-X formulas:
/// mean `X (I - Sigma^{-1} diag(s))`, noise covariance
/// `2 diag(s) - diag(s) Sigma^{-1} diag(s)`.
pub fn make_knockoffs(
    x: &ArrayView2<f64>,
    sigma: &ArrayView2<f64>,
    s: &[f64],
    rng: &mut RngStream,
) -> Result<Array2<f64>> {
    let p = x.ncols();
    if sigma.nrows() != p || sigma.ncols() != p {
        return Err(Error::InvalidArgument(format!(
            "covariance must be {p}x{p}"
        )));
    }
    if s.len() != p {
        return Err(Error::InvalidArgument(format!("s must have length {p}")));
    }
    if s.iter().any(|v| *v < 0.0 || !v.is_finite()) {
        return Err(Error::InvalidArgument("s must be nonnegative".into()));
    }
    let inv = linalg::spd_inverse(sigma)?;
    // A = Sigma^{-1} diag(s): scale columns of the inverse.
    let mut a = inv.clone();
    for j in 0..p {
        let sj = s[j];
        a.column_mut(j).mapv_inplace(|v| v * sj);
    }
    let mean = x.to_owned() - x.dot(&a);
    // C = 2 diag(s) - diag(s) Sigma^{-1} diag(s).
    let mut c = Array2::<f64>::zeros((p, p));
    for i in 0..p {
        for j in 0..p {
            c[[i, j]] = -s[i] * inv[[i, j]] * s[j];
        }
        c[[i, i]] += 2.0 * s[i];
    }
    let l = linalg::cholesky_psd(&c.view(), 1e-10).map_err(|_| {
        Error::InvalidArgument(
            "2 Sigma - diag(s) is not positive semidefinite; shrink s".into(),
        )
    })?;
    let z = rng.normal_matrix(x.nrows(), p);
    Ok(mean + z.dot(&l.t()))
}

/// Flip-sign statistics `W_j = |beta_j| - |beta_{j+p}|` from a
/// cross-validated LASSO on the augmented design `[X, X~]`.
pub fn knockoff_stats(d: &Dataset, x_tilde: &ArrayView2<f64>, cv_seed: u64) -> Result<Vec<f64>> {
    knockoff_stats_with(d, x_tilde, |aug| {
        let spec = CvSpec::lasso_default(aug, cv_seed);
        let res = cv_select(aug, &spec)?;
        Ok(res.coefficients)
    })
}

/// As [`knockoff_stats`], with a caller-supplied importance fit on the
/// augmented dataset returning a dense coefficient vector of length `2p`.
pub fn knockoff_stats_with<F>(
    d: &Dataset,
    x_tilde: &ArrayView2<f64>,
    fit: F,
) -> Result<Vec<f64>>
where
    F: FnOnce(&Dataset) -> Result<Vec<f64>>,
{
    let (n, p) = (d.n(), d.p());
    if x_tilde.nrows() != n || x_tilde.ncols() != p {
        return Err(Error::InvalidArgument(
            "knockoff matrix shape must match the design".into(),
        ));
    }
    let mut aug = Array2::<f64>::zeros((n, 2 * p));
    aug.slice_mut(ndarray::s![.., ..p]).assign(&d.x);
    aug.slice_mut(ndarray::s![.., p..]).assign(x_tilde);
    let mut names = d.names.clone();
    names.extend(d.names.iter().map(|s| format!("{s}.knockoff")));
    let augmented = Dataset::new(d.y.clone(), aug, names, d.family)?;
    let coefs = fit(&augmented)?;
    if coefs.len() != 2 * p {
        return Err(Error::InvalidArgument(format!(
            "importance fit returned {} coefficients for 2p = {}",
            coefs.len(),
            2 * p
        )));
    }
    Ok((0..p).map(|j| coefs[j].abs() - coefs[j + p].abs()).collect())
}

/// The knockoff+ threshold: the smallest `t` among `{|W_j| : W_j != 0}` with
/// `(1 + #{j : W_j <= -t}) / #{j : W_j >= t} <= q`, together with the
/// selected set `{j : W_j >= t}`. No qualifying candidate yields an infinite
/// threshold and an empty selection.
pub fn knockoff_threshold(w: &[f64], q: f64) -> (f64, Vec<usize>) {
    assert!(q > 0.0 && q < 1.0, "q must lie in (0,1), got {q}");
    let mut candidates: Vec<f64> = w.iter().filter(|v| **v != 0.0).map(|v| v.abs()).collect();
    candidates.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
    candidates.dedup();
    for &t in &candidates {
        let neg = w.iter().filter(|&&v| v <= -t).count();
        let pos = w.iter().filter(|&&v| v >= t).count();
        if pos == 0 {
            continue;
        }
        if (1.0 + neg as f64) / pos as f64 <= q {
            let selected = (0..w.len()).filter(|&j| w[j] >= t).collect();
            return (t, selected);
        }
    }
    (f64::INFINITY, vec![])
}

/// Generation, statistics and thresholding in one call.
pub fn knockoff_filter(
    d: &Dataset,
    sigma: &ArrayView2<f64>,
    q: f64,
    rng: &mut RngStream,
    cv_seed: u64,
) -> Result<KnockoffResult> {
    let s = equicorrelated_s(sigma);
    let x_tilde = make_knockoffs(&d.x.view(), sigma, &s, rng)?;
    let w = knockoff_stats(d, &x_tilde.view(), cv_seed)?;
    let (threshold, selected) = knockoff_threshold(&w, q);
    Ok(KnockoffResult {
        w,
        threshold,
        selected,
        q,
    })
}
