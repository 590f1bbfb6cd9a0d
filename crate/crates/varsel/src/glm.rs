//! Least-squares and logistic submodel fitting.
//!
//! These fitters serve criterion evaluation and stepwise search, which only
//! ever fit small supports; solving the normal equations by Cholesky is both
//! adequate and fast at k x k. Gaussian fits carry no intercept (callers
//! center y and X first); logistic fits always carry an unpenalized
//! intercept.

use crate::data::{Dataset, Family};
use crate::error::{Error, Result};
use crate::linalg;
use ndarray::{Array1, Array2};

/// Result of fitting one submodel.
#[derive(Debug, Clone)]
pub struct SubmodelFit {
    /// Coefficients in support order.
    pub coefficients: Vec<f64>,
    /// Intercept; zero for gaussian fits.
    pub intercept: f64,
    /// Residual sum of squares (gaussian) or deviance (binomial).
    pub loss: f64,
    /// Complete or quasi-complete separation detected (binomial only).
    pub separation: bool,
    /// Weighted Gram matrix at the solution, including the intercept column
    /// for binomial fits. Used for Wald standard errors.
    pub gram: Array2<f64>,
}

pub const IRLS_MAX_ITER: usize = 100;
const IRLS_TOL: f64 = 1e-10;
const SEPARATION_DEVIANCE: f64 = 1e-6;

/// Fits the submodel given by `support`, dispatching on the dataset family.
pub fn fit_submodel(d: &Dataset, support: &[usize]) -> Result<SubmodelFit> {
    match d.family {
        Family::Gaussian => fit_ols(d, support),
        Family::Binomial => fit_logistic(d, support),
    }
}

fn fit_ols(d: &Dataset, support: &[usize]) -> Result<SubmodelFit> {
    let n = d.n();
    if support.is_empty() {
        let rss = d.y.dot(&d.y);
        return Ok(SubmodelFit {
            coefficients: vec![],
            intercept: 0.0,
            loss: rss,
            separation: false,
            gram: Array2::zeros((0, 0)),
        });
    }
    let xm = d.submatrix(support);
    let gram = xm.t().dot(&xm);
    let xty = xm.t().dot(&d.y);
    let beta = linalg::solve_spd(&gram.view(), &xty.view())
        .map_err(|_| Error::RankDeficient(support.len()))?;
    let resid = &d.y - &xm.dot(&beta);
    let rss = resid.dot(&resid).max(0.0);
    debug_assert!(support.len() <= n);
    Ok(SubmodelFit {
        coefficients: beta.to_vec(),
        intercept: 0.0,
        loss: rss,
        separation: false,
        gram,
    })
}

/// Binomial deviance `-2 log L` at fitted probabilities.
pub fn binomial_deviance(y: &Array1<f64>, probs: &Array1<f64>) -> f64 {
    let mut dev = 0.0;
    for (&yi, &pi) in y.iter().zip(probs) {
        let pi = pi.clamp(1e-12, 1.0 - 1e-12);
        dev -= 2.0 * (yi * pi.ln() + (1.0 - yi) * (1.0 - pi).ln());
    }
    dev
}

fn fit_logistic(d: &Dataset, support: &[usize]) -> Result<SubmodelFit> {
    let n = d.n();
    let k = support.len();
    // Design with leading intercept column.
    let mut a = Array2::<f64>::ones((n, k + 1));
    for (c, &j) in support.iter().enumerate() {
        a.column_mut(c + 1).assign(&d.x.column(j));
    }
    let mut gamma = Array1::<f64>::zeros(k + 1);
    let mut dev_old = f64::INFINITY;
    let mut gram = Array2::<f64>::zeros((k + 1, k + 1));
    for _iter in 0..IRLS_MAX_ITER {
        let eta = a.dot(&gamma);
        let probs = eta.mapv(|e| 1.0 / (1.0 + (-e).exp()));
        let dev = binomial_deviance(&d.y, &probs);
        if dev < SEPARATION_DEVIANCE {
            return Ok(SubmodelFit {
                coefficients: gamma.iter().skip(1).copied().collect(),
                intercept: gamma[0],
                loss: dev,
                separation: true,
                gram,
            });
        }
        if (dev_old - dev).abs() < IRLS_TOL * (dev.abs() + 1.0) {
            return Ok(SubmodelFit {
                coefficients: gamma.iter().skip(1).copied().collect(),
                intercept: gamma[0],
                loss: dev,
                separation: false,
                gram,
            });
        }
        dev_old = dev;

        let w = probs.mapv(|p| (p * (1.0 - p)).max(1e-10));
        // z = eta + (y - p)/w, weighted normal equations A'WA gamma = A'Wz.
        let z = &eta + &((&d.y - &probs) / &w);
        let mut aw = a.clone();
        for i in 0..n {
            let wi = w[i];
            aw.row_mut(i).mapv_inplace(|v| v * wi);
        }
        gram = a.t().dot(&aw);
        let rhs = aw.t().dot(&z);
        let new_gamma =
            linalg::solve_spd(&gram.view(), &rhs.view()).map_err(|_| Error::RankDeficient(k))?;
        // Step-halving keeps early iterations from overshooting into the
        // flat region of the likelihood.
        let mut step = 1.0;
        let mut candidate = &gamma + &((&new_gamma - &gamma) * step);
        for _ in 0..20 {
            let eta_c = a.dot(&candidate);
            let probs_c = eta_c.mapv(|e| 1.0 / (1.0 + (-e).exp()));
            if binomial_deviance(&d.y, &probs_c) <= dev + 1e-12 {
                break;
            }
            step *= 0.5;
            candidate = &gamma + &((&new_gamma - &gamma) * step);
        }
        gamma = candidate;
    }
    Err(Error::IrlsNonConvergence(IRLS_MAX_ITER))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn ols_empty_support_is_total_sum_of_squares() {
        let d = Dataset::new(
            array![1.0, -1.0, 2.0],
            array![[1.0], [2.0], [3.0]],
            vec!["a".into()],
            Family::Gaussian,
        )
        .unwrap();
        let fit = fit_submodel(&d, &[]).unwrap();
        assert_eq!(fit.loss, 6.0);
    }

    #[test]
    fn ols_exact_on_simple_line() {
        // y = 2 x with no noise.
        let d = Dataset::new(
            array![2.0, 4.0, 6.0, 8.0],
            array![[1.0], [2.0], [3.0], [4.0]],
            vec!["a".into()],
            Family::Gaussian,
        )
        .unwrap();
        let fit = fit_submodel(&d, &[0]).unwrap();
        assert!((fit.coefficients[0] - 2.0).abs() < 1e-12);
        assert!(fit.loss < 1e-20);
    }

    #[test]
    fn ols_rank_deficient_errors() {
        let d = Dataset::new(
            array![1.0, 2.0, 3.0],
            array![[1.0, 2.0], [2.0, 4.0], [3.0, 6.0]],
            vec!["a".into(), "b".into()],
            Family::Gaussian,
        )
        .unwrap();
        assert!(matches!(
            fit_submodel(&d, &[0, 1]),
            Err(Error::RankDeficient(2))
        ));
    }

    #[test]
    fn logistic_recovers_sign_and_flags_separation() {
        // Separable data: y = 1 exactly when x > 0.
        let x: Vec<f64> = (0..40).map(|i| (i as f64) - 19.5).collect();
        let y: Vec<f64> = x.iter().map(|&v| if v > 0.0 { 1.0 } else { 0.0 }).collect();
        let d = Dataset::new(
            Array1::from(y),
            Array2::from_shape_vec((40, 1), x).unwrap(),
            vec!["a".into()],
            Family::Binomial,
        )
        .unwrap();
        let fit = fit_submodel(&d, &[0]).unwrap();
        assert!(fit.separation, "deviance {}", fit.loss);
        assert!(fit.coefficients[0] > 0.0);
    }

    #[test]
    fn logistic_matches_null_deviance() {
        // Empty support: intercept-only model, p = mean(y).
        let y = array![1.0, 0.0, 1.0, 1.0, 0.0, 1.0, 0.0, 1.0];
        let n = y.len();
        let d = Dataset::new(
            y.clone(),
            Array2::from_shape_fn((n, 1), |(i, _)| i as f64),
            vec!["a".into()],
            Family::Binomial,
        )
        .unwrap();
        let fit = fit_submodel(&d, &[]).unwrap();
        let pbar = y.mean().unwrap();
        let expected = -2.0
            * (y.iter().filter(|&&v| v == 1.0).count() as f64 * pbar.ln()
                + y.iter().filter(|&&v| v == 0.0).count() as f64 * (1.0 - pbar).ln());
        assert!((fit.loss - expected).abs() < 1e-6);
        assert!((1.0 / (1.0 + (-fit.intercept).exp()) - pbar).abs() < 1e-8);
    }
}
