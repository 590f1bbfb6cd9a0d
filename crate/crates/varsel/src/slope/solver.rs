//! Accelerated proximal gradient (monotone FISTA) for SLOPE objectives.

use super::lambda::LambdaSequence;
use super::prox::{prox_sorted_l1, sorted_l1_norm};
use crate::data::{Dataset, Family};
use crate::error::{Error, Result};
use crate::linalg;
use ndarray::{Array1, ArrayView2};

/// Solver controls. The defaults give certified optima: iteration stops only
/// when both the relative objective change and the KKT residual are within
/// tolerance.
#[derive(Debug, Clone)]
pub struct SlopeOptions {
    pub max_iter: usize,
    pub tol_objective: f64,
    pub tol_kkt: f64,
    /// Enforce a non-increasing objective sequence (monotone FISTA).
    pub monotone: bool,
    pub warm_start: Option<Vec<f64>>,
    /// Absolute tolerance for grouping equal coefficient magnitudes.
    pub cluster_tol: f64,
}

impl Default for SlopeOptions {
    fn default() -> Self {
        Self {
            max_iter: 20_000,
            tol_objective: 1e-7,
            tol_kkt: 1e-6,
            monotone: true,
            warm_start: None,
            cluster_tol: 1e-8,
        }
    }
}

/// A SLOPE solution with its exit certificate.
#[derive(Debug, Clone)]
pub struct SlopeFit {
    pub coefficients: Vec<f64>,
    /// Unpenalized intercept (binomial loss only; zero for gaussian).
    pub intercept: f64,
    pub objective: f64,
    pub kkt_residual: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Groups of coordinates sharing a nonzero magnitude, largest first.
    pub clusters: Vec<Vec<usize>>,
}

impl SlopeFit {
    pub fn support(&self) -> Vec<usize> {
        self.coefficients
            .iter()
            .enumerate()
            .filter(|(_, b)| **b != 0.0)
            .map(|(j, _)| j)
            .collect()
    }

    pub fn nonzero_count(&self) -> usize {
        self.coefficients.iter().filter(|b| **b != 0.0).count()
    }
}

/// Groups coordinates whose nonzero |beta| agree within `tol`, largest first.
pub fn magnitude_clusters(beta: &[f64], tol: f64) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..beta.len()).filter(|&j| beta[j] != 0.0).collect();
    idx.sort_by(|&a, &b| beta[b].abs().partial_cmp(&beta[a].abs()).unwrap());
    let mut out: Vec<Vec<usize>> = Vec::new();
    for j in idx {
        match out.last_mut() {
            Some(group)
                if (beta[*group.last().unwrap()].abs() - beta[j].abs()).abs() <= tol =>
            {
                group.push(j)
            }
            _ => out.push(vec![j]),
        }
    }
    out
}

/// Dual-feasibility violation of the sorted-L1 subgradient condition: the
/// largest positive gap between cumulative sums of sorted |v| and of lambda.
pub fn cumsum_violation(v: &[f64], lambda: &LambdaSequence) -> f64 {
    let mut mags: Vec<f64> = v.iter().map(|x| x.abs()).collect();
    mags.sort_unstable_by(|a, b| b.partial_cmp(a).unwrap());
    let mut c_v = 0.0;
    let mut c_l = 0.0;
    let mut worst: f64 = 0.0;
    for (m, l) in mags.iter().zip(&lambda.values) {
        c_v += m;
        c_l += l;
        worst = worst.max(c_v - c_l);
    }
    worst
}

/// KKT residual at `beta` for gradient `grad` of the smooth part: the larger
/// of the cumulative-sum dual violation of `-grad` and the scaled fixed-point
/// residual of one proximal-gradient step.
pub fn kkt_residual(
    beta: &[f64],
    grad: &[f64],
    lambda: &LambdaSequence,
    step: f64,
) -> f64 {
    let violation = cumsum_violation(grad, lambda);
    let shifted: Vec<f64> = beta
        .iter()
        .zip(grad)
        .map(|(b, g)| b - step * g)
        .collect();
    let scaled = lambda.scaled_by_unchecked(step);
    let proxed = prox_sorted_l1(&shifted, &scaled);
    let fixed_point = beta
        .iter()
        .zip(&proxed)
        .map(|(b, p)| (b - p).abs())
        .fold(0.0_f64, f64::max)
        / step;
    violation.max(fixed_point)
}

impl LambdaSequence {
    /// Internal scaling that preserves zero sequences produced by step sizes;
    /// validation is the caller's concern here.
    pub(crate) fn scaled_by_unchecked(&self, c: f64) -> LambdaSequence {
        LambdaSequence {
            values: self.values.iter().map(|v| v * c).collect(),
            rule: super::lambda::LambdaRule::Explicit,
            truncated_at: None,
        }
    }
}

/// Smooth loss abstraction for the two families.
struct SmoothLoss<'a> {
    x: ArrayView2<'a, f64>,
    y: &'a Array1<f64>,
    family: Family,
    /// Intercept is an extra unpenalized coordinate (binomial only).
    intercept: bool,
}

impl<'a> SmoothLoss<'a> {
    fn value(&self, beta: &Array1<f64>, intercept: f64) -> f64 {
        match self.family {
            Family::Gaussian => {
                let r = self.y - &self.x.dot(beta);
                0.5 * r.dot(&r)
            }
            Family::Binomial => {
                let eta = self.x.dot(beta) + intercept;
                // sum ln(1 + e^eta) - y eta, stabilized for large |eta|.
                eta.iter()
                    .zip(self.y)
                    .map(|(&e, &yi)| {
                        let lse = if e > 30.0 { e } else { (1.0 + e.exp()).ln() };
                        lse - yi * e
                    })
                    .sum()
            }
        }
    }

    /// Gradient in beta plus the intercept derivative.
    fn gradient(&self, beta: &Array1<f64>, intercept: f64) -> (Array1<f64>, f64) {
        match self.family {
            Family::Gaussian => {
                let r = self.x.dot(beta) - self.y;
                (r.dot(&self.x), 0.0)
            }
            Family::Binomial => {
                let eta = self.x.dot(beta) + intercept;
                let probs = eta.mapv(|e| 1.0 / (1.0 + (-e).exp()));
                let r = &probs - self.y;
                let g0 = if self.intercept { r.sum() } else { 0.0 };
                (r.dot(&self.x), g0)
            }
        }
    }

    fn lipschitz_estimate(&self) -> f64 {
        let base = linalg::spectral_norm_sq(&self.x, 20);
        match self.family {
            Family::Gaussian => base.max(1e-12),
            // Logistic curvature is at most 1/4; the intercept column adds n.
            Family::Binomial => {
                0.25 * (base + if self.intercept { self.y.len() as f64 } else { 0.0 }).max(1e-12)
            }
        }
    }
}

/// Solves `min loss(beta) + J_lambda(beta)` where the loss is half squared
/// error (gaussian) or the logistic negative log-likelihood with an
/// unpenalized intercept (binomial).
pub fn fit_slope(d: &Dataset, lambda: &LambdaSequence, opts: &SlopeOptions) -> Result<SlopeFit> {
    lambda.validate()?;
    if lambda.len() != d.p() {
        return Err(Error::InvalidLambda(format!(
            "sequence length {} does not match p = {}",
            lambda.len(),
            d.p()
        )));
    }
    let loss = SmoothLoss {
        x: d.x.view(),
        y: &d.y,
        family: d.family,
        intercept: d.family == Family::Binomial,
    };
    let p = d.p();
    let start = match &opts.warm_start {
        Some(b) => {
            if b.len() != p {
                return Err(Error::InvalidArgument(format!(
                    "warm start length {} does not match p = {}",
                    b.len(),
                    p
                )));
            }
            Array1::from(b.clone())
        }
        None => Array1::zeros(p),
    };
    run_fista(&loss, lambda, start, opts)
}

fn objective(loss: &SmoothLoss, lambda: &LambdaSequence, beta: &Array1<f64>, b0: f64) -> f64 {
    loss.value(beta, b0) + sorted_l1_norm(beta.as_slice().unwrap(), lambda)
}

fn run_fista(
    loss: &SmoothLoss,
    lambda: &LambdaSequence,
    start: Array1<f64>,
    opts: &SlopeOptions,
) -> Result<SlopeFit> {
    let mut lip = loss.lipschitz_estimate();
    let mut x = start;
    let mut b0 = 0.0;
    let mut x_prev = x.clone();
    let mut b0_prev = b0;
    let mut t = 1.0_f64;
    let mut y_point = x.clone();
    let mut y_b0 = b0;
    let mut f_x = objective(loss, lambda, &x, b0);
    let mut converged = false;
    let mut iterations = 0;

    for iter in 0..opts.max_iter {
        iterations = iter + 1;
        let (grad, grad0) = loss.gradient(&y_point, y_b0);
        let f_y = loss.value(&y_point, y_b0);

        // Backtracking on the smooth majorization.
        let (z, z_b0) = loop {
            let step = 1.0 / lip;
            let shifted = &y_point - &(&grad * step);
            let scaled = lambda.scaled_by_unchecked(step);
            let z = Array1::from(prox_sorted_l1(shifted.as_slice().unwrap(), &scaled));
            let z_b0 = y_b0 - step * grad0;
            let dz = &z - &y_point;
            let d0 = z_b0 - y_b0;
            let quad =
                f_y + grad.dot(&dz) + grad0 * d0 + 0.5 * lip * (dz.dot(&dz) + d0 * d0);
            if loss.value(&z, z_b0) <= quad + 1e-12 * quad.abs().max(1.0) {
                break (z, z_b0);
            }
            lip *= 2.0;
            if !lip.is_finite() {
                return Err(Error::InvalidArgument(
                    "line search diverged; data may contain non-finite values".into(),
                ));
            }
        };

        let f_z = objective(loss, lambda, &z, z_b0);
        let (x_new, b0_new, f_new) = if opts.monotone && f_z > f_x {
            (x.clone(), b0, f_x)
        } else {
            (z.clone(), z_b0, f_z)
        };

        let t_new = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        // Monotone-FISTA momentum uses both the prox point and the accepted
        // iterate.
        y_point = &x_new + &((&z - &x_new) * (t / t_new)) + &((&x_new - &x_prev) * ((t - 1.0) / t_new));
        y_b0 = b0_new + (z_b0 - b0_new) * (t / t_new) + (b0_new - b0_prev) * ((t - 1.0) / t_new);

        let obj_change = (f_x - f_new).abs();
        x_prev = x;
        b0_prev = b0;
        x = x_new;
        b0 = b0_new;
        t = t_new;

        if obj_change <= opts.tol_objective * f_new.abs().max(1.0) {
            let (g, g0) = loss.gradient(&x, b0);
            let res = kkt_residual(
                x.as_slice().unwrap(),
                g.as_slice().unwrap(),
                lambda,
                1.0 / lip,
            )
            .max(g0.abs());
            if res <= opts.tol_kkt {
                f_x = f_new;
                converged = true;
                break;
            }
        }
        f_x = f_new;
    }

    let (g, g0) = loss.gradient(&x, b0);
    let res = kkt_residual(
        x.as_slice().unwrap(),
        g.as_slice().unwrap(),
        lambda,
        1.0 / lip,
    )
    .max(g0.abs());
    let clusters = magnitude_clusters(x.as_slice().unwrap(), opts.cluster_tol);
    Ok(SlopeFit {
        coefficients: x.to_vec(),
        intercept: b0,
        objective: f_x,
        kkt_residual: res,
        iterations,
        converged,
        clusters,
    })
}

/// Joint fit of the mean-shift model: coefficients beta plus a per-row shift
/// mu whose nonzero entries flag outliers.
#[derive(Debug, Clone)]
pub struct MeanShiftFit {
    pub beta: Vec<f64>,
    pub mu: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Default shift sequence `lambda_i = sigma sqrt(ln(2n/i))`.
pub fn mean_shift_mu_lambda(n: usize, sigma: f64) -> Result<LambdaSequence> {
    if sigma <= 0.0 {
        return Err(Error::InvalidLambda(format!(
            "sigma must be positive, got {sigma}"
        )));
    }
    LambdaSequence::explicit(
        (1..=n)
            .map(|i| sigma * ((2.0 * n as f64 / i as f64).ln()).sqrt())
            .collect(),
    )
}

/// Minimizes `1/2 ||y - X beta - mu||^2 + rho1 J_{lambda_beta}(beta)
/// + rho2 J_{lambda_mu}(mu)`; the prox separates over the two blocks.
pub fn fit_mean_shift(
    d: &Dataset,
    lambda_beta: &LambdaSequence,
    lambda_mu: &LambdaSequence,
    rho1: f64,
    rho2: f64,
    opts: &SlopeOptions,
) -> Result<MeanShiftFit> {
    if d.family != Family::Gaussian {
        return Err(Error::InvalidArgument(
            "mean-shift model requires a gaussian response".into(),
        ));
    }
    if rho1 <= 0.0 || rho2 <= 0.0 {
        return Err(Error::InvalidArgument(
            "penalty weights rho must be positive".into(),
        ));
    }
    lambda_beta.validate()?;
    lambda_mu.validate()?;
    let (n, p) = (d.n(), d.p());
    if lambda_beta.len() != p || lambda_mu.len() != n {
        return Err(Error::InvalidLambda(
            "sequence lengths must match p and n".into(),
        ));
    }
    let lam_b = lambda_beta.scaled_by_unchecked(rho1);
    let lam_m = lambda_mu.scaled_by_unchecked(rho2);

    // Lipschitz constant of the augmented operator [X I].
    let mut lip = (linalg::spectral_norm_sq(&d.x.view(), 20) + 1.0).max(1e-12);

    let mut beta = Array1::<f64>::zeros(p);
    let mut mu = Array1::<f64>::zeros(n);
    let (mut beta_prev, mut mu_prev) = (beta.clone(), mu.clone());
    let (mut yb, mut ym) = (beta.clone(), mu.clone());
    let mut t = 1.0_f64;
    let obj = |b: &Array1<f64>, m: &Array1<f64>| -> f64 {
        let r = &d.y - &d.x.dot(b) - m;
        0.5 * r.dot(&r)
            + sorted_l1_norm(b.as_slice().unwrap(), &lam_b)
            + sorted_l1_norm(m.as_slice().unwrap(), &lam_m)
    };
    let mut f_x = obj(&beta, &mu);
    let mut converged = false;
    let mut iterations = 0;

    for iter in 0..opts.max_iter {
        iterations = iter + 1;
        let resid = &d.x.dot(&yb) + &ym - &d.y;
        let grad_b = resid.dot(&d.x);
        let smooth_y = 0.5 * resid.dot(&resid);

        let (zb, zm) = loop {
            let step = 1.0 / lip;
            let sb = &yb - &(&grad_b * step);
            let sm = &ym - &(&resid * step);
            let zb = Array1::from(prox_sorted_l1(
                sb.as_slice().unwrap(),
                &lam_b.scaled_by_unchecked(step),
            ));
            let zm = Array1::from(prox_sorted_l1(
                sm.as_slice().unwrap(),
                &lam_m.scaled_by_unchecked(step),
            ));
            let db = &zb - &yb;
            let dm = &zm - &ym;
            let r_new = &d.x.dot(&zb) + &zm - &d.y;
            let quad = smooth_y
                + grad_b.dot(&db)
                + resid.dot(&dm)
                + 0.5 * lip * (db.dot(&db) + dm.dot(&dm));
            if 0.5 * r_new.dot(&r_new) <= quad + 1e-12 * quad.abs().max(1.0) {
                break (zb, zm);
            }
            lip *= 2.0;
        };

        let f_z = obj(&zb, &zm);
        let (bn, mn, f_new) = if opts.monotone && f_z > f_x {
            (beta.clone(), mu.clone(), f_x)
        } else {
            (zb.clone(), zm.clone(), f_z)
        };
        let t_new = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        yb = &bn + &((&zb - &bn) * (t / t_new)) + &((&bn - &beta_prev) * ((t - 1.0) / t_new));
        ym = &mn + &((&zm - &mn) * (t / t_new)) + &((&mn - &mu_prev) * ((t - 1.0) / t_new));

        let change = (f_x - f_new).abs();
        beta_prev = beta;
        mu_prev = mu;
        beta = bn;
        mu = mn;
        t = t_new;
        f_x = f_new;
        if change <= opts.tol_objective * f_new.abs().max(1.0) {
            let r = &d.x.dot(&beta) + &mu - &d.y;
            let gb = r.dot(&d.x);
            let step = 1.0 / lip;
            let res = kkt_residual(beta.as_slice().unwrap(), gb.as_slice().unwrap(), &lam_b, step)
                .max(kkt_residual(
                    mu.as_slice().unwrap(),
                    r.as_slice().unwrap(),
                    &lam_m,
                    step,
                ));
            if res <= opts.tol_kkt {
                converged = true;
                break;
            }
        }
    }

    Ok(MeanShiftFit {
        beta: beta.to_vec(),
        mu: mu.to_vec(),
        objective: f_x,
        iterations,
        converged,
    })
}

/// One point on a scaled-sequence path.
#[derive(Debug, Clone)]
pub struct SlopePathPoint {
    pub scale: f64,
    pub fit: SlopeFit,
}

/// Fits a path over `scale * lambda`, largest scale first so each fit warm
/// starts from the previous (sparser) solution. Per-point nonzero and cluster
/// counts are the path diagnostics.
pub fn slope_path(
    d: &Dataset,
    lambda: &LambdaSequence,
    scales: &[f64],
    opts: &SlopeOptions,
) -> Result<Vec<SlopePathPoint>> {
    let mut grid: Vec<f64> = scales.to_vec();
    if grid.iter().any(|c| *c <= 0.0) {
        return Err(Error::InvalidArgument("path scales must be positive".into()));
    }
    grid.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut out = Vec::with_capacity(grid.len());
    let mut warm: Option<Vec<f64>> = None;
    for &c in &grid {
        let scaled = lambda.scaled(c)?;
        let mut o = opts.clone();
        o.warm_start = warm.clone();
        let fit = fit_slope(d, &scaled, &o)?;
        warm = Some(fit.coefficients.clone());
        out.push(SlopePathPoint { scale: c, fit });
    }
    Ok(out)
}
