//! Declarative simulation scenarios, replicate execution, and metric
//! aggregation (FDR, FWER, power, misclassifications, MSE, MSP).
//!
//! Replicate `i` draws everything from `RngStream(seed, i)` in a fixed
//! order (design, effects, noise, knockoffs), so a scenario reproduces
//! bit-identically under any thread count. A fresh design is drawn per
//! replicate. Aggregation reduces the per-replicate records in index order.

use crate::criteria::{CriterionKind, CriterionSpec};
use crate::cv::{cv_select, CvSpec};
use crate::data::{
    draw_gaussian_design, row_covariance, BlockDef, Dataset, Family, SigmaModel,
};
use crate::error::{Error, Result};
use crate::glm;
use crate::knockoffs;
use crate::lasso;
use crate::normal;
use crate::parallel;
use crate::rng::RngStream;
use crate::slope::{fit_slope, make_lambda, LambdaRule, SlopeOptions};
use crate::stepwise::{select, SearchOptions, SearchPlan};
use ndarray::Array1;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// How the regressor count scales with n.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PRule {
    Constant(usize),
    /// `p = round(factor * sqrt(n))`.
    SqrtTimes(f64),
    EqualsN,
    /// `p = round(coef * n^exp)`.
    PowerLaw { coef: f64, exp: f64 },
}

/// How the signal count scales with n.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KRule {
    Constant(usize),
    /// `k = round(n^alpha)`.
    Power(f64),
}

/// Magnitude of the nonzero coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EffectRule {
    Constant(f64),
    /// `sqrt(2 ln(p/k))`.
    SqrtTwoLogPOverK,
    /// `gamma * sqrt(2 ln p)`: the scaled universal-threshold magnitude.
    Scaled(f64),
    /// Drawn i.i.d. from `N(0, tau2)` per replicate.
    Normal(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RowScale {
    One,
    InvSqrtN,
}

impl RowScale {
    pub fn value(&self, n: usize) -> f64 {
        match self {
            RowScale::One => 1.0,
            RowScale::InvSqrtN => 1.0 / (n as f64).sqrt(),
        }
    }
}

/// Where the causal coordinates sit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SupportRule {
    /// Indices `0..k`.
    FirstK,
    /// The block-study pattern: within each run of equal-sized correlated
    /// blocks the first block carries 3 causal variables, the next 2, the
    /// next 1, the rest none; the first 4 singleton columns are causal.
    BlockPattern,
}

/// One selection/estimation method evaluated by the harness.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MethodSpec {
    Criterion(CriterionKind),
    SlopeBh,
    SlopeInflated { delta: f64 },
    SlopeHeuristic,
    LassoBonferroni,
    LassoCv,
    SlopeCv,
    KnockoffLassoCv,
    /// Returns the generating model exactly; a testing hook.
    OracleTruth,
}

impl MethodSpec {
    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "aic" | "bic" | "ric" | "mbic" | "maic" | "mbic2" | "maic2" | "ebic" => {
                Ok(MethodSpec::Criterion(CriterionKind::parse(s)?))
            }
            "slope-bh" => Ok(MethodSpec::SlopeBh),
            "slope-inflated-05" => Ok(MethodSpec::SlopeInflated { delta: 0.05 }),
            "slope-inflated-10" => Ok(MethodSpec::SlopeInflated { delta: 0.10 }),
            "slope-heur" | "slope-heuristic" => Ok(MethodSpec::SlopeHeuristic),
            "lasso-bon" | "lasso-bonferroni" => Ok(MethodSpec::LassoBonferroni),
            "lasso-cv" => Ok(MethodSpec::LassoCv),
            "slope-cv" => Ok(MethodSpec::SlopeCv),
            "knockoff-lasso-cv" | "knlcv" => Ok(MethodSpec::KnockoffLassoCv),
            "oracle" => Ok(MethodSpec::OracleTruth),
            other => Err(Error::UnknownMethod(other.to_string())),
        }
    }

    pub fn name(&self) -> String {
        match self {
            MethodSpec::Criterion(k) => k.name().to_string(),
            MethodSpec::SlopeBh => "slope-bh".into(),
            MethodSpec::SlopeInflated { delta } => {
                format!("slope-inflated-{:02}", (delta * 100.0).round() as u32)
            }
            MethodSpec::SlopeHeuristic => "slope-heur".into(),
            MethodSpec::LassoBonferroni => "lasso-bon".into(),
            MethodSpec::LassoCv => "lasso-cv".into(),
            MethodSpec::SlopeCv => "slope-cv".into(),
            MethodSpec::KnockoffLassoCv => "knockoff-lasso-cv".into(),
            MethodSpec::OracleTruth => "oracle".into(),
        }
    }
}

/// A fully specified simulation cell.
#[derive(Debug, Clone)]
pub struct ScenarioSpec {
    pub name: String,
    pub n: usize,
    pub p_rule: PRule,
    pub k_rule: KRule,
    pub effect: EffectRule,
    pub design: SigmaModel,
    pub row_scale: RowScale,
    pub support: SupportRule,
    pub replicates: usize,
    pub methods: Vec<MethodSpec>,
    pub seed: u64,
    pub sigma: f64,
    /// Nominal FDR level passed to SLOPE sequences and knockoffs.
    pub q: f64,
}

impl ScenarioSpec {
    pub fn p(&self) -> usize {
        match (&self.p_rule, &self.design) {
            (_, SigmaModel::Block { blocks }) => blocks.iter().map(|b| b.size).sum(),
            (PRule::Constant(p), _) => *p,
            (PRule::SqrtTimes(f), _) => (f * (self.n as f64).sqrt()).round() as usize,
            (PRule::EqualsN, _) => self.n,
            (PRule::PowerLaw { coef, exp }, _) => {
                (coef * (self.n as f64).powf(*exp)).round() as usize
            }
        }
    }

    pub fn k(&self) -> usize {
        match self.support {
            SupportRule::BlockPattern => self.support_indices().len(),
            SupportRule::FirstK => match self.k_rule {
                KRule::Constant(k) => k,
                KRule::Power(alpha) => (self.n as f64).powf(alpha).round() as usize,
            },
        }
    }

    pub fn support_indices(&self) -> Vec<usize> {
        match self.support {
            SupportRule::FirstK => {
                let k = match self.k_rule {
                    KRule::Constant(k) => k,
                    KRule::Power(alpha) => (self.n as f64).powf(alpha).round() as usize,
                };
                (0..k).collect()
            }
            SupportRule::BlockPattern => {
                let SigmaModel::Block { blocks } = &self.design else {
                    return vec![];
                };
                let mut out = Vec::new();
                let mut offset = 0;
                let mut run_size = 0;
                let mut run_pos = 0;
                let mut singles = 0;
                for b in blocks {
                    if b.size == 1 {
                        if singles < 4 {
                            out.push(offset);
                            singles += 1;
                        }
                    } else {
                        if b.size == run_size {
                            run_pos += 1;
                        } else {
                            run_size = b.size;
                            run_pos = 0;
                        }
                        let causal = 3usize.saturating_sub(run_pos);
                        for i in 0..causal.min(b.size) {
                            out.push(offset + i);
                        }
                    }
                    offset += b.size;
                }
                out
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (p, k) = (self.p(), self.k());
        if k > p {
            return Err(Error::InvalidArgument(format!("k = {k} exceeds p = {p}")));
        }
        if self.replicates == 0 {
            return Err(Error::InvalidArgument("need at least one replicate".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::InvalidArgument("no methods listed".into()));
        }
        if self.sigma <= 0.0 {
            return Err(Error::InvalidArgument("sigma must be positive".into()));
        }
        if !(self.q > 0.0 && self.q < 1.0) {
            return Err(Error::InvalidArgument("q must lie in (0,1)".into()));
        }
        Ok(())
    }
}

/// The block-correlation layout: four blocks each of sizes 32, 16, 8, 4,
/// plus 16 independent columns (p = 256, 28 causal under the pattern).
pub fn block_study_design(rho: f64) -> SigmaModel {
    let mut blocks = Vec::new();
    for size in [32usize, 16, 8, 4] {
        for _ in 0..4 {
            blocks.push(BlockDef { size, rho });
        }
    }
    for _ in 0..16 {
        blocks.push(BlockDef { size: 1, rho: 0.0 });
    }
    SigmaModel::Block { blocks }
}

const ALL_CRITERIA: [MethodSpec; 5] = [
    MethodSpec::Criterion(CriterionKind::Bic),
    MethodSpec::Criterion(CriterionKind::MBic),
    MethodSpec::Criterion(CriterionKind::MAic),
    MethodSpec::Criterion(CriterionKind::MBic2),
    MethodSpec::Criterion(CriterionKind::MAic2),
];

/// Builds a named built-in scenario. `n`, `rho` and `k` override the
/// defaults where the study is parameterized by them.
pub fn builtin_scenario(
    name: &str,
    n: Option<usize>,
    rho: Option<f64>,
    k: Option<usize>,
) -> Result<ScenarioSpec> {
    let base = |name: &str, n: usize| ScenarioSpec {
        name: name.to_string(),
        n,
        p_rule: PRule::Constant(49),
        k_rule: KRule::Constant(0),
        effect: EffectRule::Constant(0.4),
        design: SigmaModel::Identity,
        row_scale: RowScale::One,
        support: SupportRule::FirstK,
        replicates: 1000,
        methods: ALL_CRITERIA.to_vec(),
        seed: 20210,
        sigma: 1.0,
        q: 0.2,
    };
    // The scenario tables: (n, p, k) triples as published.
    let table = |rows: &[(usize, usize, usize)], n: usize| -> Result<(usize, usize)> {
        rows.iter()
            .find(|(rn, _, _)| *rn == n)
            .map(|&(_, p, k)| (p, k))
            .ok_or_else(|| {
                Error::UnknownScenario(format!(
                    "n = {n} is not tabulated; valid: {:?}",
                    rows.iter().map(|r| r.0).collect::<Vec<_>>()
                ))
            })
    };
    match name {
        "scenario0" => {
            let n = n.unwrap_or(1024);
            let rows = [
                (49, 49, 0),
                (100, 49, 0),
                (225, 49, 0),
                (529, 49, 0),
                (1024, 49, 0),
                (2048, 49, 0),
            ];
            let (p, k) = table(&rows, n)?;
            let mut s = base("scenario0", n);
            s.p_rule = PRule::Constant(p);
            s.k_rule = KRule::Constant(k);
            Ok(s)
        }
        "scenario1" => {
            let n = n.unwrap_or(1024);
            let rows = [
                (49, 49, 5),
                (100, 49, 5),
                (225, 49, 5),
                (529, 49, 5),
                (1024, 49, 5),
                (2048, 49, 5),
            ];
            let (p, k) = table(&rows, n)?;
            let mut s = base("scenario1", n);
            s.p_rule = PRule::Constant(p);
            s.k_rule = KRule::Constant(k);
            Ok(s)
        }
        "scenario2" => {
            let n = n.unwrap_or(1024);
            let rows = [
                (49, 49, 5),
                (100, 70, 7),
                (225, 105, 10),
                (529, 161, 13),
                (1024, 224, 16),
            ];
            let (p, k) = table(&rows, n)?;
            let mut s = base("scenario2", n);
            s.p_rule = PRule::Constant(p);
            s.k_rule = KRule::Constant(k);
            Ok(s)
        }
        "scenario3" => {
            let n = n.unwrap_or(1024);
            let rows = [
                (49, 49, 5),
                (100, 100, 7),
                (225, 225, 10),
                (529, 529, 15),
                (1024, 1024, 20),
            ];
            let (p, k) = table(&rows, n)?;
            let mut s = base("scenario3", n);
            s.p_rule = PRule::Constant(p);
            s.k_rule = KRule::Constant(k);
            Ok(s)
        }
        "block" => {
            // The sample size is not published for this study; n = 400 puts
            // the FDR of the factorial-relaxed criteria at the reported
            // levels under rho = 0 while staying clear of the saturation
            // cascade that greedy search hits when p/n grows past ~2.
            let mut s = base("block", n.unwrap_or(400));
            s.design = block_study_design(rho.unwrap_or(0.0));
            s.support = SupportRule::BlockPattern;
            s.k_rule = KRule::Constant(28);
            s.effect = EffectRule::Normal(0.5);
            s.replicates = 2000;
            Ok(s)
        }
        "slope-vs-lasso-ind" | "slope-vs-lasso-corr" => {
            let n = n.unwrap_or(1000);
            let mut s = base(name, n);
            s.p_rule = PRule::EqualsN;
            s.k_rule = KRule::Constant(k.unwrap_or(100));
            s.effect = EffectRule::SqrtTwoLogPOverK;
            s.design = if name.ends_with("corr") {
                SigmaModel::CompoundSymmetry {
                    rho: rho.unwrap_or(0.5),
                }
            } else {
                SigmaModel::Identity
            };
            s.row_scale = RowScale::InvSqrtN;
            s.replicates = 100;
            s.methods = vec![MethodSpec::SlopeCv, MethodSpec::LassoCv];
            Ok(s)
        }
        "asymptotic-fdr" => {
            let n = n.unwrap_or(200);
            let mut s = base(name, n);
            s.p_rule = PRule::PowerLaw {
                coef: 0.05,
                exp: 1.5,
            };
            s.k_rule = KRule::Power(0.4);
            s.effect = EffectRule::Scaled(0.9);
            s.row_scale = RowScale::InvSqrtN;
            s.replicates = 500;
            s.methods = vec![
                MethodSpec::SlopeBh,
                MethodSpec::SlopeInflated { delta: 0.05 },
                MethodSpec::SlopeInflated { delta: 0.10 },
                MethodSpec::SlopeHeuristic,
                MethodSpec::LassoBonferroni,
            ];
            Ok(s)
        }
        "advanced-weak" | "advanced-strong" => {
            let n = n.unwrap_or(500);
            let mut s = base(name, n);
            s.p_rule = PRule::EqualsN;
            s.k_rule = KRule::Constant(k.unwrap_or(40));
            s.effect =
                EffectRule::Scaled(if name.ends_with("strong") { 2.0 } else { 1.3 });
            s.design = match rho {
                Some(r) if r > 0.0 => SigmaModel::CompoundSymmetry { rho: r },
                _ => SigmaModel::Identity,
            };
            s.row_scale = RowScale::InvSqrtN;
            s.replicates = 200;
            s.methods = vec![
                MethodSpec::Criterion(CriterionKind::MBic2),
                MethodSpec::SlopeHeuristic,
                MethodSpec::LassoCv,
                MethodSpec::KnockoffLassoCv,
            ];
            Ok(s)
        }
        other => Err(Error::UnknownScenario(other.to_string())),
    }
}

/// The default instantiation of every built-in scenario.
pub fn builtin_scenarios() -> Vec<ScenarioSpec> {
    [
        ("scenario0", None, None, None),
        ("scenario1", None, None, None),
        ("scenario2", None, None, None),
        ("scenario3", None, None, None),
        ("block", None, Some(0.0), None),
        ("slope-vs-lasso-ind", None, None, None),
        ("slope-vs-lasso-corr", None, None, None),
        ("asymptotic-fdr", None, None, None),
        ("advanced-weak", None, None, None),
        ("advanced-strong", None, None, None),
    ]
    .iter()
    .map(|(name, n, rho, k)| builtin_scenario(name, *n, *rho, *k).expect("builtin"))
    .collect()
}

// ---------------------------------------------------------------------------
// Replicate execution
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
struct MethodOutcome {
    selected: Vec<usize>,
    beta_hat: Vec<f64>,
    intercept: f64,
}

fn realize_replicate(spec: &ScenarioSpec, rep: usize) -> Result<(Dataset, Vec<usize>, Array1<f64>)> {
    let (n, p) = (spec.n, spec.p());
    let mut rng = RngStream::new(spec.seed, rep as u64);
    let x = draw_gaussian_design(n, p, &spec.design, spec.row_scale.value(n), &mut rng)?;
    let support = spec.support_indices();
    let k = support.len();
    let mut beta = Array1::<f64>::zeros(p);
    let magnitude = |p: usize, k: usize| match spec.effect {
        EffectRule::Constant(b) => b,
        EffectRule::SqrtTwoLogPOverK => (2.0 * (p as f64 / k.max(1) as f64).ln()).sqrt(),
        EffectRule::Scaled(gamma) => gamma * (2.0 * (p as f64).ln()).sqrt(),
        EffectRule::Normal(_) => 0.0,
    };
    match spec.effect {
        EffectRule::Normal(tau2) => {
            let sd = tau2.sqrt();
            for &j in &support {
                beta[j] = sd * rng.normal();
            }
        }
        _ => {
            let b = magnitude(p, k);
            for &j in &support {
                beta[j] = b;
            }
        }
    }
    let noise = rng.normal_vec(n);
    let y = x.dot(&beta) + noise * spec.sigma;
    let d = Dataset::new(
        y,
        x,
        (0..p).map(|j| format!("v{j}")).collect(),
        Family::Gaussian,
    )?;
    Ok((d, support, beta))
}

fn eval_method(
    spec: &ScenarioSpec,
    method: MethodSpec,
    d: &Dataset,
    truth_support: &[usize],
    truth_beta: &Array1<f64>,
    rep: usize,
    knockoff_rng: &mut RngStream,
) -> Result<MethodOutcome> {
    let p = d.p();
    let cv_seed = spec.seed ^ (rep as u64).wrapping_mul(0x9E3779B97F4A7C15);
    let dense = |support: &[usize], coefs: &[f64]| {
        let mut b = vec![0.0; p];
        for (&j, &v) in support.iter().zip(coefs) {
            b[j] = v;
        }
        b
    };
    match method {
        MethodSpec::Criterion(kind) => {
            let cs = CriterionSpec::new(kind, p);
            let plan = SearchPlan::simulation(cs);
            let fit = select(d, &plan, SearchOptions::default())?;
            Ok(MethodOutcome {
                beta_hat: dense(&fit.support, &fit.coefficients),
                selected: fit.support,
                intercept: fit.intercept,
            })
        }
        MethodSpec::SlopeBh => {
            let lam = make_lambda(
                LambdaRule::Bh {
                    c: spec.sigma,
                    q: spec.q,
                },
                p,
            )?;
            let fit = fit_slope(d, &lam, &harness_slope_options())?;
            Ok(MethodOutcome {
                selected: fit.support(),
                beta_hat: fit.coefficients,
                intercept: fit.intercept,
            })
        }
        MethodSpec::SlopeInflated { delta } => {
            let lam = make_lambda(LambdaRule::InflatedBh { delta, q: spec.q }, p)?
                .scaled(spec.sigma)?;
            let fit = fit_slope(d, &lam, &harness_slope_options())?;
            Ok(MethodOutcome {
                selected: fit.support(),
                beta_hat: fit.coefficients,
                intercept: fit.intercept,
            })
        }
        MethodSpec::SlopeHeuristic => {
            let lam = make_lambda(
                LambdaRule::Heuristic {
                    q: spec.q,
                    sigma: spec.sigma,
                    n: d.n(),
                },
                p,
            )?;
            let fit = fit_slope(d, &lam, &harness_slope_options())?;
            Ok(MethodOutcome {
                selected: fit.support(),
                beta_hat: fit.coefficients,
                intercept: fit.intercept,
            })
        }
        MethodSpec::LassoBonferroni => {
            // The Bonferroni threshold presumes unit-norm columns; scale by
            // the RMS column norm so both row-scale conventions work.
            let rms = ((0..p)
                .map(|j| d.x.column(j).dot(&d.x.column(j)))
                .sum::<f64>()
                / p as f64)
                .sqrt();
            let lam = spec.sigma * normal::quantile_upper(spec.q / (2.0 * p as f64)) * rms;
            let fit = lasso::fit_lasso(
                &d.x.view(),
                &d.y.view(),
                d.family,
                lam,
                &lasso::LassoOptions::default(),
            )?;
            Ok(MethodOutcome {
                selected: fit.support(),
                beta_hat: fit.coefficients,
                intercept: 0.0,
            })
        }
        MethodSpec::LassoCv => {
            let cv = CvSpec::lasso_default(d, cv_seed);
            let res = cv_select(d, &cv)?;
            Ok(MethodOutcome {
                selected: res.support,
                beta_hat: res.coefficients,
                intercept: res.intercept,
            })
        }
        MethodSpec::SlopeCv => {
            let cv = CvSpec::slope_default(d, cv_seed);
            let res = cv_select(d, &cv)?;
            Ok(MethodOutcome {
                selected: res.support,
                beta_hat: res.coefficients,
                intercept: res.intercept,
            })
        }
        MethodSpec::KnockoffLassoCv => {
            let sigma = row_covariance(&spec.design, p, spec.row_scale.value(d.n()))?;
            let res = knockoffs::knockoff_filter(d, &sigma.view(), spec.q, knockoff_rng, cv_seed)?;
            // Least-squares refit on the selected support for estimation.
            let refit = glm::fit_submodel(d, &res.selected)?;
            Ok(MethodOutcome {
                beta_hat: dense(&res.selected, &refit.coefficients),
                selected: res.selected,
                intercept: refit.intercept,
            })
        }
        MethodSpec::OracleTruth => Ok(MethodOutcome {
            selected: truth_support.to_vec(),
            beta_hat: truth_beta.to_vec(),
            intercept: 0.0,
        }),
    }
}

fn harness_slope_options() -> SlopeOptions {
    SlopeOptions {
        max_iter: 5000,
        tol_objective: 1e-7,
        tol_kkt: 1e-5,
        ..SlopeOptions::default()
    }
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

/// One method's outcome on one replicate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReplicateRecord {
    pub replicate: usize,
    pub method: String,
    pub tp: usize,
    pub fp: usize,
    pub fn_count: usize,
    pub fdp: f64,
    pub any_fp: bool,
    pub mse: f64,
    pub msp: f64,
    pub rel_mse: f64,
    pub rel_msp: f64,
    pub failed: bool,
}

/// Confusion counts against the generating support.
pub fn confusion(selected: &[usize], truth: &[usize]) -> (usize, usize, usize) {
    let truth_set: std::collections::HashSet<usize> = truth.iter().copied().collect();
    let tp = selected.iter().filter(|j| truth_set.contains(j)).count();
    let fp = selected.len() - tp;
    let fn_count = truth.len() - tp;
    (tp, fp, fn_count)
}

/// `fdp = fp / max(1, fp + tp)`.
pub fn false_discovery_proportion(tp: usize, fp: usize) -> f64 {
    fp as f64 / 1.0_f64.max((fp + tp) as f64)
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: f64,
    pub se: f64,
    pub count: usize,
}

impl MetricSummary {
    /// Mean and Monte-Carlo standard error over the finite entries,
    /// accumulated in index order.
    pub fn from_values(values: &[f64]) -> Self {
        let finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
        let count = finite.len();
        if count == 0 {
            return Self {
                mean: f64::NAN,
                se: f64::NAN,
                count: 0,
            };
        }
        let mean = finite.iter().sum::<f64>() / count as f64;
        let se = if count > 1 {
            let var =
                finite.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (count as f64 - 1.0);
            (var / count as f64).sqrt()
        } else {
            0.0
        };
        Self { mean, se, count }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MethodMetrics {
    pub method: String,
    pub replicates: usize,
    pub failures: usize,
    pub fdr: MetricSummary,
    pub fwer: MetricSummary,
    /// `mean(TP) / k`; NaN when the scenario is all-null.
    pub power: MetricSummary,
    pub mean_fp: MetricSummary,
    pub misclassifications: MetricSummary,
    pub mse: MetricSummary,
    pub msp: MetricSummary,
    pub rel_mse: MetricSummary,
    pub rel_msp: MetricSummary,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsReport {
    pub scenario: String,
    pub n: usize,
    pub p: usize,
    pub k: usize,
    pub replicates: usize,
    pub seed: u64,
    pub per_method: Vec<MethodMetrics>,
    pub records: Vec<ReplicateRecord>,
}

impl MetricsReport {
    pub fn method(&self, name: &str) -> Option<&MethodMetrics> {
        self.per_method.iter().find(|m| m.method == name)
    }
}

/// Runs every method over every replicate and aggregates.
pub fn run_scenario(spec: &ScenarioSpec, replicate_override: Option<usize>) -> Result<MetricsReport> {
    let mut spec = spec.clone();
    if let Some(r) = replicate_override {
        spec.replicates = r;
    }
    spec.validate()?;
    let reps = spec.replicates;
    let per_replicate: Vec<Result<Vec<ReplicateRecord>>> = parallel::par_map(reps, |rep| {
        let (d, support, beta) = realize_replicate(&spec, rep)?;
        let norm_beta_sq: f64 = beta.dot(&beta);
        let mu = d.x.dot(&beta);
        let norm_mu_sq: f64 = mu.dot(&mu);
        // Knockoff noise comes from a separate stream so adding methods
        // never perturbs the data draw.
        let mut knockoff_rng = RngStream::new(spec.seed ^ 0x6b6e6f636b, rep as u64);
        let mut records = Vec::with_capacity(spec.methods.len());
        for &method in &spec.methods {
            let outcome = eval_method(&spec, method, &d, &support, &beta, rep, &mut knockoff_rng);
            let record = match outcome {
                Ok(out) => {
                    let (tp, fp, fn_count) = confusion(&out.selected, &support);
                    let bh = Array1::from(out.beta_hat.clone());
                    let diff = &bh - &beta;
                    let mse = diff.dot(&diff);
                    let pred_diff = d.x.dot(&diff) + out.intercept;
                    let msp = pred_diff.dot(&pred_diff);
                    ReplicateRecord {
                        replicate: rep,
                        method: method.name(),
                        tp,
                        fp,
                        fn_count,
                        fdp: false_discovery_proportion(tp, fp),
                        any_fp: fp > 0,
                        mse,
                        msp,
                        rel_mse: if norm_beta_sq > 0.0 {
                            mse / norm_beta_sq
                        } else {
                            f64::NAN
                        },
                        rel_msp: if norm_mu_sq > 0.0 {
                            msp / norm_mu_sq
                        } else {
                            f64::NAN
                        },
                        failed: false,
                    }
                }
                Err(_) => ReplicateRecord {
                    replicate: rep,
                    method: method.name(),
                    tp: 0,
                    fp: 0,
                    fn_count: 0,
                    fdp: f64::NAN,
                    any_fp: false,
                    mse: f64::NAN,
                    msp: f64::NAN,
                    rel_mse: f64::NAN,
                    rel_msp: f64::NAN,
                    failed: true,
                },
            };
            records.push(record);
        }
        Ok(records)
    });

    let mut records = Vec::with_capacity(reps * spec.methods.len());
    for r in per_replicate {
        records.extend(r?);
    }
    let k = spec.k();
    let per_method = spec
        .methods
        .iter()
        .map(|m| summarize_method(&m.name(), &records, k))
        .collect();
    Ok(MetricsReport {
        scenario: spec.name.clone(),
        n: spec.n,
        p: spec.p(),
        k,
        replicates: reps,
        seed: spec.seed,
        per_method,
        records,
    })
}

fn summarize_method(name: &str, records: &[ReplicateRecord], k: usize) -> MethodMetrics {
    let mine: Vec<&ReplicateRecord> = records.iter().filter(|r| r.method == name).collect();
    let ok: Vec<&ReplicateRecord> = mine.iter().copied().filter(|r| !r.failed).collect();
    let failures = mine.len() - ok.len();
    let collect = |f: &dyn Fn(&ReplicateRecord) -> f64| -> Vec<f64> {
        ok.iter().map(|r| f(r)).collect()
    };
    let power_values: Vec<f64> = if k > 0 {
        ok.iter().map(|r| r.tp as f64 / k as f64).collect()
    } else {
        vec![]
    };
    MethodMetrics {
        method: name.to_string(),
        replicates: mine.len(),
        failures,
        fdr: MetricSummary::from_values(&collect(&|r| r.fdp)),
        fwer: MetricSummary::from_values(&collect(&|r| if r.any_fp { 1.0 } else { 0.0 })),
        power: MetricSummary::from_values(&power_values),
        mean_fp: MetricSummary::from_values(&collect(&|r| r.fp as f64)),
        misclassifications: MetricSummary::from_values(&collect(&|r| (r.fp + r.fn_count) as f64)),
        mse: MetricSummary::from_values(&collect(&|r| r.mse)),
        msp: MetricSummary::from_values(&collect(&|r| r.msp)),
        rel_mse: MetricSummary::from_values(&collect(&|r| r.rel_mse)),
        rel_msp: MetricSummary::from_values(&collect(&|r| r.rel_msp)),
    }
}

/// Bayes risk `p ((1 - eta) t1 delta0 + eta t2 deltaA)`; with unit losses it
/// is the expected misclassification count.
pub fn bayes_risk(t1: f64, t2: f64, eta: f64, p: usize, delta0: f64, delta_a: f64) -> f64 {
    p as f64 * ((1.0 - eta) * t1 * delta0 + eta * t2 * delta_a)
}

// ---------------------------------------------------------------------------
// Config files and CSV output
// ---------------------------------------------------------------------------

#[derive(Debug, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
struct ScenarioConfig {
    name: Option<String>,
    n: usize,
    p_rule: PRule,
    k_rule: KRule,
    effect: EffectRule,
    design: DesignConfig,
    row_scale: Option<RowScale>,
    support: Option<SupportRule>,
    replicates: usize,
    methods: Vec<String>,
    seed: u64,
    sigma: Option<f64>,
    q: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum DesignConfig {
    Identity,
    CompoundSymmetry { rho: f64 },
    Block { blocks: Vec<BlockDef> },
    BlockStudy { rho: f64 },
}

/// Parses a scenario from its TOML document (keys: `n`, `p-rule`, `k-rule`,
/// `effect`, `design`, `replicates`, `methods`, `seed`, and optional
/// `row-scale`, `support`, `sigma`, `q`, `name`).
pub fn parse_scenario_toml(text: &str) -> Result<ScenarioSpec> {
    let cfg: ScenarioConfig =
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    let methods = cfg
        .methods
        .iter()
        .map(|s| MethodSpec::parse(s))
        .collect::<Result<Vec<_>>>()?;
    let design = match cfg.design {
        DesignConfig::Identity => SigmaModel::Identity,
        DesignConfig::CompoundSymmetry { rho } => SigmaModel::CompoundSymmetry { rho },
        DesignConfig::Block { blocks } => SigmaModel::Block { blocks },
        DesignConfig::BlockStudy { rho } => block_study_design(rho),
    };
    let spec = ScenarioSpec {
        name: cfg.name.unwrap_or_else(|| "custom".into()),
        n: cfg.n,
        p_rule: cfg.p_rule,
        k_rule: cfg.k_rule,
        effect: cfg.effect,
        design,
        row_scale: cfg.row_scale.unwrap_or(RowScale::One),
        support: cfg.support.unwrap_or(SupportRule::FirstK),
        replicates: cfg.replicates,
        methods,
        seed: cfg.seed,
        sigma: cfg.sigma.unwrap_or(1.0),
        q: cfg.q.unwrap_or(0.2),
    };
    spec.validate()?;
    Ok(spec)
}

pub fn read_scenario_file(path: impl AsRef<Path>) -> Result<ScenarioSpec> {
    let text = std::fs::read_to_string(path.as_ref())?;
    parse_scenario_toml(&text)
}

fn fmt(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.10e}")
    } else {
        String::new()
    }
}

/// Aggregate table: one row per method.
pub fn write_aggregate_csv(report: &MetricsReport, path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path.as_ref())?;
    w.write_record([
        "scenario", "n", "p", "k", "method", "replicates", "failures", "fdr", "fdr_se", "fwer",
        "fwer_se", "power", "power_se", "mean_fp", "mean_fp_se", "misclass", "misclass_se", "mse",
        "mse_se", "msp", "msp_se", "rel_mse", "rel_mse_se", "rel_msp", "rel_msp_se",
    ])?;
    for m in &report.per_method {
        w.write_record([
            report.scenario.clone(),
            report.n.to_string(),
            report.p.to_string(),
            report.k.to_string(),
            m.method.clone(),
            m.replicates.to_string(),
            m.failures.to_string(),
            fmt(m.fdr.mean),
            fmt(m.fdr.se),
            fmt(m.fwer.mean),
            fmt(m.fwer.se),
            fmt(m.power.mean),
            fmt(m.power.se),
            fmt(m.mean_fp.mean),
            fmt(m.mean_fp.se),
            fmt(m.misclassifications.mean),
            fmt(m.misclassifications.se),
            fmt(m.mse.mean),
            fmt(m.mse.se),
            fmt(m.msp.mean),
            fmt(m.msp.se),
            fmt(m.rel_mse.mean),
            fmt(m.rel_mse.se),
            fmt(m.rel_msp.mean),
            fmt(m.rel_msp.se),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Raw per-replicate records.
pub fn write_records_csv(report: &MetricsReport, path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path.as_ref())?;
    w.write_record([
        "replicate", "method", "tp", "fp", "fn", "fdp", "any_fp", "mse", "msp", "rel_mse",
        "rel_msp", "failed",
    ])?;
    for r in &report.records {
        w.write_record([
            r.replicate.to_string(),
            r.method.clone(),
            r.tp.to_string(),
            r.fp.to_string(),
            r.fn_count.to_string(),
            fmt(r.fdp),
            (r.any_fp as u8).to_string(),
            fmt(r.mse),
            fmt(r.msp),
            fmt(r.rel_mse),
            fmt(r.rel_msp),
            (r.failed as u8).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Plot-ready long format: `(scenario, n, method, metric, value, se)`.
pub fn write_long_csv(report: &MetricsReport, path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path.as_ref())?;
    w.write_record(["scenario", "n", "method", "metric", "value", "se"])?;
    for m in &report.per_method {
        let rows: [(&str, &MetricSummary); 9] = [
            ("fdr", &m.fdr),
            ("fwer", &m.fwer),
            ("power", &m.power),
            ("mean_fp", &m.mean_fp),
            ("misclass", &m.misclassifications),
            ("mse", &m.mse),
            ("msp", &m.msp),
            ("rel_mse", &m.rel_mse),
            ("rel_msp", &m.rel_msp),
        ];
        for (metric, s) in rows {
            if s.count == 0 {
                continue;
            }
            w.write_record([
                report.scenario.clone(),
                report.n.to_string(),
                m.method.clone(),
                metric.to_string(),
                fmt(s.mean),
                fmt(s.se),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
