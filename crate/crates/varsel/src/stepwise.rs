//! Greedy minimization of an information criterion over supports: marginal
//! screening, forward, backward, stepwise, and staged plans combining them.
//!
//! Gaussian sweeps run on incremental Cholesky updates, so scoring a
//! candidate costs O(n k) instead of a refit; the penalty increment at fixed
//! k is shared by all candidates, so each sweep reduces to an extreme-RSS
//! search. Candidate scores are collected in index order and reduced
//! sequentially, which keeps parallel sweeps deterministic; exact ties break
//! toward the lowest column index.

use crate::criteria::{self, CriterionSpec, FitFlags, GaussianVariance};
use crate::data::{Dataset, Family};
use crate::error::{Error, Result};
use crate::glm;
use crate::linalg;
use crate::normal;
use crate::parallel;
use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

/// One stage of a [`SearchPlan`].
#[derive(Debug, Clone)]
pub enum SearchStage {
    /// Keep only columns whose marginal p-value is at most the threshold.
    Screen { threshold: f64 },
    Forward { spec: CriterionSpec },
    Backward { spec: CriterionSpec },
    Stepwise { spec: CriterionSpec },
    /// Up to `count` forward additions under a (usually milder) criterion,
    /// used to escape local minima before resuming stepwise.
    ForwardSteps { spec: CriterionSpec, count: usize },
}

#[derive(Debug, Clone)]
pub struct SearchPlan {
    pub stages: Vec<SearchStage>,
}

impl SearchPlan {
    pub fn validate(&self) -> Result<()> {
        if self.stages.is_empty() {
            return Err(Error::InvalidArgument("plan needs at least one stage".into()));
        }
        let mut has_criterion = false;
        for s in &self.stages {
            match s {
                SearchStage::Screen { threshold } => {
                    if !(*threshold > 0.0 && *threshold <= 1.0) {
                        return Err(Error::InvalidArgument(format!(
                            "screen threshold must lie in (0,1], got {threshold}"
                        )));
                    }
                }
                _ => has_criterion = true,
            }
        }
        if !has_criterion {
            return Err(Error::InvalidArgument(
                "plan needs at least one criterion stage".into(),
            ));
        }
        Ok(())
    }

    /// The staged recipe for wide real-data problems: screen at 0.15,
    /// liberal forward under BIC, then backward elimination and stepwise
    /// under the target criterion with the penalty dimension pinned to the
    /// full p.
    pub fn standard(spec: CriterionSpec) -> Self {
        let bic = CriterionSpec::new(criteria::CriterionKind::Bic, spec.p_total);
        SearchPlan {
            stages: vec![
                SearchStage::Screen { threshold: 0.15 },
                SearchStage::Forward { spec: bic },
                SearchStage::Backward { spec },
                SearchStage::Stepwise { spec },
            ],
        }
    }

    /// The standard recipe without the marginal screen. With many strong
    /// signals the marginal residual variance swamps individual effects and
    /// a p-value screen throws away true predictors that the joint search
    /// would recover, so simulation studies skip it.
    pub fn simulation(spec: CriterionSpec) -> Self {
        let bic = CriterionSpec::new(criteria::CriterionKind::Bic, spec.p_total);
        SearchPlan {
            stages: vec![
                SearchStage::Forward { spec: bic },
                SearchStage::Backward { spec },
                SearchStage::Stepwise { spec },
            ],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Action {
    Add,
    Drop,
    StageBoundary,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceEntry {
    pub stage: usize,
    pub action: Action,
    /// Column moved; `None` for stage boundaries.
    pub index: Option<usize>,
    /// Stage criterion after the move; `None` for screen boundaries.
    pub criterion: Option<f64>,
}

/// Search output: selected support with refitted coefficients and the
/// recomputed criterion value.
#[derive(Debug, Clone)]
pub struct FitResult {
    /// Ascending column indices.
    pub support: Vec<usize>,
    /// Coefficients aligned with `support`.
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    pub criterion: f64,
    pub trace: Vec<TraceEntry>,
    pub flags: FitFlags,
}

#[derive(Debug, Clone, Copy)]
pub struct SearchOptions {
    pub variance: GaussianVariance,
    /// Support-size cap; defaults to `floor(min(p/4, n/2))`, which keeps the
    /// factorial-relaxed penalties inside their validity range and the fits
    /// away from saturation.
    pub k_cap: Option<usize>,
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self {
            variance: GaussianVariance::Profiled,
            k_cap: None,
        }
    }
}

pub fn default_k_cap(n: usize, p: usize) -> usize {
    let cap = (p as f64 / 4.0).min(n as f64 / 2.0).floor() as usize;
    cap.min(n.saturating_sub(2))
}

const MIN_DECREASE: f64 = 1e-9;

/// Indices of columns whose single-variable model (with intercept) has a
/// p-value at most `threshold`. Constant columns score 1.
pub fn marginal_screen(d: &Dataset, threshold: f64) -> Result<Vec<usize>> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "screen threshold must lie in (0,1], got {threshold}"
        )));
    }
    let pvals = marginal_pvalues(d)?;
    Ok((0..d.p()).filter(|&j| pvals[j] <= threshold).collect())
}

/// Marginal p-values: t-test on the correlation for gaussian data, Wald z
/// for binomial.
pub fn marginal_pvalues(d: &Dataset) -> Result<Vec<f64>> {
    let n = d.n();
    match d.family {
        Family::Gaussian => {
            let ym = d.y.mean().unwrap();
            let yc = d.y.mapv(|v| v - ym);
            let syy = yc.dot(&yc);
            let df = (n - 2) as f64;
            let t_dist = StudentsT::new(0.0, 1.0, df)
                .map_err(|e| Error::InvalidArgument(e.to_string()))?;
            let pv = parallel::par_map_threshold(d.p(), 32, |j| {
                let col = d.x.column(j);
                let xm = col.mean().unwrap();
                let sxx = col.dot(&col) - n as f64 * xm * xm;
                if sxx <= 1e-24 || syy <= 1e-24 {
                    return 1.0;
                }
                let sxy = col.dot(&yc);
                let r2 = (sxy * sxy / (sxx * syy)).min(1.0);
                if r2 >= 1.0 {
                    return 0.0;
                }
                let t = (r2 * df / (1.0 - r2)).sqrt();
                2.0 * (1.0 - t_dist.cdf(t))
            });
            Ok(pv)
        }
        Family::Binomial => {
            let pv = parallel::par_map_threshold(d.p(), 8, |j| {
                match glm::fit_submodel(d, &[j]) {
                    Ok(fit) => {
                        if fit.separation {
                            return 0.0;
                        }
                        match linalg::spd_inverse(&fit.gram.view()) {
                            Ok(inv) => {
                                let se = inv[[1, 1]].max(0.0).sqrt();
                                if se <= 0.0 {
                                    return 1.0;
                                }
                                let z = (fit.coefficients[0] / se).abs();
                                normal::two_sided_tail(z)
                            }
                            Err(_) => 1.0,
                        }
                    }
                    Err(_) => 1.0,
                }
            });
            Ok(pv)
        }
    }
}

/// Incremental gaussian search state: Cholesky factor of the support Gram
/// matrix, cached cross-products of support members against all columns,
/// current residual and RSS. The cache makes a full candidate sweep O(n p)
/// plus k^2 solves instead of O(n p k).
struct GaussState<'a> {
    d: &'a Dataset,
    col_sq: Vec<f64>,
    support: Vec<usize>,
    chol: Array2<f64>,
    xty: Vec<f64>,
    /// `cross[i][j] = X_{support[i]} . X_j` for every column j.
    cross: Vec<Array1<f64>>,
    resid: Array1<f64>,
    rss: f64,
}

impl<'a> GaussState<'a> {
    fn new(d: &'a Dataset, support: &[usize]) -> Result<Self> {
        let col_sq = (0..d.p()).map(|j| d.x.column(j).dot(&d.x.column(j))).collect();
        let mut s = Self {
            d,
            col_sq,
            support: Vec::new(),
            chol: Array2::zeros((0, 0)),
            xty: Vec::new(),
            cross: Vec::new(),
            resid: d.y.clone(),
            rss: d.y.dot(&d.y),
        };
        s.refit(support)?;
        Ok(s)
    }

    fn refit(&mut self, support: &[usize]) -> Result<()> {
        self.support = support.to_vec();
        let k = support.len();
        if k == 0 {
            self.chol = Array2::zeros((0, 0));
            self.xty = Vec::new();
            self.cross = Vec::new();
            self.resid = self.d.y.clone();
            self.rss = self.d.y.dot(&self.d.y);
            return Ok(());
        }
        let xm = self.d.submatrix(support);
        let gram = xm.t().dot(&xm);
        self.chol = linalg::cholesky(&gram.view()).map_err(|_| Error::RankDeficient(k))?;
        let xty = xm.t().dot(&self.d.y);
        let half = linalg::solve_lower(&self.chol.view(), &xty.view());
        let beta = linalg::solve_lower_transpose(&self.chol.view(), &half.view());
        self.resid = &self.d.y - &xm.dot(&beta);
        self.rss = self.resid.dot(&self.resid).max(0.0);
        self.xty = xty.to_vec();
        self.cross = support
            .iter()
            .map(|&m| self.d.x.column(m).dot(&self.d.x))
            .collect();
        Ok(())
    }

    fn k(&self) -> usize {
        self.support.len()
    }

    /// RSS drop for every candidate column, `None` where the candidate is
    /// (numerically) collinear with the current support.
    fn addition_gains(&self, candidates: &[usize]) -> Vec<Option<f64>> {
        let k = self.k();
        parallel::par_map_threshold(candidates.len(), 64, |ci| {
            let j = candidates[ci];
            let xj = self.d.x.column(j);
            let a = xj.dot(&self.resid);
            let dj = if k == 0 {
                self.col_sq[j]
            } else {
                let c = Array1::from_iter(self.cross.iter().map(|row| row[j]));
                let w = linalg::solve_lower(&self.chol.view(), &c.view());
                self.col_sq[j] - w.dot(&w)
            };
            if dj <= 1e-10 * self.col_sq[j].max(1e-300) {
                None
            } else {
                Some(a * a / dj)
            }
        })
    }

    fn add(&mut self, j: usize) {
        let k = self.k();
        let xj = self.d.x.column(j).to_owned();
        let a = xj.dot(&self.resid);
        let (w, dj, u) = if k == 0 {
            (Array1::zeros(0), self.col_sq[j], xj.clone())
        } else {
            let c = Array1::from_iter(self.cross.iter().map(|row| row[j]));
            let w = linalg::solve_lower(&self.chol.view(), &c.view());
            let dj = self.col_sq[j] - w.dot(&w);
            let gamma = linalg::solve_lower_transpose(&self.chol.view(), &w.view());
            let mut u = xj.clone();
            for (i, &m) in self.support.iter().enumerate() {
                u.scaled_add(-gamma[i], &self.d.x.column(m));
            }
            (w, dj, u)
        };
        let gain = a * a / dj;
        self.resid.scaled_add(-a / dj, &u);
        self.rss = (self.rss - gain).max(0.0);
        let mut chol = Array2::<f64>::zeros((k + 1, k + 1));
        chol.slice_mut(ndarray::s![..k, ..k]).assign(&self.chol);
        for i in 0..k {
            chol[[k, i]] = w[i];
        }
        chol[[k, k]] = dj.sqrt();
        self.chol = chol;
        self.xty.push(xj.dot(&self.d.y));
        self.cross.push(xj.dot(&self.d.x));
        self.support.push(j);
    }

    /// RSS increase for dropping each support member.
    fn drop_costs(&self) -> Result<Vec<f64>> {
        let k = self.k();
        let xty = Array1::from(self.xty.clone());
        let half = linalg::solve_lower(&self.chol.view(), &xty.view());
        let beta = linalg::solve_lower_transpose(&self.chol.view(), &half.view());
        let mut costs = Vec::with_capacity(k);
        for i in 0..k {
            let mut e = Array1::<f64>::zeros(k);
            e[i] = 1.0;
            let h = linalg::solve_lower(&self.chol.view(), &e.view());
            let col = linalg::solve_lower_transpose(&self.chol.view(), &h.view());
            let inv_ii = col[i];
            if inv_ii <= 0.0 {
                return Err(Error::RankDeficient(k));
            }
            costs.push(beta[i] * beta[i] / inv_ii);
        }
        Ok(costs)
    }

    fn drop(&mut self, position: usize) -> Result<()> {
        let mut support = self.support.clone();
        support.remove(position);
        self.refit(&support)
    }
}

fn loglik_from_rss(rss: f64, n: usize, variance: GaussianVariance) -> f64 {
    criteria::gaussian_neg2_loglik(rss, n, variance)
}

/// Engine shared by the greedy drivers. Binomial moves refit per candidate;
/// gaussian moves use the incremental state.
struct Search<'a> {
    d: &'a Dataset,
    opts: SearchOptions,
    k_cap: usize,
    /// Candidate columns admitted by screening (always includes the support).
    candidates: Vec<bool>,
    gauss: Option<GaussState<'a>>,
    support: Vec<usize>,
    loss: f64,
    flags: FitFlags,
}

impl<'a> Search<'a> {
    fn new(d: &'a Dataset, start: &[usize], opts: SearchOptions) -> Result<Self> {
        let mut support = start.to_vec();
        support.sort_unstable();
        support.dedup();
        if support.iter().any(|&j| j >= d.p()) {
            return Err(Error::InvalidArgument("support index out of range".into()));
        }
        let k_cap = opts.k_cap.unwrap_or_else(|| default_k_cap(d.n(), d.p()));
        let mut s = Self {
            d,
            opts,
            k_cap,
            candidates: vec![true; d.p()],
            gauss: None,
            support: support.clone(),
            loss: 0.0,
            flags: FitFlags::default(),
        };
        s.reset_support(&support)?;
        Ok(s)
    }

    fn reset_support(&mut self, support: &[usize]) -> Result<()> {
        self.support = support.to_vec();
        match self.d.family {
            Family::Gaussian => {
                let g = GaussState::new(self.d, support)?;
                self.loss = g.rss;
                self.gauss = Some(g);
            }
            Family::Binomial => {
                let fit = glm::fit_submodel(self.d, support)?;
                self.flags.separation |= fit.separation;
                self.loss = fit.loss;
            }
        }
        Ok(())
    }

    fn neg2_loglik(&self) -> f64 {
        match self.d.family {
            Family::Gaussian => loglik_from_rss(self.loss, self.d.n(), self.opts.variance),
            Family::Binomial => self.loss,
        }
    }

    fn criterion(&self, spec: &CriterionSpec) -> f64 {
        self.neg2_loglik() + criteria::penalty(spec, self.support.len(), self.d.n())
    }

    /// Best addition as `(column, criterion change)`, lowest index on ties.
    fn best_addition(&mut self, spec: &CriterionSpec) -> Option<(usize, f64)> {
        if self.support.len() >= self.k_cap {
            return None;
        }
        let n = self.d.n();
        let k = self.support.len();
        let pen_inc = criteria::penalty(spec, k + 1, n) - criteria::penalty(spec, k, n);
        let in_support = {
            let mut mask = vec![false; self.d.p()];
            for &j in &self.support {
                mask[j] = true;
            }
            mask
        };
        let cand: Vec<usize> = (0..self.d.p())
            .filter(|&j| self.candidates[j] && !in_support[j])
            .collect();
        if cand.is_empty() {
            return None;
        }
        match self.d.family {
            Family::Gaussian => {
                let g = self.gauss.as_ref().unwrap();
                let gains = g.addition_gains(&cand);
                let mut best: Option<(usize, f64)> = None;
                let mut skipped = false;
                for (ci, gain) in gains.iter().enumerate() {
                    match gain {
                        Some(gain) => {
                            if best.map_or(true, |(_, bg)| *gain > bg) {
                                best = Some((cand[ci], *gain));
                            }
                        }
                        None => skipped = true,
                    }
                }
                if skipped {
                    self.flags.rank_deficiency = true;
                }
                let (j, gain) = best?;
                let old = loglik_from_rss(g.rss, n, self.opts.variance);
                let new = loglik_from_rss((g.rss - gain).max(1e-300), n, self.opts.variance);
                Some((j, new - old + pen_inc))
            }
            Family::Binomial => {
                let results = parallel::par_map(cand.len(), |ci| {
                    let mut s = self.support.clone();
                    s.push(cand[ci]);
                    s.sort_unstable();
                    glm::fit_submodel(self.d, &s).map(|f| f.loss).ok()
                });
                let mut best: Option<(usize, f64)> = None;
                let mut skipped = false;
                for (ci, loss) in results.iter().enumerate() {
                    match loss {
                        Some(loss) => {
                            if best.map_or(true, |(_, bl)| *loss < bl) {
                                best = Some((cand[ci], *loss));
                            }
                        }
                        None => skipped = true,
                    }
                }
                if skipped {
                    self.flags.rank_deficiency = true;
                }
                let (j, loss) = best?;
                Some((j, loss - self.loss + pen_inc))
            }
        }
    }

    /// Best drop as `(position in support, criterion change)`.
    fn best_drop(&mut self, spec: &CriterionSpec) -> Option<(usize, f64)> {
        let k = self.support.len();
        if k == 0 {
            return None;
        }
        let n = self.d.n();
        let pen_dec = criteria::penalty(spec, k - 1, n) - criteria::penalty(spec, k, n);
        match self.d.family {
            Family::Gaussian => {
                let g = self.gauss.as_ref().unwrap();
                let costs = g.drop_costs().ok()?;
                let mut best: Option<(usize, f64, usize)> = None; // (pos, cost, column)
                for (i, &cost) in costs.iter().enumerate() {
                    let col = g.support[i];
                    let better = match best {
                        None => true,
                        Some((_, bc, bcol)) => cost < bc || (cost == bc && col < bcol),
                    };
                    if better {
                        best = Some((i, cost, col));
                    }
                }
                let (pos, cost, _) = best?;
                let old = loglik_from_rss(g.rss, n, self.opts.variance);
                let new = loglik_from_rss(g.rss + cost, n, self.opts.variance);
                Some((pos, new - old + pen_dec))
            }
            Family::Binomial => {
                let results = parallel::par_map(k, |i| {
                    let mut s = self.support.clone();
                    s.remove(i);
                    glm::fit_submodel(self.d, &s).map(|f| f.loss).ok()
                });
                let mut best: Option<(usize, f64)> = None;
                for (i, loss) in results.iter().enumerate() {
                    if let Some(loss) = loss {
                        if best.map_or(true, |(_, bl)| *loss < bl) {
                            best = Some((i, *loss));
                        }
                    }
                }
                let (pos, loss) = best?;
                Some((pos, loss - self.loss + pen_dec))
            }
        }
    }

    fn apply_add(&mut self, j: usize) -> Result<()> {
        match self.d.family {
            Family::Gaussian => {
                let g = self.gauss.as_mut().unwrap();
                g.add(j);
                self.loss = g.rss;
                self.support = g.support.clone();
            }
            Family::Binomial => {
                let mut s = self.support.clone();
                s.push(j);
                s.sort_unstable();
                self.reset_support(&s)?;
            }
        }
        Ok(())
    }

    fn apply_drop(&mut self, pos: usize) -> Result<()> {
        match self.d.family {
            Family::Gaussian => {
                let g = self.gauss.as_mut().unwrap();
                g.drop(pos)?;
                self.loss = g.rss;
                self.support = g.support.clone();
            }
            Family::Binomial => {
                let mut s = self.support.clone();
                s.remove(pos);
                self.reset_support(&s)?;
            }
        }
        Ok(())
    }

    fn scale(&self, spec: &CriterionSpec) -> f64 {
        1.0 + self.criterion(spec).abs()
    }
}

fn greedy_forward(
    search: &mut Search,
    spec: &CriterionSpec,
    stage: usize,
    max_steps: usize,
    trace: &mut Vec<TraceEntry>,
) -> Result<()> {
    let mut steps = 0;
    while steps < max_steps {
        let Some((j, delta)) = search.best_addition(spec) else {
            break;
        };
        if delta >= -MIN_DECREASE * search.scale(spec) {
            break;
        }
        search.apply_add(j)?;
        trace.push(TraceEntry {
            stage,
            action: Action::Add,
            index: Some(j),
            criterion: Some(search.criterion(spec)),
        });
        steps += 1;
    }
    Ok(())
}

fn greedy_backward(
    search: &mut Search,
    spec: &CriterionSpec,
    stage: usize,
    trace: &mut Vec<TraceEntry>,
) -> Result<()> {
    loop {
        let Some((pos, delta)) = search.best_drop(spec) else {
            break;
        };
        if delta >= -MIN_DECREASE * search.scale(spec) {
            break;
        }
        let col = search.support[pos];
        search.apply_drop(pos)?;
        trace.push(TraceEntry {
            stage,
            action: Action::Drop,
            index: Some(col),
            criterion: Some(search.criterion(spec)),
        });
    }
    Ok(())
}

fn greedy_stepwise(
    search: &mut Search,
    spec: &CriterionSpec,
    stage: usize,
    trace: &mut Vec<TraceEntry>,
) -> Result<()> {
    let move_budget = 20 * search.d.p() + 100;
    for _ in 0..move_budget {
        let add = search.best_addition(spec);
        let drop = search.best_drop(spec);
        let tol = MIN_DECREASE * search.scale(spec);
        // Drop wins exact ties: prefer the smaller model.
        let choice = match (add, drop) {
            (Some((j, da)), Some((pos, dd))) => {
                if dd <= da {
                    Some((Action::Drop, pos, dd, search.support[pos]))
                } else {
                    Some((Action::Add, j, da, j))
                }
            }
            (Some((j, da)), None) => Some((Action::Add, j, da, j)),
            (None, Some((pos, dd))) => Some((Action::Drop, pos, dd, search.support[pos])),
            (None, None) => None,
        };
        let Some((action, target, delta, col)) = choice else {
            break;
        };
        if delta >= -tol {
            break;
        }
        match action {
            Action::Add => search.apply_add(target)?,
            Action::Drop => search.apply_drop(target)?,
            Action::StageBoundary => unreachable!(),
        }
        trace.push(TraceEntry {
            stage,
            action,
            index: Some(col),
            criterion: Some(search.criterion(spec)),
        });
    }
    Ok(())
}

fn finish(
    d: &Dataset,
    spec: &CriterionSpec,
    search: Search,
    trace: Vec<TraceEntry>,
) -> Result<FitResult> {
    let mut support = search.support.clone();
    support.sort_unstable();
    let eval = criteria::criterion_value(d, spec, &support, search.opts.variance)?;
    Ok(FitResult {
        support,
        coefficients: eval.fit.coefficients,
        intercept: eval.fit.intercept,
        criterion: eval.value,
        trace,
        flags: FitFlags {
            separation: search.flags.separation || eval.flags.separation,
            rank_deficiency: search.flags.rank_deficiency,
        },
    })
}

/// Greedy forward selection from `start`.
pub fn forward(
    d: &Dataset,
    spec: &CriterionSpec,
    start: &[usize],
    opts: SearchOptions,
) -> Result<FitResult> {
    let mut search = Search::new(d, start, opts)?;
    let mut trace = Vec::new();
    greedy_forward(&mut search, spec, 0, usize::MAX, &mut trace)?;
    finish(d, spec, search, trace)
}

/// Greedy backward elimination from `start`.
pub fn backward(
    d: &Dataset,
    spec: &CriterionSpec,
    start: &[usize],
    opts: SearchOptions,
) -> Result<FitResult> {
    let mut search = Search::new(d, start, opts)?;
    let mut trace = Vec::new();
    greedy_backward(&mut search, spec, 0, &mut trace)?;
    finish(d, spec, search, trace)
}

/// Best-single-move alternation until no add or drop decreases the criterion.
pub fn stepwise(
    d: &Dataset,
    spec: &CriterionSpec,
    start: &[usize],
    opts: SearchOptions,
) -> Result<FitResult> {
    let mut search = Search::new(d, start, opts)?;
    let mut trace = Vec::new();
    greedy_stepwise(&mut search, spec, 0, &mut trace)?;
    finish(d, spec, search, trace)
}

/// Threads a support through the plan's stages, recording stage boundaries.
/// The result is evaluated under the last criterion-bearing stage's spec.
pub fn run_plan(d: &Dataset, plan: &SearchPlan, opts: SearchOptions) -> Result<FitResult> {
    plan.validate()?;
    let mut search = Search::new(d, &[], opts)?;
    let mut trace = Vec::new();
    let mut last_spec: Option<CriterionSpec> = None;
    for (stage, s) in plan.stages.iter().enumerate() {
        match s {
            SearchStage::Screen { threshold } => {
                trace.push(TraceEntry {
                    stage,
                    action: Action::StageBoundary,
                    index: None,
                    criterion: None,
                });
                let survivors = marginal_screen(d, *threshold)?;
                let mut mask = vec![false; d.p()];
                for j in survivors {
                    mask[j] = true;
                }
                for &j in &search.support {
                    mask[j] = true;
                }
                search.candidates = mask;
            }
            SearchStage::Forward { spec } => {
                trace.push(TraceEntry {
                    stage,
                    action: Action::StageBoundary,
                    index: None,
                    criterion: Some(search.criterion(spec)),
                });
                greedy_forward(&mut search, spec, stage, usize::MAX, &mut trace)?;
                last_spec = Some(*spec);
            }
            SearchStage::Backward { spec } => {
                trace.push(TraceEntry {
                    stage,
                    action: Action::StageBoundary,
                    index: None,
                    criterion: Some(search.criterion(spec)),
                });
                greedy_backward(&mut search, spec, stage, &mut trace)?;
                last_spec = Some(*spec);
            }
            SearchStage::Stepwise { spec } => {
                trace.push(TraceEntry {
                    stage,
                    action: Action::StageBoundary,
                    index: None,
                    criterion: Some(search.criterion(spec)),
                });
                greedy_stepwise(&mut search, spec, stage, &mut trace)?;
                last_spec = Some(*spec);
            }
            SearchStage::ForwardSteps { spec, count } => {
                trace.push(TraceEntry {
                    stage,
                    action: Action::StageBoundary,
                    index: None,
                    criterion: Some(search.criterion(spec)),
                });
                greedy_forward(&mut search, spec, stage, *count, &mut trace)?;
                last_spec = Some(*spec);
            }
        }
    }
    let spec = last_spec.expect("validated plans carry a criterion stage");
    finish(d, &spec, search, trace)
}

/// Full selection workflow on raw data: gaussian responses are centered
/// (with the design) before the search and coefficients are mapped back,
/// so the reported model includes an intercept on the original scale.
pub fn select(d: &Dataset, plan: &SearchPlan, opts: SearchOptions) -> Result<FitResult> {
    match d.family {
        Family::Gaussian => {
            let (centered, info) = crate::data::standardize(d, crate::data::StandardizeMode::Center)?;
            let mut result = run_plan(&centered, plan, opts)?;
            let (intercept, coefs) = info.backtransform(&result.support, &result.coefficients);
            result.intercept = intercept;
            result.coefficients = coefs;
            Ok(result)
        }
        Family::Binomial => run_plan(d, plan, opts),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::criteria::CriterionKind;
    use crate::rng::RngStream;

    fn hadamard64() -> Array2<f64> {
        let mut h = Array2::<f64>::zeros((64, 64));
        h[[0, 0]] = 1.0;
        let mut m = 1;
        while m < 64 {
            for i in 0..m {
                for j in 0..m {
                    let v = h[[i, j]];
                    h[[i, j + m]] = v;
                    h[[i + m, j]] = v;
                    h[[i + m, j + m]] = -v;
                }
            }
            m *= 2;
        }
        h
    }

    /// Orthogonal design with X'X = 64 I and z-statistics pinned to `z`.
    fn orthogonal_dataset(z: &[f64]) -> Dataset {
        let h = hadamard64();
        let (n, p) = (64, z.len());
        let mut x = Array2::<f64>::zeros((n, p));
        for j in 0..p {
            x.column_mut(j).assign(&h.column(j + 1));
        }
        let mut y = Array1::<f64>::zeros(n);
        for (j, &zj) in z.iter().enumerate() {
            y.scaled_add(zj / 8.0, &x.column(j));
        }
        Dataset::new(y, x, (0..p).map(|j| format!("v{j}")).collect(), Family::Gaussian).unwrap()
    }

    fn known_sigma_opts() -> SearchOptions {
        SearchOptions {
            variance: GaussianVariance::Known(1.0),
            k_cap: None,
        }
    }

    const Z_FIXTURE: [f64; 16] = [
        5.0, 3.1, 2.45, 1.8, 1.3, 1.1, 0.9, 0.7, 0.6, 0.5, 0.4, 0.3, 0.25, 0.2, 0.1, 0.05,
    ];

    #[test]
    fn forward_matches_z_threshold_on_orthogonal_design() {
        let d = orthogonal_dataset(&Z_FIXTURE);
        // Fixed-threshold criteria admit exactly {j : |Z_j| > threshold}.
        let cases = [
            (CriterionKind::Aic, 2.0_f64.sqrt()),
            (CriterionKind::Bic, 64.0_f64.ln().sqrt()),
            (CriterionKind::Ric, (2.0 * 16.0_f64.ln()).sqrt()),
            (CriterionKind::MBic, (64.0_f64.ln() + 2.0 * 4.0_f64.ln()).sqrt()),
            (CriterionKind::MAic, (2.0 + 2.0 * 32.0_f64.ln()).sqrt()),
        ];
        for (kind, threshold) in cases {
            let spec = CriterionSpec::new(kind, 16);
            let expected: Vec<usize> = (0..16).filter(|&j| Z_FIXTURE[j] > threshold).collect();
            let fit = forward(&d, &spec, &[], known_sigma_opts()).unwrap();
            assert_eq!(fit.support, expected, "{kind:?}");
            let sw = stepwise(&d, &spec, &[], known_sigma_opts()).unwrap();
            assert_eq!(sw.support, expected, "{kind:?} stepwise");
        }
    }

    #[test]
    fn forward_fixed_point_returns_unchanged() {
        let d = orthogonal_dataset(&Z_FIXTURE);
        let spec = CriterionSpec::new(CriterionKind::MAic, 16);
        // {0, 1} is the mAIC optimum; restarting there makes no move.
        let fit = forward(&d, &spec, &[0, 1], known_sigma_opts()).unwrap();
        assert_eq!(fit.support, vec![0, 1]);
        assert!(fit.trace.is_empty());
    }

    #[test]
    fn backward_empty_support_is_fixed_point() {
        let d = orthogonal_dataset(&Z_FIXTURE);
        let spec = CriterionSpec::new(CriterionKind::Bic, 16);
        let fit = backward(&d, &spec, &[], SearchOptions::default()).unwrap();
        assert!(fit.support.is_empty());
        assert!(fit.trace.is_empty());
    }

    #[test]
    fn backward_matches_threshold_on_orthogonal_design() {
        let d = orthogonal_dataset(&Z_FIXTURE);
        let spec = CriterionSpec::new(CriterionKind::MBic, 16);
        let threshold = (64.0_f64.ln() + 2.0 * 4.0_f64.ln()).sqrt();
        let start: Vec<usize> = (0..8).collect();
        let fit = backward(&d, &spec, &start, known_sigma_opts()).unwrap();
        let expected: Vec<usize> = (0..8).filter(|&j| Z_FIXTURE[j] > threshold).collect();
        assert_eq!(fit.support, expected);
    }

    #[test]
    fn backward_removes_pure_noise_duplicate_column() {
        // Two copies of a noise column: dropping one strictly decreases mBIC2.
        let mut rng = RngStream::new(31, 0);
        let n = 100;
        let x0 = rng.normal_vec(n);
        let noise = rng.normal_vec(n);
        let mut x = Array2::<f64>::zeros((n, 3));
        x.column_mut(0).assign(&x0);
        x.column_mut(1).assign(&noise);
        x.column_mut(2).assign(&(&noise + &(rng.normal_vec(n) * 1e-4)));
        let y = &x0 * 2.0 + rng.normal_vec(n);
        let d = Dataset::new(
            y,
            x,
            vec!["a".into(), "b".into(), "c".into()],
            Family::Gaussian,
        )
        .unwrap();
        let spec = CriterionSpec::new(CriterionKind::MBic2, 3);
        let before =
            criteria::criterion_value(&d, &spec, &[0, 1, 2], GaussianVariance::Profiled)
                .unwrap()
                .value;
        let fit = backward(&d, &spec, &[0, 1, 2], SearchOptions::default()).unwrap();
        assert!(fit.criterion < before);
        assert!(fit.support.contains(&0));
        assert!(fit.support.len() < 3);
    }

    #[test]
    fn screen_keeps_everything_at_threshold_one() {
        let mut rng = RngStream::new(33, 0);
        let x = rng.normal_matrix(50, 10);
        let y = rng.normal_vec(50);
        let d = Dataset::new(y, x, (0..10).map(|j| format!("v{j}")).collect(), Family::Gaussian)
            .unwrap();
        let kept = marginal_screen(&d, 1.0).unwrap();
        assert_eq!(kept.len(), 10);
    }

    #[test]
    fn screen_keeps_perfect_predictor_at_tiny_threshold() {
        let mut rng = RngStream::new(35, 0);
        let n = 100;
        let x = rng.normal_matrix(n, 5);
        let y = x.column(1).to_owned();
        let d = Dataset::new(y, x, (0..5).map(|j| format!("v{j}")).collect(), Family::Gaussian)
            .unwrap();
        let kept = marginal_screen(&d, 1e-6).unwrap();
        assert!(kept.contains(&1));
    }

    #[test]
    fn screen_gives_constant_columns_pvalue_one() {
        let mut rng = RngStream::new(36, 0);
        let n = 40;
        let mut x = rng.normal_matrix(n, 3);
        x.column_mut(2).fill(5.0);
        let y = rng.normal_vec(n);
        let d = Dataset::new(y, x, (0..3).map(|j| format!("v{j}")).collect(), Family::Gaussian)
            .unwrap();
        let pv = marginal_pvalues(&d).unwrap();
        assert_eq!(pv[2], 1.0);
    }

    #[test]
    fn screen_null_survivor_fraction_matches_threshold() {
        // Under the global null, p-values are uniform: the survivor fraction
        // at 0.15 concentrates near 0.15.
        let (n, p, reps) = (100usize, 40usize, 60usize);
        let mut total = 0usize;
        for rep in 0..reps {
            let mut rng = RngStream::new(404, rep as u64);
            let x = rng.normal_matrix(n, p);
            let y = rng.normal_vec(n);
            let d = Dataset::new(
                y,
                x,
                (0..p).map(|j| format!("v{j}")).collect(),
                Family::Gaussian,
            )
            .unwrap();
            total += marginal_screen(&d, 0.15).unwrap().len();
        }
        let fraction = total as f64 / (reps * p) as f64;
        assert!(
            (fraction - 0.15).abs() < 0.03,
            "survivor fraction {fraction}"
        );
    }

    #[test]
    fn traces_strictly_decrease_within_stages() {
        let mut rng = RngStream::new(37, 0);
        let n = 120;
        let p = 20;
        let x = rng.normal_matrix(n, p);
        let mut y = rng.normal_vec(n);
        for j in 0..4 {
            y = y + x.column(j).mapv(|v| 0.8 * v);
        }
        let d = Dataset::new(y, x, (0..p).map(|j| format!("v{j}")).collect(), Family::Gaussian)
            .unwrap();
        let spec = CriterionSpec::new(CriterionKind::MBic2, p);
        let plan = SearchPlan::standard(spec);
        let fit = run_plan(&d, &plan, SearchOptions::default()).unwrap();
        let mut last: Option<(usize, f64)> = None;
        for e in &fit.trace {
            if e.action == Action::StageBoundary {
                last = e.criterion.map(|c| (e.stage, c));
                continue;
            }
            let c = e.criterion.unwrap();
            if let Some((stage, prev)) = last {
                if stage == e.stage {
                    assert!(c < prev, "stage {stage}: {c} !< {prev}");
                }
            }
            last = Some((e.stage, c));
        }
        // Final criterion matches a recomputation.
        let recomputed =
            criteria::criterion_value(&d, &spec, &fit.support, GaussianVariance::Profiled)
                .unwrap()
                .value;
        assert!((fit.criterion - recomputed).abs() < 1e-9 * (1.0 + recomputed.abs()));
    }

    #[test]
    fn stepwise_is_idempotent() {
        let mut rng = RngStream::new(39, 0);
        let n = 80;
        let p = 15;
        let x = rng.normal_matrix(n, p);
        let mut y = rng.normal_vec(n);
        y = y + x.column(2).mapv(|v| 1.2 * v);
        let d = Dataset::new(y, x, (0..p).map(|j| format!("v{j}")).collect(), Family::Gaussian)
            .unwrap();
        let spec = CriterionSpec::new(CriterionKind::Bic, p);
        let first = stepwise(&d, &spec, &[], SearchOptions::default()).unwrap();
        let second = stepwise(&d, &spec, &first.support, SearchOptions::default()).unwrap();
        assert_eq!(first.support, second.support);
        assert!(second.trace.is_empty());
    }

    #[test]
    fn run_plan_respects_k_cap() {
        let mut rng = RngStream::new(41, 0);
        let n = 60;
        let p = 12; // cap = min(3, 30) = 3
        let x = rng.normal_matrix(n, p);
        let mut y = rng.normal_vec(n) * 0.01;
        for j in 0..6 {
            y = y + x.column(j).mapv(|v| 2.0 * v);
        }
        let d = Dataset::new(y, x, (0..p).map(|j| format!("v{j}")).collect(), Family::Gaussian)
            .unwrap();
        let spec = CriterionSpec::new(CriterionKind::Aic, p);
        let plan = SearchPlan {
            stages: vec![SearchStage::Stepwise { spec }],
        };
        let fit = run_plan(&d, &plan, SearchOptions::default()).unwrap();
        assert!(fit.support.len() <= default_k_cap(n, p));
    }

    #[test]
    fn single_stage_plan_equals_direct_stepwise() {
        let mut rng = RngStream::new(43, 0);
        let n = 90;
        let p = 16;
        let x = rng.normal_matrix(n, p);
        let mut y = rng.normal_vec(n);
        y = y + x.column(5).mapv(|v| 1.5 * v);
        let d = Dataset::new(y, x, (0..p).map(|j| format!("v{j}")).collect(), Family::Gaussian)
            .unwrap();
        let spec = CriterionSpec::new(CriterionKind::MBic2, p);
        let plan = SearchPlan {
            stages: vec![SearchStage::Stepwise { spec }],
        };
        let a = run_plan(&d, &plan, SearchOptions::default()).unwrap();
        let b = stepwise(&d, &spec, &[], SearchOptions::default()).unwrap();
        assert_eq!(a.support, b.support);
        assert_eq!(a.criterion, b.criterion);
    }

    #[test]
    fn forward_mbic_controls_fwer_under_global_null() {
        // All-null data at n = 1024: mBIC forward selection should rarely
        // pick anything (the control level tightens like 1/sqrt(n), so the
        // sample size matters here).
        let reps = 1000;
        let hits: usize = (0..reps)
            .map(|rep| {
                let mut rng = RngStream::new(777, rep as u64);
                let n = 1024;
                let p = 49;
                let x = rng.normal_matrix(n, p);
                let y = rng.normal_vec(n);
                let d = Dataset::new(
                    y,
                    x,
                    (0..p).map(|j| format!("v{j}")).collect(),
                    Family::Gaussian,
                )
                .unwrap();
                let spec = CriterionSpec::new(CriterionKind::MBic, p);
                let fit = forward(&d, &spec, &[], SearchOptions::default()).unwrap();
                usize::from(!fit.support.is_empty())
            })
            .sum();
        let fwer = hits as f64 / reps as f64;
        assert!(fwer <= 0.05, "mBIC FWER = {fwer}");
    }
}
