//! Dataset representation, CSV ingestion, standardization and Gaussian
//! design generation.

use crate::error::{Error, Result};
use crate::linalg;
use crate::rng::RngStream;
use ndarray::{Array1, Array2, ArrayView2, ShapeBuilder};
use std::path::Path;

/// Likelihood family of the response.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Gaussian,
    Binomial,
}

/// Response vector plus design matrix with column labels.
///
/// Immutable after construction; safe to share across threads.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub y: Array1<f64>,
    pub x: Array2<f64>,
    pub names: Vec<String>,
    pub family: Family,
}

impl Dataset {
    pub fn new(y: Array1<f64>, x: Array2<f64>, names: Vec<String>, family: Family) -> Result<Self> {
        let n = y.len();
        let p = x.ncols();
        if x.nrows() != n {
            return Err(Error::InvalidData(format!(
                "y has {n} rows but X has {}",
                x.nrows()
            )));
        }
        if n < 2 {
            return Err(Error::InvalidData(format!("need n >= 2, got {n}")));
        }
        if p < 1 {
            return Err(Error::InvalidData("need p >= 1".into()));
        }
        if names.len() != p {
            return Err(Error::InvalidData(format!(
                "{} names for {p} columns",
                names.len()
            )));
        }
        if y.iter().any(|v| !v.is_finite()) || x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidData("non-finite entries".into()));
        }
        if family == Family::Binomial {
            for (i, &v) in y.iter().enumerate() {
                if v != 0.0 && v != 1.0 {
                    return Err(Error::InvalidBinaryResponse { row: i, value: v });
                }
            }
        }
        // Column-major storage: selection sweeps and coordinate descent are
        // dominated by per-column dot products.
        let x = to_column_major(x);
        Ok(Self { y, x, names, family })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    /// Columns of `x` restricted to `support`, in support order.
    pub fn submatrix(&self, support: &[usize]) -> Array2<f64> {
        let n = self.n();
        let mut out = Array2::<f64>::zeros((n, support.len()));
        for (c, &j) in support.iter().enumerate() {
            out.column_mut(c).assign(&self.x.column(j));
        }
        out
    }
}

/// How columns (and, for gaussian data, the response) are rescaled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StandardizeMode {
    /// Leave the data untouched.
    None,
    /// Subtract column means from X; for gaussian data also center y.
    Center,
    /// Scale each column to norm sqrt(n), the `X'X = n I` convention.
    UnitL2,
    /// Scale each column to norm 1, the `X'X = I` convention.
    UnitL2One,
}

/// Per-column shifts and scales recorded by [`standardize`], sufficient to
/// map coefficients fitted on the transformed data back to the original.
#[derive(Debug, Clone)]
pub struct Standardization {
    pub x_means: Vec<f64>,
    pub x_scales: Vec<f64>,
    pub y_mean: f64,
}

impl Standardization {
    pub fn identity(p: usize) -> Self {
        Self {
            x_means: vec![0.0; p],
            x_scales: vec![1.0; p],
            y_mean: 0.0,
        }
    }

    /// Composition: apply `self` first, then `next`.
    pub fn then(&self, next: &Standardization) -> Standardization {
        // x -> (x - m1)/s1 -> ((x - m1)/s1 - m2)/s2 = (x - (m1 + s1 m2)) / (s1 s2)
        let x_means = self
            .x_means
            .iter()
            .zip(&next.x_means)
            .zip(&self.x_scales)
            .map(|((m1, m2), s1)| m1 + s1 * m2)
            .collect();
        let x_scales = self
            .x_scales
            .iter()
            .zip(&next.x_scales)
            .map(|(s1, s2)| s1 * s2)
            .collect();
        Standardization {
            x_means,
            x_scales,
            y_mean: self.y_mean + next.y_mean,
        }
    }

    /// Maps coefficients for the transformed columns in `support` back to the
    /// original scale, returning `(intercept, coefficients)`.
    pub fn backtransform(&self, support: &[usize], coefs: &[f64]) -> (f64, Vec<f64>) {
        let orig: Vec<f64> = support
            .iter()
            .zip(coefs)
            .map(|(&j, &b)| b / self.x_scales[j])
            .collect();
        let shift: f64 = support
            .iter()
            .zip(&orig)
            .map(|(&j, &b)| b * self.x_means[j])
            .sum();
        (self.y_mean - shift, orig)
    }
}

/// Applies one standardization mode, returning the transformed dataset and
/// the record needed to undo it.
///
/// Scaling modes reject constant columns (scale below 1e-12) by name.
pub fn standardize(d: &Dataset, mode: StandardizeMode) -> Result<(Dataset, Standardization)> {
    let n = d.n();
    let p = d.p();
    let mut x = d.x.clone();
    let mut y = d.y.clone();
    let mut info = Standardization::identity(p);
    match mode {
        StandardizeMode::None => {}
        StandardizeMode::Center => {
            for j in 0..p {
                let m = x.column(j).mean().unwrap();
                x.column_mut(j).mapv_inplace(|v| v - m);
                info.x_means[j] = m;
            }
            if d.family == Family::Gaussian {
                let ym = y.mean().unwrap();
                y.mapv_inplace(|v| v - ym);
                info.y_mean = ym;
            }
        }
        StandardizeMode::UnitL2 | StandardizeMode::UnitL2One => {
            let target = if mode == StandardizeMode::UnitL2 {
                (n as f64).sqrt()
            } else {
                1.0
            };
            for j in 0..p {
                let col = x.column(j);
                let m = col.mean().unwrap();
                let var = col.dot(&col) / n as f64 - m * m;
                if var.max(0.0).sqrt() <= 1e-12 {
                    return Err(Error::ConstantColumn(d.names[j].clone()));
                }
                let scale = col.dot(&col).sqrt() / target;
                x.column_mut(j).mapv_inplace(|v| v / scale);
                info.x_scales[j] = scale;
            }
        }
    }
    let out = Dataset::new(y, x, d.names.clone(), d.family)?;
    Ok((out, info))
}

/// Reads a dataset from a headered CSV file. All non-response numeric columns
/// become design columns in file order.
pub fn load_csv(path: impl AsRef<Path>, response: &str, family: Family) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path.as_ref())?;
    let headers: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let y_col = headers
        .iter()
        .position(|h| h == response)
        .ok_or_else(|| Error::MissingColumn(response.to_string()))?;
    let names: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != y_col)
        .map(|(_, h)| h.clone())
        .collect();

    let mut y = Vec::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let record = record?;
        let mut row = Vec::with_capacity(names.len());
        for (c, field) in record.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| Error::NonNumericCell {
                column: headers.get(c).cloned().unwrap_or_default(),
                row: r,
                value: field.to_string(),
            })?;
            if c == y_col {
                if family == Family::Binomial && v != 0.0 && v != 1.0 {
                    return Err(Error::InvalidBinaryResponse { row: r, value: v });
                }
                y.push(v);
            } else {
                row.push(v);
            }
        }
        rows.push(row);
    }
    let n = y.len();
    let p = names.len();
    let mut x = Array2::<f64>::zeros((n, p));
    for (i, row) in rows.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            x[[i, j]] = v;
        }
    }
    Dataset::new(Array1::from(y), x, names, family)
}

/// Row covariance structure for simulated designs.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SigmaModel {
    Identity,
    /// Compound symmetry: unit diagonal, constant off-diagonal correlation.
    CompoundSymmetry { rho: f64 },
    /// Independent compound-symmetry blocks laid out left to right;
    /// a block of size 1 is an independent column.
    Block { blocks: Vec<BlockDef> },
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct BlockDef {
    pub size: usize,
    pub rho: f64,
}

impl SigmaModel {
    pub fn dim(&self, p: usize) -> usize {
        match self {
            SigmaModel::Block { blocks } => blocks.iter().map(|b| b.size).sum(),
            _ => p,
        }
    }

    /// Dense covariance matrix at dimension `p` (block models fix their own p).
    pub fn materialize(&self, p: usize) -> Result<Array2<f64>> {
        match self {
            SigmaModel::Identity => Ok(Array2::eye(p)),
            SigmaModel::CompoundSymmetry { rho } => {
                check_rho(*rho)?;
                let mut s = Array2::from_elem((p, p), *rho);
                for i in 0..p {
                    s[[i, i]] = 1.0;
                }
                Ok(s)
            }
            SigmaModel::Block { blocks } => {
                let total = self.dim(p);
                let mut s = Array2::<f64>::zeros((total, total));
                let mut off = 0;
                for b in blocks {
                    check_rho(b.rho)?;
                    for i in 0..b.size {
                        for j in 0..b.size {
                            s[[off + i, off + j]] = if i == j { 1.0 } else { b.rho };
                        }
                    }
                    off += b.size;
                }
                Ok(s)
            }
        }
    }
}

fn check_rho(rho: f64) -> Result<()> {
    if !(0.0..1.0).contains(&rho) {
        return Err(Error::InvalidArgument(format!(
            "correlation must lie in [0,1), got {rho}"
        )));
    }
    Ok(())
}

/// Draws a design matrix with i.i.d. rows from `N(0, row_scale^2 * Sigma)`,
/// realized through the Cholesky factor of the requested structure.
pub fn draw_gaussian_design(
    n: usize,
    p: usize,
    sigma: &SigmaModel,
    row_scale: f64,
    rng: &mut RngStream,
) -> Result<Array2<f64>> {
    if row_scale <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "row scale must be positive, got {row_scale}"
        )));
    }
    let z = rng.normal_matrix(n, sigma.dim(p));
    let mut x = match sigma {
        SigmaModel::Identity => z,
        SigmaModel::CompoundSymmetry { rho } => {
            check_rho(*rho)?;
            if *rho == 0.0 {
                z
            } else {
                let l = linalg::cholesky(&sigma.materialize(p)?.view())?;
                z.dot(&l.t())
            }
        }
        SigmaModel::Block { blocks } => {
            let mut x = z;
            let mut off = 0;
            for b in blocks {
                check_rho(b.rho)?;
                if b.rho > 0.0 && b.size > 1 {
                    let cs = SigmaModel::CompoundSymmetry { rho: b.rho }.materialize(b.size)?;
                    let l = linalg::cholesky(&cs.view())?;
                    let cols = x.slice(ndarray::s![.., off..off + b.size]).to_owned();
                    x.slice_mut(ndarray::s![.., off..off + b.size])
                        .assign(&cols.dot(&l.t()));
                }
                off += b.size;
            }
            x
        }
    };
    if row_scale != 1.0 {
        x.mapv_inplace(|v| v * row_scale);
    }
    Ok(x)
}

/// Mirrors the covariance actually used by [`draw_gaussian_design`], i.e.
/// `row_scale^2 * Sigma`. Knockoff construction needs this as known truth.
pub fn row_covariance(sigma: &SigmaModel, p: usize, row_scale: f64) -> Result<Array2<f64>> {
    let mut s = sigma.materialize(p)?;
    let c = row_scale * row_scale;
    if c != 1.0 {
        s.mapv_inplace(|v| v * c);
    }
    Ok(s)
}

/// Reshapes into column-major (Fortran) layout unless already there.
pub fn to_column_major(x: Array2<f64>) -> Array2<f64> {
    if x.t().is_standard_layout() {
        return x;
    }
    let mut xf = Array2::<f64>::zeros(x.raw_dim().f());
    xf.assign(&x);
    xf
}

/// Fitted values `X beta` restricted to a support.
pub fn fitted_values(x: &ArrayView2<f64>, support: &[usize], coefs: &[f64]) -> Array1<f64> {
    let mut out = Array1::<f64>::zeros(x.nrows());
    for (&j, &b) in support.iter().zip(coefs) {
        out.scaled_add(b, &x.column(j));
    }
    out
}
