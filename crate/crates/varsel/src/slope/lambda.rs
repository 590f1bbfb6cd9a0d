//! Tuning sequences for the sorted-L1 penalty.

use crate::error::{Error, Result};
use crate::normal;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Generating rule for a [`LambdaSequence`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LambdaRule {
    /// `lambda_j = c * Phi^{-1}(1 - j q / (2p))`, the BH thresholds recast as
    /// penalty weights.
    Bh { c: f64, q: f64 },
    /// `lambda_j = scale * sqrt(2 ln(p/j))`, the second-order shape.
    SecondOrder { scale: f64 },
    /// `(1 + delta)` times the BH sequence at `c = 1`.
    InflatedBh { delta: f64, q: f64 },
    /// The adjusted sequence
    /// `lambda_i = min(lambda_{i-1}, sigma Phi^{-1}(1 - qi/2p) sqrt(1 + sum_{j<i} lambda_j^2 / (n-i-2)))`
    /// with `lambda_1 = sigma Phi^{-1}(1 - q/2p)`, which compensates the extra
    /// variance a non-orthogonal design leaks into each estimate.
    Heuristic { q: f64, sigma: f64, n: usize },
    /// All entries equal; the LASSO special case.
    Constant { value: f64 },
    /// Values supplied directly.
    Explicit,
}

/// A non-increasing, nonnegative tuning vector tagged with its rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaSequence {
    pub values: Vec<f64>,
    pub rule: LambdaRule,
    /// First index (0-based) where the heuristic recursion ran out of degrees
    /// of freedom and the sequence was held flat.
    pub truncated_at: Option<usize>,
}

impl LambdaSequence {
    pub fn explicit(values: Vec<f64>) -> Result<Self> {
        let s = Self {
            values,
            rule: LambdaRule::Explicit,
            truncated_at: None,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// All entries multiplied by `c > 0`; the rule degrades to `Explicit`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        if c <= 0.0 {
            return Err(Error::InvalidLambda(format!("scale must be positive, got {c}")));
        }
        Self::explicit(self.values.iter().map(|v| v * c).collect())
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::InvalidLambda("empty sequence".into()));
        }
        if self.values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidLambda(
                "entries must be finite and nonnegative".into(),
            ));
        }
        if self.values.windows(2).any(|w| w[0] < w[1]) {
            return Err(Error::InvalidLambda("sequence must be non-increasing".into()));
        }
        if self.values.iter().all(|&v| v == 0.0) {
            return Err(Error::InvalidLambda("sequence must not be all zero".into()));
        }
        Ok(())
    }
}

/// Materializes a rule at length `p`.
pub fn make_lambda(rule: LambdaRule, p: usize) -> Result<LambdaSequence> {
    if p == 0 {
        return Err(Error::InvalidLambda("p must be at least 1".into()));
    }
    let pf = p as f64;
    let mut truncated_at = None;
    let values = match &rule {
        LambdaRule::Bh { c, q } => {
            check_q(*q)?;
            if *c <= 0.0 {
                return Err(Error::InvalidLambda(format!("c must be positive, got {c}")));
            }
            (1..=p)
                .map(|j| c * normal::quantile_upper(j as f64 * q / (2.0 * pf)))
                .collect()
        }
        LambdaRule::SecondOrder { scale } => {
            if *scale <= 0.0 {
                return Err(Error::InvalidLambda(format!(
                    "scale must be positive, got {scale}"
                )));
            }
            (1..=p)
                .map(|j| scale * (2.0 * (pf / j as f64).ln()).sqrt())
                .collect()
        }
        LambdaRule::InflatedBh { delta, q } => {
            check_q(*q)?;
            if *delta <= 0.0 {
                return Err(Error::InvalidLambda(format!(
                    "delta must be positive, got {delta}"
                )));
            }
            (1..=p)
                .map(|j| (1.0 + delta) * normal::quantile_upper(j as f64 * q / (2.0 * pf)))
                .collect()
        }
        LambdaRule::Heuristic { q, sigma, n } => {
            check_q(*q)?;
            if *sigma <= 0.0 {
                return Err(Error::InvalidLambda(format!(
                    "sigma must be positive, got {sigma}"
                )));
            }
            let mut vals: Vec<f64> = Vec::with_capacity(p);
            let mut sum_sq = 0.0;
            for i in 1..=p {
                let base = sigma * normal::quantile_upper(i as f64 * q / (2.0 * pf));
                let v = if i == 1 {
                    base
                } else {
                    let dof = *n as f64 - i as f64 - 2.0;
                    if dof <= 0.0 {
                        // Out of degrees of freedom: hold the sequence flat.
                        if truncated_at.is_none() {
                            truncated_at = Some(i - 1);
                        }
                        vals[i - 2]
                    } else {
                        let adjusted = base * (1.0 + sum_sq / dof).sqrt();
                        adjusted.min(vals[i - 2])
                    }
                };
                sum_sq += v * v;
                vals.push(v);
            }
            vals
        }
        LambdaRule::Constant { value } => {
            if *value <= 0.0 {
                return Err(Error::InvalidLambda(format!(
                    "constant lambda must be positive, got {value}"
                )));
            }
            vec![*value; p]
        }
        LambdaRule::Explicit => {
            return Err(Error::InvalidLambda(
                "explicit rule needs values; use LambdaSequence::explicit".into(),
            ))
        }
    };
    let seq = LambdaSequence {
        values,
        rule,
        truncated_at,
    };
    seq.validate()?;
    Ok(seq)
}

fn check_q(q: f64) -> Result<()> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::InvalidLambda(format!("q must lie in (0,1), got {q}")));
    }
    Ok(())
}

/// Writes the sequence as a single-column CSV with a `lambda` header.
pub fn write_lambda_csv(seq: &LambdaSequence, path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path.as_ref())?;
    w.write_record(["lambda"])?;
    for v in &seq.values {
        w.write_record([format!("{v:.17e}")])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a single-column CSV written by [`write_lambda_csv`] (or by another
/// implementation for cross-checking).
pub fn read_lambda_csv(path: impl AsRef<Path>) -> Result<LambdaSequence> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path.as_ref())?;
    let mut values = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let field = rec.get(0).unwrap_or("");
        let v: f64 = field.parse().map_err(|_| Error::NonNumericCell {
            column: "lambda".into(),
            row: i,
            value: field.to_string(),
        })?;
        values.push(v);
    }
    LambdaSequence::explicit(values)
}
