use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::ClinicalError;
use crate::nn::act::sigmoid;

pub const GRAD_TOL: f64 = 1e-8;
pub const RIDGE: f64 = 1e-6;
const MAX_ITER: usize = 200;
/// Fitted probabilities this close to 0 or 1 indicate separation.
const SEPARATION_EPS: f64 = 1e-10;

/// Logistic model over standardized covariates. `coef[0]` is the intercept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub coef: Vec<f64>,
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
    /// Separation was detected and the ridge fallback was used.
    pub ridge: bool,
    pub iterations: usize,
}

impl LogisticModel {
    fn standardize(&self, row: &[f64]) -> Vec<f64> {
        row.iter().zip(&self.mean).zip(&self.sd).map(|((&x, m), s)| (x - m) / s).collect()
    }

    pub fn logit(&self, row: &[f64]) -> f64 {
        let z = self.standardize(row);
        self.coef[0] + self.coef[1..].iter().zip(&z).map(|(b, x)| b * x).sum::<f64>()
    }

    pub fn apply(&self, row: &[f64]) -> f64 {
        sigmoid(self.logit(row))
    }

    /// Intercept and slopes on the original covariate scale.
    pub fn raw_coefficients(&self) -> Vec<f64> {
        let slopes: Vec<f64> = self.coef[1..].iter().zip(&self.sd).map(|(b, s)| b / s).collect();
        let shift: f64 = slopes.iter().zip(&self.mean).map(|(b, m)| b * m).sum();
        std::iter::once(self.coef[0] - shift).chain(slopes).collect()
    }
}

/// Penalized IRLS; the intercept is never penalized. Returns the coefficients
/// and iteration count, or `None` when the Hessian is singular or the
/// gradient does not fall below tolerance.
fn irls(x: &DMatrix<f64>, y: &DVector<f64>, lambda: f64) -> Option<(DVector<f64>, usize)> {
    let p = x.ncols();
    let mut beta = DVector::zeros(p);
    let mut pen = DMatrix::identity(p, p) * lambda;
    pen[(0, 0)] = 0.0;
    for it in 0..MAX_ITER {
        let eta = x * &beta;
        let mu = eta.map(sigmoid);
        let grad = x.transpose() * (y - &mu) - &pen * &beta;
        if grad.norm() < GRAD_TOL {
            return Some((beta, it));
        }
        let w = mu.map(|m| m * (1.0 - m));
        let mut h = &pen + DMatrix::zeros(p, p);
        for (i, row) in x.row_iter().enumerate() {
            h += row.transpose() * row * w[i];
        }
        let step = h.cholesky()?.solve(&grad);
        if !step.iter().all(|v| v.is_finite()) {
            return None;
        }
        beta += step;
    }
    None
}

/// Maximum-likelihood logistic fit of `y ∈ [0, 1]` on `rows`. Covariates are
/// standardized first; constant columns become zero and get a zero slope
/// under the ridge fallback.
pub fn fit_score_combiner(rows: &[Vec<f64>], y: &[f64]) -> Result<LogisticModel, ClinicalError> {
    let n = rows.len();
    if n == 0 || n != y.len() {
        return Err(ClinicalError::BadDesign(format!("{n} rows, {} targets", y.len())));
    }
    let k = rows[0].len();
    if rows.iter().any(|r| r.len() != k) || y.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(ClinicalError::BadDesign("ragged rows or targets outside [0, 1]".into()));
    }
    let mean: Vec<f64> = (0..k).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n as f64).collect();
    let sd: Vec<f64> = (0..k)
        .map(|j| {
            let v = rows.iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / n as f64;
            if v > 0.0 {
                v.sqrt()
            } else {
                1.0
            }
        })
        .collect();
    let x = DMatrix::from_fn(n, k + 1, |i, j| if j == 0 { 1.0 } else { (rows[i][j - 1] - mean[j - 1]) / sd[j - 1] });
    let yv = DVector::from_column_slice(y);

    let separated = |beta: &DVector<f64>| {
        (&x * beta)
            .iter()
            .any(|&e| sigmoid(e).min(1.0 - sigmoid(e)) < SEPARATION_EPS)
    };
    let (beta, iterations, ridge) = match irls(&x, &yv, 0.0) {
        Some((b, it)) if !separated(&b) => (b, it, false),
        _ => {
            let (b, it) = irls(&x, &yv, RIDGE).ok_or(ClinicalError::NotConverged)?;
            (b, it, true)
        }
    };
    Ok(LogisticModel {
        coef: beta.iter().copied().collect(),
        mean,
        sd,
        ridge,
        iterations,
    })
}
