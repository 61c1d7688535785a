//! L1-regularized logistic regression by cyclic coordinate descent with
//! soft-thresholding. The intercept is unpenalized.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learners::boosting::sigmoid;
use crate::learners::matrix::{EncodedMatrix, MatrixSchema};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearParams {
    /// L1 strength on the mean log-loss scale.
    pub lambda1: f64,
    pub max_iters: usize,
    /// Convergence: largest coordinate change in a full sweep.
    pub tol: f64,
}

impl Default for LinearParams {
    fn default() -> Self {
        LinearParams { lambda1: 0.01, max_iters: 200, tol: 1e-5 }
    }
}

impl LinearParams {
    pub fn validate(&self) -> Result<()> {
        if self.lambda1 < 0.0 {
            return Err(Error::InvalidArgument("lambda1 must be non-negative".into()));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidArgument("max_iters must be at least 1".into()));
        }
        if self.tol <= 0.0 {
            return Err(Error::InvalidArgument("tol must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseLinearModel {
    /// One weight per indicator column.
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub params: LinearParams,
    /// False when the iteration cap was hit before the tolerance.
    pub converged: bool,
    pub sweeps: usize,
    pub schema: MatrixSchema,
}

pub fn train_l1_logistic(
    matrix: &EncodedMatrix,
    labels: &[u8],
    params: &LinearParams,
    weights: Option<&[f64]>,
) -> Result<SparseLinearModel> {
    params.validate()?;
    let n = matrix.n_rows();
    if n == 0 {
        return Err(Error::Train("empty training data".into()));
    }
    if labels.len() != n {
        return Err(Error::Train(format!("{} labels for {} rows", labels.len(), n)));
    }

    let row_w = |i: usize| weights.map_or(1.0, |ws| ws[i]);
    let total_w: f64 = (0..n).map(row_w).sum();
    let columns = matrix.indicator_row_lists();

    let mut coef = vec![0.0; columns.len()];
    let mut intercept = 0.0;
    let mut margins = vec![0.0; n];
    let mut converged = false;
    let mut sweeps = 0;

    for _ in 0..params.max_iters {
        sweeps += 1;
        let mut max_delta: f64 = 0.0;

        // intercept: plain Newton step on the mean loss
        let (mut g0, mut h0) = (0.0, 0.0);
        for i in 0..n {
            let p = sigmoid(margins[i]);
            let w = row_w(i);
            g0 += w * (p - labels[i] as f64);
            h0 += w * (p * (1.0 - p)).max(1e-12);
        }
        let delta0 = -g0 / h0;
        intercept += delta0;
        for m in margins.iter_mut() {
            *m += delta0;
        }
        max_delta = max_delta.max(delta0.abs());

        for (j, rows) in columns.iter().enumerate() {
            if rows.is_empty() {
                continue;
            }
            let (mut g, mut h) = (0.0, 0.0);
            for &r in rows {
                let i = r as usize;
                let p = sigmoid(margins[i]);
                let w = row_w(i);
                g += w * (p - labels[i] as f64);
                h += w * (p * (1.0 - p)).max(1e-12);
            }
            g /= total_w;
            h /= total_w;
            if h < 1e-12 {
                continue;
            }
            let u = h * coef[j] - g;
            let new = soft_threshold(u, params.lambda1) / h;
            let delta = new - coef[j];
            if delta != 0.0 {
                coef[j] = new;
                for &r in rows {
                    margins[r as usize] += delta;
                }
                max_delta = max_delta.max(delta.abs());
            }
        }

        if max_delta < params.tol {
            converged = true;
            break;
        }
    }

    Ok(SparseLinearModel {
        weights: coef,
        intercept,
        params: *params,
        converged,
        sweeps,
        schema: matrix.schema().clone(),
    })
}

fn soft_threshold(u: f64, lambda: f64) -> f64 {
    if u > lambda {
        u - lambda
    } else if u < -lambda {
        u + lambda
    } else {
        0.0
    }
}

impl SparseLinearModel {
    pub fn score(&self, matrix: &EncodedMatrix) -> Result<Vec<f64>> {
        matrix.check_schema(&self.schema)?;
        Ok((0..matrix.n_rows()).map(|r| sigmoid(self.margin(matrix, r))).collect())
    }

    pub fn margin(&self, matrix: &EncodedMatrix, row: usize) -> f64 {
        let mut f = self.intercept;
        for (var_idx, var) in self.schema.vars.iter().enumerate() {
            let code = matrix.var_codes(var_idx)[row];
            if let Ok(pos) = var.codes.binary_search(&code) {
                f += self.weights[var.offset + pos];
            }
        }
        f
    }

    /// Indicator columns with nonzero weight.
    pub fn support(&self) -> Vec<usize> {
        self.weights
            .iter()
            .enumerate()
            .filter(|(_, &w)| w != 0.0)
            .map(|(j, _)| j)
            .collect()
    }
}

/// Analytic gradient of the unpenalized mean log-loss at the model's
/// coefficients, one entry per indicator column plus the intercept last.
/// Exposed for gradient checking.
pub fn logistic_gradient(
    matrix: &EncodedMatrix,
    labels: &[u8],
    weights: Option<&[f64]>,
    coef: &[f64],
    intercept: f64,
) -> Vec<f64> {
    let n = matrix.n_rows();
    let row_w = |i: usize| weights.map_or(1.0, |ws: &[f64]| ws[i]);
    let total_w: f64 = (0..n).map(row_w).sum();
    let columns = matrix.indicator_row_lists();

    let mut margins = vec![intercept; n];
    for (j, rows) in columns.iter().enumerate() {
        if coef[j] != 0.0 {
            for &r in rows {
                margins[r as usize] += coef[j];
            }
        }
    }
    let mut grad = vec![0.0; columns.len() + 1];
    for (j, rows) in columns.iter().enumerate() {
        grad[j] = rows
            .iter()
            .map(|&r| {
                let i = r as usize;
                row_w(i) * (sigmoid(margins[i]) - labels[i] as f64)
            })
            .sum::<f64>()
            / total_w;
    }
    grad[columns.len()] = (0..n)
        .map(|i| row_w(i) * (sigmoid(margins[i]) - labels[i] as f64))
        .sum::<f64>()
        / total_w;
    grad
}

/// Unpenalized mean log-loss at arbitrary coefficients; used by the finite
/// difference checks.
pub fn logistic_loss(
    matrix: &EncodedMatrix,
    labels: &[u8],
    weights: Option<&[f64]>,
    coef: &[f64],
    intercept: f64,
) -> f64 {
    let n = matrix.n_rows();
    let row_w = |i: usize| weights.map_or(1.0, |ws: &[f64]| ws[i]);
    let total_w: f64 = (0..n).map(row_w).sum();
    let columns = matrix.indicator_row_lists();
    let mut margins = vec![intercept; n];
    for (j, rows) in columns.iter().enumerate() {
        if coef[j] != 0.0 {
            for &r in rows {
                margins[r as usize] += coef[j];
            }
        }
    }
    let mut total = 0.0;
    for i in 0..n {
        let f = margins[i];
        let softplus = if f > 0.0 { f + (-f).exp().ln_1p() } else { f.exp().ln_1p() };
        total += row_w(i) * (softplus - labels[i] as f64 * f);
    }
    total / total_w
}
