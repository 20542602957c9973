use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::ProbeError;

/// Ridge weights with an unpenalised intercept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgeFit {
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub lambda: f64,
    /// The unpenalised system was singular and the minimum-norm solution
    /// was returned.
    pub min_norm: bool,
}

impl RidgeFit {
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        self.intercept + self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
    }

    pub fn predict(&self, x: &DMatrix<f64>) -> Vec<f64> {
        (0..x.nrows())
            .map(|r| self.intercept + (0..x.ncols()).map(|c| self.weights[c] * x[(r, c)]).sum::<f64>())
            .collect()
    }
}

/// Minimises `|y - Xw - b|^2 + lambda |w|^2` by solving the centred normal
/// equations. At `lambda = 0` the solve goes through the SVD and a rank
/// deficient design yields the minimum-norm weights.
pub fn ridge_fit(x: &DMatrix<f64>, y: &[f64], lambda: f64) -> Result<RidgeFit, ProbeError> {
    let (n, p) = x.shape();
    if n != y.len() {
        return Err(ProbeError::Length { expected: n, found: y.len() });
    }
    if n < 2 {
        return Err(ProbeError::Invalid("ridge needs at least two rows".into()));
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(ProbeError::Invalid(format!("ridge penalty must be finite and non-negative, got {lambda}")));
    }
    let x_mean: Vec<f64> = (0..p).map(|c| x.column(c).mean()).collect();
    let y_mean = y.iter().sum::<f64>() / n as f64;
    let xc = DMatrix::from_fn(n, p, |r, c| x[(r, c)] - x_mean[c]);
    let yc = DVector::from_iterator(n, y.iter().map(|v| v - y_mean));

    let (w, min_norm) = if lambda == 0.0 {
        let svd = xc.clone().svd(true, true);
        let smax = svd.singular_values.max();
        let tol = smax * n.max(p) as f64 * f64::EPSILON;
        let rank = svd.singular_values.iter().filter(|s| **s > tol).count();
        let w = svd
            .solve(&yc, tol)
            .map_err(|e| ProbeError::Numerical(e.to_string()))?;
        (w, rank < p)
    } else {
        let mut gram = xc.transpose() * &xc;
        for i in 0..p {
            gram[(i, i)] += lambda;
        }
        let rhs = xc.transpose() * &yc;
        let chol = gram
            .cholesky()
            .ok_or_else(|| ProbeError::Numerical("ridge system is not positive definite".into()))?;
        (chol.solve(&rhs), false)
    };
    if w.iter().any(|v| !v.is_finite()) {
        return Err(ProbeError::Numerical("non-finite ridge weights".into()));
    }
    let intercept = y_mean - w.iter().zip(&x_mean).map(|(a, b)| a * b).sum::<f64>();
    Ok(RidgeFit {
        weights: w.iter().copied().collect(),
        intercept,
        lambda,
        min_norm,
    })
}
