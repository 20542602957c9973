use std::io::Write;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::ProbeError;

/// Components reported when the caller does not choose.
pub const DEFAULT_COMPONENTS: usize = 50;

/// Eigenvalues below this fraction of the largest are treated as zero.
pub const RANK_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CcaResult {
    /// Canonical correlations, nonincreasing, in [0, 1].
    pub correlations: Vec<f64>,
    /// Columns are the canonical directions `a_i` (p × k).
    pub x_weights: DMatrix<f64>,
    /// Columns are the canonical directions `b_i` (q × k).
    pub y_weights: DMatrix<f64>,
    pub x_mean: Vec<f64>,
    pub y_mean: Vec<f64>,
    pub requested: usize,
    /// min(rank X, rank Y) after centring.
    pub valid_components: usize,
}

fn centre(m: &DMatrix<f64>) -> (DMatrix<f64>, Vec<f64>) {
    let means: Vec<f64> = (0..m.ncols()).map(|c| m.column(c).mean()).collect();
    let c = DMatrix::from_fn(m.nrows(), m.ncols(), |r, j| m[(r, j)] - means[j]);
    (c, means)
}

/// Maps centred data to unit covariance on its retained eigen-directions
/// (p × r). Directions at or below the round-off left by centring values of
/// magnitude `max_abs` carry no variance.
fn whitener(cov: DMatrix<f64>, max_abs: f64) -> DMatrix<f64> {
    let p = cov.nrows();
    let eig = SymmetricEigen::new(cov);
    let top = eig.eigenvalues.iter().cloned().fold(0.0_f64, f64::max);
    let noise = (1e3 * f64::EPSILON * max_abs).powi(2);
    let floor = (RANK_TOLERANCE * top).max(noise);
    let keep: Vec<usize> = (0..p)
        .filter(|&i| top > 0.0 && eig.eigenvalues[i] > floor)
        .collect();
    let mut w = DMatrix::zeros(p, keep.len());
    for (j, &i) in keep.iter().enumerate() {
        let scale = 1.0 / eig.eigenvalues[i].sqrt();
        w.set_column(j, &(eig.eigenvectors.column(i) * scale));
    }
    w
}

/// Canonical correlation analysis of paired rows of `x` (n × p) and `y`
/// (n × q). Both sides are whitened, then the cross-covariance of the
/// whitened data is decomposed; singular values are sorted explicitly.
/// Returns at most `k` components and fewer when either side is rank
/// deficient; a side with no variance is an error.
pub fn cca(x: &DMatrix<f64>, y: &DMatrix<f64>, k: usize) -> Result<CcaResult, ProbeError> {
    let n = x.nrows();
    if y.nrows() != n {
        return Err(ProbeError::Length { expected: n, found: y.nrows() });
    }
    if n < 2 {
        return Err(ProbeError::Invalid("CCA needs at least two rows".into()));
    }
    if k == 0 || k > x.ncols().min(y.ncols()) {
        return Err(ProbeError::Invalid(format!(
            "component count {k} must lie in 1..={}",
            x.ncols().min(y.ncols())
        )));
    }
    if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return Err(ProbeError::Invalid("CCA input contains non-finite values".into()));
    }
    let (xc, x_mean) = centre(x);
    let (yc, y_mean) = centre(y);
    let denom = (n - 1) as f64;
    let wx = whitener(xc.transpose() * &xc / denom, x.amax());
    let wy = whitener(yc.transpose() * &yc / denom, y.amax());
    let valid = wx.ncols().min(wy.ncols());
    if valid == 0 {
        return Err(ProbeError::Rank { valid: 0, requested: k });
    }
    let cross = wx.transpose() * (xc.transpose() * &yc / denom) * &wy;
    let svd = cross.svd(true, true);
    let u = svd.u.ok_or_else(|| ProbeError::Numerical("SVD did not return U".into()))?;
    let v_t = svd.v_t.ok_or_else(|| ProbeError::Numerical("SVD did not return V".into()))?;
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let m = k.min(valid);
    let mut a = DMatrix::zeros(x.ncols(), m);
    let mut b = DMatrix::zeros(y.ncols(), m);
    let mut correlations = Vec::with_capacity(m);
    for (j, &i) in order.iter().take(m).enumerate() {
        correlations.push(svd.singular_values[i].clamp(0.0, 1.0));
        a.set_column(j, &(&wx * u.column(i)));
        let vi: DVector<f64> = v_t.row(i).transpose();
        b.set_column(j, &(&wy * vi));
    }
    Ok(CcaResult {
        correlations,
        x_weights: a,
        y_weights: b,
        x_mean,
        y_mean,
        requested: k,
        valid_components: valid,
    })
}

impl CcaResult {
    /// Canonical variates `(X - mean) A`.
    pub fn transform_x(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        project(x, &self.x_mean, &self.x_weights)
    }

    pub fn transform_y(&self, y: &DMatrix<f64>) -> DMatrix<f64> {
        project(y, &self.y_mean, &self.y_weights)
    }

    /// `component,correlation` rows, components numbered from 1.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), ProbeError> {
        let mut w = csv::Writer::from_writer(writer);
        let io = |e: csv::Error| ProbeError::Io(e.to_string());
        w.write_record(["component", "correlation"]).map_err(io)?;
        for (i, c) in self.correlations.iter().enumerate() {
            w.write_record([(i + 1).to_string(), c.to_string()]).map_err(io)?;
        }
        w.flush().map_err(|e| ProbeError::Io(e.to_string()))
    }
}

fn project(m: &DMatrix<f64>, mean: &[f64], w: &DMatrix<f64>) -> DMatrix<f64> {
    let c = DMatrix::from_fn(m.nrows(), m.ncols(), |r, j| m[(r, j)] - mean[j]);
    c * w
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_side_is_rank_error() {
        let x = DMatrix::from_element(5, 2, 1.0);
        let y = DMatrix::from_fn(5, 2, |r, c| (r * (c + 1)) as f64 + (r * r) as f64 * c as f64);
        assert!(matches!(cca(&x, &y, 1), Err(ProbeError::Rank { valid: 0, .. })));
    }

    #[test]
    fn repeated_inexact_rows_are_rank_error() {
        // the mean of 97 copies of 0.1 is not exactly 0.1
        let row = [0.1, -0.3, 0.7];
        let x = DMatrix::from_fn(97, 3, |_, c| row[c]);
        let y = DMatrix::from_fn(97, 3, |r, c| ((r * 7 + c * 3) % 11) as f64);
        assert!(matches!(cca(&x, &y, 2), Err(ProbeError::Rank { valid: 0, .. })));
    }

    #[test]
    fn too_many_components_rejected() {
        let x = DMatrix::from_fn(6, 2, |r, c| (r + c) as f64);
        assert!(cca(&x, &x, 3).is_err());
        assert!(cca(&x, &x, 0).is_err());
    }

    #[test]
    fn csv_layout() {
        let r = CcaResult {
            correlations: vec![0.9, 0.5],
            x_weights: DMatrix::zeros(2, 2),
            y_weights: DMatrix::zeros(2, 2),
            x_mean: vec![0.0; 2],
            y_mean: vec![0.0; 2],
            requested: 2,
            valid_components: 2,
        };
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "component,correlation\n1,0.9\n2,0.5\n");
    }
}
