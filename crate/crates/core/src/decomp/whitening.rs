use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Components with eigenvalue below this fraction of the largest are dropped.
pub const EIGEN_FLOOR: f64 = 1e-10;

/// `y = V (x − μ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WhiteningTransform {
    pub mean: Array1<f64>,
    /// `[retained × channels]`
    pub matrix: Array2<f64>,
    pub retained: usize,
    /// Retained covariance eigenvalues, descending.
    pub eigenvalues: Vec<f64>,
}

/// Covariance `(1/N) Σ (x − μ)(x − μ)ᵀ` of `[channels × samples]` data.
pub fn covariance(x: &Array2<f64>) -> (Array1<f64>, Array2<f64>) {
    let n = x.ncols() as f64;
    let mean = x.mean_axis(Axis(1)).expect("non-empty");
    let centered = x - &mean.view().insert_axis(Axis(1));
    let cov = centered.dot(&centered.t()) / n;
    (mean, cov)
}

/// Fits the whitening transform of `[channels × samples]` data.
pub fn fit_whitening(x: &Array2<f64>) -> Result<WhiteningTransform> {
    let (c, n) = x.dim();
    if c == 0 || n < 2 * c {
        return Err(Error::InsufficientData(format!(
            "whitening {c} channels needs at least {} samples, got {n}",
            2 * c
        )));
    }
    let (mean, cov) = covariance(x);
    let eig = SymmetricEigen::new(DMatrix::from_fn(c, c, |i, j| cov[[i, j]]));
    let mut order: Vec<usize> = (0..c).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let lambda_max = eig.eigenvalues[order[0]];
    if !(lambda_max > 0.0) || !lambda_max.is_finite() {
        return Err(Error::Numerical(format!(
            "covariance has no positive eigenvalue (max {lambda_max:e})"
        )));
    }
    let keep: Vec<usize> = order
        .into_iter()
        .filter(|&i| eig.eigenvalues[i] >= EIGEN_FLOOR * lambda_max)
        .collect();
    let mut matrix = Array2::zeros((keep.len(), c));
    for (row, &i) in keep.iter().enumerate() {
        let scale = 1.0 / eig.eigenvalues[i].sqrt();
        for j in 0..c {
            matrix[[row, j]] = eig.eigenvectors[(j, i)] * scale;
        }
    }
    Ok(WhiteningTransform {
        mean,
        retained: keep.len(),
        eigenvalues: keep.iter().map(|&i| eig.eigenvalues[i]).collect(),
        matrix,
    })
}

impl WhiteningTransform {
    pub fn apply(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        if x.nrows() != self.mean.len() {
            return Err(Error::shape(format!(
                "whitening fitted on {} channels, got {}",
                self.mean.len(),
                x.nrows()
            )));
        }
        let centered = x - &self.mean.view().insert_axis(Axis(1));
        Ok(self.matrix.dot(&centered))
    }
}
