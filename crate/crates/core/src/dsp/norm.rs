use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Floor applied to zero-variance features.
pub const STD_EPSILON: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureStats {
    pub mean: f64,
    pub std: f64,
    /// Set when the observed std was below [`STD_EPSILON`] and got clamped.
    #[serde(default)]
    pub clamped: bool,
}

impl FeatureStats {
    pub fn apply(&self, v: f64) -> f64 {
        (v - self.mean) / self.std
    }

    pub fn invert(&self, z: f64) -> f64 {
        z * self.std + self.mean
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub features: Vec<FeatureStats>,
}

impl NormStats {
    pub fn n_features(&self) -> usize {
        self.features.len()
    }

    pub fn any_clamped(&self) -> bool {
        self.features.iter().any(|f| f.clamped)
    }
}

/// Per-feature mean and (population) std over every row of every block.
/// Blocks are `[samples × features]`.
pub fn zscore_fit(train: &[ArrayView2<f64>]) -> Result<NormStats> {
    let n_features = train
        .first()
        .map(|b| b.ncols())
        .ok_or_else(|| Error::InsufficientData("no training blocks for z-score".into()))?;
    if train.iter().any(|b| b.ncols() != n_features) {
        return Err(Error::shape("training blocks disagree on feature count"));
    }
    let n: usize = train.iter().map(|b| b.nrows()).sum();
    if n < 2 {
        return Err(Error::InsufficientData(format!(
            "z-score needs at least 2 samples per feature, got {n}"
        )));
    }
    let mut features = Vec::with_capacity(n_features);
    for f in 0..n_features {
        let sum: f64 = train.iter().map(|b| b.column(f).sum()).sum();
        let mean = sum / n as f64;
        let ss: f64 = train
            .iter()
            .map(|b| b.column(f).iter().map(|v| (v - mean).powi(2)).sum::<f64>())
            .sum();
        let std = (ss / n as f64).sqrt();
        if !mean.is_finite() || !std.is_finite() {
            return Err(Error::Numerical(format!("feature {f} has non-finite statistics")));
        }
        let clamped = std < STD_EPSILON;
        if clamped {
            log::warn!("feature {f} has zero variance; std clamped to {STD_EPSILON}");
        }
        features.push(FeatureStats {
            mean,
            std: std.max(STD_EPSILON),
            clamped,
        });
    }
    Ok(NormStats { features })
}

pub fn zscore_apply(x: &ArrayView2<f64>, stats: &NormStats) -> Result<Array2<f64>> {
    check_features(x, stats)?;
    let mut out = x.to_owned();
    for (mut col, s) in out.columns_mut().into_iter().zip(&stats.features) {
        col.mapv_inplace(|v| s.apply(v));
    }
    Ok(out)
}

pub fn zscore_invert(z: &ArrayView2<f64>, stats: &NormStats) -> Result<Array2<f64>> {
    check_features(z, stats)?;
    let mut out = z.to_owned();
    for (mut col, s) in out.columns_mut().into_iter().zip(&stats.features) {
        col.mapv_inplace(|v| s.invert(v));
    }
    Ok(out)
}

fn check_features(x: &ArrayView2<f64>, stats: &NormStats) -> Result<()> {
    if x.ncols() != stats.n_features() {
        return Err(Error::shape(format!(
            "{} features given, statistics cover {}",
            x.ncols(),
            stats.n_features()
        )));
    }
    Ok(())
}
