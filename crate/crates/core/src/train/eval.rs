use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::metrics::{pearson_r, rmse};
use crate::dsp::WindowedDataset;
use crate::models::Model;
use crate::tensor::Real;
use crate::{Error, Result};

/// The windows of one held-out trial, standardized with training statistics.
#[derive(Debug, Clone)]
pub struct TrialWindows {
    pub name: String,
    pub data: WindowedDataset,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialMetrics {
    pub trial: String,
    pub rmse_pct_mvf: f64,
    pub pearson_r: f64,
    /// Prediction or target was constant, so `pearson_r` is a placeholder 0.
    pub r_undefined: bool,
    /// Stitched traces in %MVF.
    #[serde(skip)]
    pub measured: Vec<f64>,
    #[serde(skip)]
    pub predicted: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub trials: Vec<TrialMetrics>,
    pub mean_rmse_pct_mvf: f64,
    pub mean_pearson_r: f64,
}

/// Joins overlapping windows `[W × T]` into one trace: the first window in
/// full, then the newest `stride` samples of each later window.
pub fn stitch_windows(windows: &Array2<f64>, stride: usize) -> Result<Vec<f64>> {
    let (w, t) = windows.dim();
    if stride == 0 || stride > t {
        return Err(Error::param(format!("stride {stride} must lie in 1..={t}")));
    }
    let mut out = Vec::with_capacity(t + w.saturating_sub(1) * stride);
    for (i, row) in windows.rows().into_iter().enumerate() {
        let from = if i == 0 { 0 } else { t - stride };
        out.extend(row.iter().skip(from));
    }
    Ok(out)
}

/// Per-trial RMSE (%MVF) and Pearson r of the stitched prediction.
pub fn evaluate<S: Real>(model: &Model<S>, trials: &[TrialWindows], batch_size: usize) -> Result<EvalReport> {
    if trials.is_empty() {
        return Err(Error::EmptyDataset("no test trials to evaluate".into()));
    }
    let mut out = Vec::with_capacity(trials.len());
    for trial in trials {
        let d = &trial.data;
        if d.is_empty() {
            return Err(Error::EmptyDataset(format!("trial {} has no windows", trial.name)));
        }
        let mut pred = Array2::zeros(d.targets.raw_dim());
        let idx: Vec<usize> = (0..d.len()).collect();
        for chunk in idx.chunks(batch_size.max(1)) {
            let batch = d.inputs.select(ndarray::Axis(0), chunk);
            let y = model.predict_batch(&batch)?;
            for (row, &w) in chunk.iter().enumerate() {
                pred.row_mut(w).assign(&y.row(row));
            }
        }
        let inv = |a: Array2<f64>| match &d.target_stats {
            Some(s) => a.mapv(|z| s.invert(z)),
            None => a,
        };
        let predicted = stitch_windows(&inv(pred), d.stride)?;
        let measured = stitch_windows(&inv(d.targets.clone()), d.stride)?;
        let corr = pearson_r(&predicted, &measured)?;
        out.push(TrialMetrics {
            trial: trial.name.clone(),
            rmse_pct_mvf: rmse(&predicted, &measured)?,
            pearson_r: corr.r,
            r_undefined: corr.undefined,
            measured,
            predicted,
        });
    }
    let n = out.len() as f64;
    Ok(EvalReport {
        mean_rmse_pct_mvf: out.iter().map(|t| t.rmse_pct_mvf).sum::<f64>() / n,
        mean_pearson_r: out.iter().map(|t| t.pearson_r).sum::<f64>() / n,
        trials: out,
    })
}

impl EvalReport {
    /// `"4.44 / 0.974"`: RMSE to two decimals, r to three.
    pub fn summary(&self) -> String {
        format!("{:.2} / {:.3}", self.mean_rmse_pct_mvf, self.mean_pearson_r)
    }
}
