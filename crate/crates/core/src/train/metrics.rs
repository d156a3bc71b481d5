use crate::{Error, Result};

fn check_lengths(pred: &[f64], target: &[f64]) -> Result<()> {
    if pred.len() != target.len() {
        return Err(Error::shape(format!(
            "prediction has {} samples, target {}",
            pred.len(),
            target.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::EmptyDataset("no samples to score".into()));
    }
    Ok(())
}

/// `(1/n) Σ (ŷ − y)²`.
pub fn mse(pred: &[f64], target: &[f64]) -> Result<f64> {
    check_lengths(pred, target)?;
    let sum: f64 = pred.iter().zip(target).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok(sum / pred.len() as f64)
}

pub fn rmse(pred: &[f64], target: &[f64]) -> Result<f64> {
    mse(pred, target).map(f64::sqrt)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correlation {
    pub r: f64,
    /// Either side was constant; `r` is reported as 0.
    pub undefined: bool,
}

/// Sample Pearson correlation, 0 with a flag when undefined.
pub fn pearson_r(pred: &[f64], target: &[f64]) -> Result<Correlation> {
    check_lengths(pred, target)?;
    Ok(match crate::stats::pearson(pred, target) {
        Some(r) => Correlation {
            r: r.clamp(-1.0, 1.0),
            undefined: false,
        },
        None => Correlation {
            r: 0.0,
            undefined: true,
        },
    })
}
