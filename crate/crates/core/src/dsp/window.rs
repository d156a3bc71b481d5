use ndarray::{s, Array2, Array3};
use serde::{Deserialize, Serialize};

use super::norm::{FeatureStats, NormStats};
use crate::{Error, MultiChannelSignal, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WindowSpec {
    pub len: usize,
    pub stride: usize,
    pub shift_ms: f64,
}

impl Default for WindowSpec {
    fn default() -> Self {
        Self {
            len: 256,
            stride: 128,
            shift_ms: 80.0,
        }
    }
}

/// Target offset in samples for a causal shift of `shift_ms`.
pub fn shift_samples(shift_ms: f64, rate_hz: f64) -> usize {
    (shift_ms * rate_hz / 1000.0).round() as usize
}

/// Input windows `[windows × T × F]` with force targets `[windows × T]`.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowedDataset {
    pub inputs: Array3<f64>,
    pub targets: Array2<f64>,
    pub window_len: usize,
    pub stride: usize,
    pub shift_samples: usize,
    pub feature_rate_hz: f64,
    /// Input statistics, set once the dataset has been standardized.
    pub norm_stats: Option<NormStats>,
    pub target_stats: Option<FeatureStats>,
}

impl WindowedDataset {
    pub fn len(&self) -> usize {
        self.inputs.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn n_features(&self) -> usize {
        self.inputs.shape()[2]
    }

    /// First feature-sample index covered by window `w`.
    pub fn window_start(&self, w: usize) -> usize {
        w * self.stride
    }

    /// All window samples flattened to `[(windows·T) × F]`.
    pub fn input_rows(&self) -> Array2<f64> {
        let (w, t, f) = self.inputs.dim();
        self.inputs
            .to_owned()
            .into_shape_with_order((w * t, f))
            .expect("contiguous window buffer")
    }

    /// Applies input and target standardization in place.
    pub fn standardize(&mut self, stats: &NormStats, target: FeatureStats) -> Result<()> {
        if stats.n_features() != self.n_features() {
            return Err(Error::shape(format!(
                "statistics for {} features, dataset has {}",
                stats.n_features(),
                self.n_features()
            )));
        }
        for mut lane in self.inputs.lanes_mut(ndarray::Axis(2)) {
            for (v, s) in lane.iter_mut().zip(&stats.features) {
                *v = s.apply(*v);
            }
        }
        self.targets.mapv_inplace(|v| target.apply(v));
        self.norm_stats = Some(stats.clone());
        self.target_stats = Some(target);
        Ok(())
    }

    /// Concatenates datasets that share window geometry.
    pub fn concat(parts: &[WindowedDataset]) -> Result<WindowedDataset> {
        let first = parts
            .first()
            .ok_or_else(|| Error::EmptyDataset("nothing to concatenate".into()))?;
        let mut inputs = Vec::new();
        let mut targets = Vec::new();
        for p in parts {
            if p.window_len != first.window_len || p.n_features() != first.n_features() {
                return Err(Error::shape("datasets differ in window length or features"));
            }
            inputs.push(p.inputs.view());
            targets.push(p.targets.view());
        }
        let inputs = ndarray::concatenate(ndarray::Axis(0), &inputs)
            .map_err(|e| Error::shape(e.to_string()))?;
        let targets = ndarray::concatenate(ndarray::Axis(0), &targets)
            .map_err(|e| Error::shape(e.to_string()))?;
        Ok(WindowedDataset {
            inputs,
            targets,
            norm_stats: None,
            target_stats: None,
            ..first.clone()
        })
    }
}

/// Slides a window of `spec.len` samples with stride `spec.stride` over the
/// features; the target for feature time `t` is the force at
/// `t + round(shift_ms·rate/1000)`. Windows that would read past the end of
/// the force trace are dropped.
pub fn make_windows(
    features: &MultiChannelSignal,
    force: &MultiChannelSignal,
    spec: &WindowSpec,
) -> Result<WindowedDataset> {
    if spec.len == 0 || spec.stride == 0 {
        return Err(Error::param("window length and stride must be positive"));
    }
    if !(spec.shift_ms >= 0.0) {
        return Err(Error::param(format!("shift must be non-negative, got {} ms", spec.shift_ms)));
    }
    if features.sample_rate_hz() != force.sample_rate_hz() {
        return Err(Error::shape(format!(
            "features at {} Hz but force at {} Hz",
            features.sample_rate_hz(),
            force.sample_rate_hz()
        )));
    }
    if features.n_samples() != force.n_samples() {
        return Err(Error::shape(format!(
            "features have {} samples, force {}",
            features.n_samples(),
            force.n_samples()
        )));
    }
    if force.n_channels() != 1 {
        return Err(Error::shape("force must be a single channel"));
    }
    let rate = features.sample_rate_hz();
    let shift = shift_samples(spec.shift_ms, rate);
    let n = features.n_samples();
    let usable = n.saturating_sub(shift);
    if usable < spec.len {
        return Err(Error::EmptyDataset(format!(
            "{n} samples cannot hold a window of {} plus a shift of {shift}",
            spec.len
        )));
    }
    let count = (usable - spec.len) / spec.stride + 1;
    let f = features.n_channels();
    let mut inputs = Array3::zeros((count, spec.len, f));
    let mut targets = Array2::zeros((count, spec.len));
    let fdata = features.data();
    let force_row = force.channel(0);
    for w in 0..count {
        let start = w * spec.stride;
        inputs
            .slice_mut(s![w, .., ..])
            .assign(&fdata.slice(s![.., start..start + spec.len]).t());
        targets
            .slice_mut(s![w, ..])
            .assign(&force_row.slice(s![start + shift..start + shift + spec.len]));
    }
    Ok(WindowedDataset {
        inputs,
        targets,
        window_len: spec.len,
        stride: spec.stride,
        shift_samples: shift,
        feature_rate_hz: rate,
        norm_stats: None,
        target_stats: None,
    })
}
