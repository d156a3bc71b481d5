use std::f64::consts::PI;

use ndarray::Array2;

use crate::{Error, MultiChannelSignal, Result};

pub const RESAMPLE_TAPS: usize = 64;

/// Hamming-windowed sinc lowpass with unit DC gain.
pub fn antialias_taps(cutoff_hz: f64, fs: f64, taps: usize) -> Vec<f64> {
    let fc = cutoff_hz / fs;
    let center = (taps - 1) as f64 / 2.0;
    let mut h: Vec<f64> = (0..taps)
        .map(|i| {
            let t = i as f64 - center;
            let sinc = if t == 0.0 {
                2.0 * fc
            } else {
                (2.0 * PI * fc * t).sin() / (PI * t)
            };
            let window = 0.54 - 0.46 * (2.0 * PI * i as f64 / (taps - 1) as f64).cos();
            sinc * window
        })
        .collect();
    let sum: f64 = h.iter().sum();
    h.iter_mut().for_each(|v| *v /= sum);
    h
}

/// Causal FIR; samples before the start are replaced by the first sample so
/// constant inputs stay constant.
fn fir_causal(x: &[f64], h: &[f64]) -> Vec<f64> {
    let Some(&first) = x.first() else {
        return Vec::new();
    };
    (0..x.len())
        .map(|n| {
            h.iter()
                .enumerate()
                .map(|(k, &hk)| hk * if k <= n { x[n - k] } else { first })
                .sum()
        })
        .collect()
}

/// Number of output samples on the uniform `target` grid covering the input.
fn output_len(n: usize, fs: f64, target: f64) -> usize {
    if n == 0 {
        return 0;
    }
    // Small slack so exact grid hits are not lost to rounding.
    ((n - 1) as f64 * target / fs + 1e-9).floor() as usize + 1
}

/// Anti-alias lowpass at `0.45·target` followed by linear interpolation onto
/// the target grid, read one input sample late so every output depends only
/// on input at or before its own time. Downsampling only.
pub fn resample(sig: &MultiChannelSignal, target_rate_hz: f64) -> Result<MultiChannelSignal> {
    let fs = sig.sample_rate_hz();
    if !(target_rate_hz > 0.0 && target_rate_hz.is_finite()) {
        return Err(Error::param(format!("invalid target rate {target_rate_hz}")));
    }
    if target_rate_hz > fs {
        return Err(Error::param(format!(
            "resample only downsamples: {fs} Hz -> {target_rate_hz} Hz requested"
        )));
    }
    if target_rate_hz == fs {
        return Ok(sig.clone());
    }
    let h = antialias_taps(0.45 * target_rate_hz, fs, RESAMPLE_TAPS);
    let n = sig.n_samples();
    let m = output_len(n, fs, target_rate_hz);
    let mut out = Array2::zeros((sig.n_channels(), m));
    for (c, row) in sig.data().rows().into_iter().enumerate() {
        let filtered = fir_causal(&row.to_vec(), &h);
        for j in 0..m {
            let pos = (j as f64 * fs / target_rate_hz - 1.0).max(0.0);
            let i0 = (pos.floor() as usize).min(n - 1);
            let frac = pos - i0 as f64;
            let v = if i0 + 1 < n && frac > 0.0 {
                filtered[i0] * (1.0 - frac) + filtered[i0 + 1] * frac
            } else {
                filtered[i0]
            };
            out[[c, j]] = v;
        }
    }
    MultiChannelSignal::new(out, target_rate_hz, sig.channel_labels().to_vec(), sig.units())
}
