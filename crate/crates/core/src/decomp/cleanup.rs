use serde::{Deserialize, Serialize};

use super::drive::{drive_at_source_rate, neural_drive, DriveKernel};
use super::{SpikeTrainSet, UnitQuality};
use crate::stats::pearson;
use crate::{Error, MultiChannelSignal, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CleanupParams {
    pub duplicate_corr: f64,
    pub duplicate_bin_ms: f64,
    pub min_silhouette: f64,
    pub kernel: DriveKernel,
}

impl Default for CleanupParams {
    fn default() -> Self {
        Self {
            duplicate_corr: 0.5,
            duplicate_bin_ms: 5.0,
            min_silhouette: 0.85,
            kernel: DriveKernel::default(),
        }
    }
}

/// Spike counts per `bin` samples.
fn binned(indices: &[usize], n_samples: usize, bin: usize) -> Vec<f64> {
    let mut out = vec![0.0; n_samples.div_ceil(bin)];
    for &i in indices {
        out[i / bin] += 1.0;
    }
    out
}

/// Removes duplicates and poorly separated units, then orders survivors by
/// the signed correlation of their smoothed drive with `force`, strongest
/// positive first. `force` must cover the same time span as the spikes.
pub fn dedup_and_rank(
    units: &SpikeTrainSet,
    force: &MultiChannelSignal,
    params: &CleanupParams,
) -> Result<SpikeTrainSet> {
    if force.n_channels() != 1 {
        return Err(Error::shape(format!(
            "force must have one channel, got {}",
            force.n_channels()
        )));
    }
    let span = |n: usize, fs: f64| n as f64 / fs;
    let (spike_span, force_span) = (
        span(units.n_samples, units.sample_rate_hz),
        force.duration_s(),
    );
    if (spike_span - force_span).abs() > 2.0 / force.sample_rate_hz().min(units.sample_rate_hz) {
        return Err(Error::shape(format!(
            "force covers {force_span:.3} s but spikes cover {spike_span:.3} s"
        )));
    }

    let bin = ((params.duplicate_bin_ms * units.sample_rate_hz / 1000.0).round() as usize).max(1);
    let mut order: Vec<usize> = (0..units.len()).collect();
    order.sort_by(|&a, &b| units.units[b].silhouette().total_cmp(&units.units[a].silhouette()));
    let mut kept: Vec<(usize, Vec<f64>)> = Vec::new();
    for u in order {
        let unit = &units.units[u];
        if unit.silhouette() < params.min_silhouette || unit.indices.is_empty() {
            continue;
        }
        let b = binned(&unit.indices, units.n_samples, bin);
        let duplicate = kept
            .iter()
            .any(|(_, other)| pearson(&b, other).is_some_and(|r| r > params.duplicate_corr));
        if !duplicate {
            kept.push((u, b));
        }
    }
    if kept.is_empty() {
        return Err(Error::EmptyDecomposition(format!(
            "all {} candidate units were duplicates or below silhouette {}",
            units.len(),
            params.min_silhouette
        )));
    }

    let survivors = SpikeTrainSet::new(
        units.sample_rate_hz,
        units.n_samples,
        kept.iter().map(|&(u, _)| units.units[u].clone()).collect(),
    )?;
    let drives = if force.sample_rate_hz() < units.sample_rate_hz {
        neural_drive(&survivors, &params.kernel, force.sample_rate_hz(), &[])?
            .unit_drives
            .into_data()
    } else {
        drive_at_source_rate(&survivors, &params.kernel)?
    };
    let f = force.channel(0).to_vec();
    let len = f.len().min(drives.ncols());
    let mut ranked: Vec<_> = survivors
        .units
        .into_iter()
        .enumerate()
        .map(|(i, mut unit)| {
            let d = drives.row(i).to_vec();
            let r = pearson(&d[..len], &f[..len]).unwrap_or(0.0);
            unit.quality = Some(UnitQuality {
                silhouette: unit.silhouette(),
                force_corr: r,
            });
            (r, unit)
        })
        .collect();
    ranked.sort_by(|a, b| b.0.total_cmp(&a.0));
    SpikeTrainSet::new(
        units.sample_rate_hz,
        units.n_samples,
        ranked.into_iter().map(|(_, u)| u).collect(),
    )
}
