//! Spike detection on a separated source: peaks of the squared source,
//! 2-means clustering of peak heights, refractory cleanup.

use serde::{Deserialize, Serialize};

use super::kmeans::{kmeans_1d, silhouette_1d};
use crate::stats::mad;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpikeParams {
    /// Peaks must exceed this multiple of the MAD of the squared source.
    pub threshold_mad: f64,
    pub refractory_ms: f64,
    pub restarts: usize,
    pub seed: u64,
}

impl Default for SpikeParams {
    fn default() -> Self {
        Self {
            threshold_mad: 3.0,
            refractory_ms: 20.0,
            restarts: 5,
            seed: 0,
        }
    }
}

/// Frozen spike/noise decision learned on training data; applying it to a
/// new source of the same unit needs no refitting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpikeClassifier {
    pub threshold: f64,
    pub noise_centroid: f64,
    pub spike_centroid: f64,
    pub refractory_samples: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpikeDetection {
    pub indices: Vec<usize>,
    pub silhouette: f64,
    pub classifier: Option<SpikeClassifier>,
}

impl SpikeDetection {
    fn empty() -> Self {
        Self {
            indices: Vec::new(),
            silhouette: -1.0,
            classifier: None,
        }
    }
}

fn refractory_samples(refractory_ms: f64, rate_hz: f64) -> usize {
    ((refractory_ms * rate_hz / 1000.0).round() as usize).max(1)
}

/// Local maxima of `energy` above `threshold`, at least `min_distance`
/// apart; taller peaks win.
pub fn find_peaks(energy: &[f64], threshold: f64, min_distance: usize) -> Vec<usize> {
    let n = energy.len();
    let mut candidates: Vec<usize> = (0..n)
        .filter(|&i| {
            let v = energy[i];
            v > threshold
                && (i == 0 || energy[i - 1] < v)
                && (i + 1 == n || energy[i + 1] <= v)
        })
        .collect();
    candidates.sort_by(|&a, &b| energy[b].total_cmp(&energy[a]).then(a.cmp(&b)));
    let mut taken = vec![false; n];
    let mut kept = Vec::new();
    for i in candidates {
        let lo = i.saturating_sub(min_distance.saturating_sub(1));
        let hi = (i + min_distance).min(n);
        if taken[lo..hi].iter().any(|&t| t) {
            continue;
        }
        taken[i] = true;
        kept.push(i);
    }
    kept.sort_unstable();
    kept
}

/// Keeps the larger of any two spikes closer than `refractory` samples.
pub fn enforce_refractory(indices: &[usize], energy: &[f64], refractory: usize) -> Vec<usize> {
    let mut out: Vec<usize> = Vec::with_capacity(indices.len());
    for &i in indices {
        match out.last_mut() {
            Some(last) if i - *last < refractory => {
                if energy[i] > energy[*last] {
                    *last = i;
                }
            }
            _ => out.push(i),
        }
    }
    out
}

/// Detects discharges in one separated source.
pub fn extract_spikes(source: &[f64], rate_hz: f64, params: &SpikeParams) -> SpikeDetection {
    if source.is_empty() {
        return SpikeDetection::empty();
    }
    let energy: Vec<f64> = source.iter().map(|v| v * v).collect();
    let threshold = params.threshold_mad * mad(&energy);
    let refractory = refractory_samples(params.refractory_ms, rate_hz);
    let peaks = find_peaks(&energy, threshold, (refractory / 2).max(1));
    if peaks.len() < 2 {
        return SpikeDetection::empty();
    }
    let heights: Vec<f64> = peaks.iter().map(|&i| energy[i]).collect();
    let clusters = kmeans_1d(&heights, 2, params.restarts, params.seed);
    let silhouette = silhouette_1d(&heights, &clusters.labels, 2);
    let spike_label = if clusters.centroids[1] > clusters.centroids[0] { 1 } else { 0 };
    let spikes: Vec<usize> = peaks
        .iter()
        .zip(&clusters.labels)
        .filter(|(_, &l)| l == spike_label)
        .map(|(&i, _)| i)
        .collect();
    SpikeDetection {
        indices: enforce_refractory(&spikes, &energy, refractory),
        silhouette,
        classifier: Some(SpikeClassifier {
            threshold,
            noise_centroid: clusters.centroids[1 - spike_label],
            spike_centroid: clusters.centroids[spike_label],
            refractory_samples: refractory,
        }),
    }
}

impl SpikeClassifier {
    /// Spike indices of `source` under the frozen threshold and centroids.
    pub fn apply(&self, source: &[f64]) -> Vec<usize> {
        let energy: Vec<f64> = source.iter().map(|v| v * v).collect();
        let peaks = find_peaks(&energy, self.threshold, (self.refractory_samples / 2).max(1));
        let spikes: Vec<usize> = peaks
            .into_iter()
            .filter(|&i| {
                (energy[i] - self.spike_centroid).abs() < (energy[i] - self.noise_centroid).abs()
            })
            .collect();
        enforce_refractory(&spikes, &energy, self.refractory_samples)
    }
}
