use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnitQuality {
    pub silhouette: f64,
    pub force_corr: f64,
}

/// Discharge times of one motor unit, as sample indices at the EMG rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpikeUnit {
    pub label: String,
    /// Muscle group the unit was decomposed from (or simulated in).
    pub group: Option<String>,
    pub indices: Vec<usize>,
    pub quality: Option<UnitQuality>,
}

impl SpikeUnit {
    pub fn new(label: impl Into<String>, indices: Vec<usize>) -> Self {
        Self {
            label: label.into(),
            group: None,
            indices,
            quality: None,
        }
    }

    pub fn silhouette(&self) -> f64 {
        self.quality.map_or(-1.0, |q| q.silhouette)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpikeTrainSet {
    pub sample_rate_hz: f64,
    pub n_samples: usize,
    pub units: Vec<SpikeUnit>,
}

impl SpikeTrainSet {
    pub fn new(sample_rate_hz: f64, n_samples: usize, units: Vec<SpikeUnit>) -> Result<Self> {
        for u in &units {
            if u.indices.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::param(format!(
                    "spike indices of unit {} are not strictly increasing",
                    u.label
                )));
            }
            if u.indices.last().is_some_and(|&i| i >= n_samples) {
                return Err(Error::param(format!(
                    "unit {} has a spike beyond {n_samples} samples",
                    u.label
                )));
            }
        }
        Ok(Self {
            sample_rate_hz,
            n_samples,
            units,
        })
    }

    pub fn len(&self) -> usize {
        self.units.len()
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }

    /// Binary train `s_i[n] ∈ {0, 1}` of one unit.
    pub fn binary(&self, unit: usize) -> Vec<f64> {
        let mut s = vec![0.0; self.n_samples];
        for &i in &self.units[unit].indices {
            s[i] = 1.0;
        }
        s
    }

    /// All binary trains, `[units × samples]`.
    pub fn binary_matrix(&self) -> Array2<f64> {
        let mut m = Array2::zeros((self.units.len(), self.n_samples));
        for (u, unit) in self.units.iter().enumerate() {
            for &i in &unit.indices {
                m[[u, i]] = 1.0;
            }
        }
        m
    }

    /// Inverse of [`binary_matrix`](Self::binary_matrix); nonzero entries are spikes.
    pub fn from_binary_matrix(
        m: &Array2<f64>,
        sample_rate_hz: f64,
        labels: &[String],
    ) -> Result<Self> {
        let units = m
            .rows()
            .into_iter()
            .enumerate()
            .map(|(u, row)| {
                let idx = row
                    .iter()
                    .enumerate()
                    .filter(|(_, &v)| v != 0.0)
                    .map(|(i, _)| i)
                    .collect();
                let label = labels.get(u).cloned().unwrap_or_else(|| format!("mu{u}"));
                SpikeUnit::new(label, idx)
            })
            .collect();
        Self::new(sample_rate_hz, m.ncols(), units)
    }
}

/// Rate of agreement between two trains: matched / (matched + missed + extra),
/// with a greedy one-to-one matching inside `±tol` samples.
pub fn rate_of_agreement(estimated: &[usize], truth: &[usize], tol: usize) -> f64 {
    if estimated.is_empty() && truth.is_empty() {
        return 1.0;
    }
    let (mut i, mut j, mut matched) = (0, 0, 0usize);
    while i < estimated.len() && j < truth.len() {
        let (e, t) = (estimated[i], truth[j]);
        if e.abs_diff(t) <= tol {
            matched += 1;
            i += 1;
            j += 1;
        } else if e < t {
            i += 1;
        } else {
            j += 1;
        }
    }
    let total = estimated.len() + truth.len() - matched;
    matched as f64 / total as f64
}
