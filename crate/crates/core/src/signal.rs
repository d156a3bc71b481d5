use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Units {
    Volts,
    Newtons,
    PercentMvf,
    Dimensionless,
}

impl Units {
    pub fn tag(self) -> u8 {
        match self {
            Units::Volts => 0,
            Units::Newtons => 1,
            Units::PercentMvf => 2,
            Units::Dimensionless => 3,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        Some(match tag {
            0 => Units::Volts,
            1 => Units::Newtons,
            2 => Units::PercentMvf,
            3 => Units::Dimensionless,
            _ => return None,
        })
    }
}

/// Uniformly sampled multichannel time series, stored `[channels × samples]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiChannelSignal {
    data: Array2<f64>,
    sample_rate_hz: f64,
    channel_labels: Vec<String>,
    units: Units,
}

impl MultiChannelSignal {
    pub fn new(
        data: Array2<f64>,
        sample_rate_hz: f64,
        channel_labels: Vec<String>,
        units: Units,
    ) -> Result<Self> {
        if !(sample_rate_hz > 0.0 && sample_rate_hz.is_finite()) {
            return Err(Error::param(format!(
                "sample rate must be positive, got {sample_rate_hz}"
            )));
        }
        if channel_labels.len() != data.nrows() {
            return Err(Error::shape(format!(
                "{} channel labels for {} channels",
                channel_labels.len(),
                data.nrows()
            )));
        }
        Ok(Self {
            data,
            sample_rate_hz,
            channel_labels,
            units,
        })
    }

    /// Builds a signal with labels `ch0, ch1, ...`.
    pub fn from_array(data: Array2<f64>, sample_rate_hz: f64, units: Units) -> Result<Self> {
        let labels = (0..data.nrows()).map(|c| format!("ch{c}")).collect();
        Self::new(data, sample_rate_hz, labels, units)
    }

    pub fn from_rows(rows: &[Vec<f64>], sample_rate_hz: f64, units: Units) -> Result<Self> {
        let n = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::shape("channels must all have equal length"));
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        let data = Array2::from_shape_vec((rows.len(), n), flat)
            .map_err(|e| Error::shape(e.to_string()))?;
        Self::from_array(data, sample_rate_hz, units)
    }

    pub fn data(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn into_data(self) -> Array2<f64> {
        self.data
    }

    pub fn channel(&self, c: usize) -> ArrayView1<'_, f64> {
        self.data.row(c)
    }

    pub fn n_channels(&self) -> usize {
        self.data.nrows()
    }

    pub fn n_samples(&self) -> usize {
        self.data.ncols()
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn duration_s(&self) -> f64 {
        self.n_samples() as f64 / self.sample_rate_hz
    }

    pub fn channel_labels(&self) -> &[String] {
        &self.channel_labels
    }

    pub fn units(&self) -> Units {
        self.units
    }

    /// Same metadata, new payload. Channel count must be unchanged.
    pub fn with_data(&self, data: Array2<f64>) -> Result<Self> {
        Self::new(data, self.sample_rate_hz, self.channel_labels.clone(), self.units)
    }

    pub fn with_units(mut self, units: Units) -> Self {
        self.units = units;
        self
    }

    /// Keeps only the listed channels, in the given order.
    pub fn select(&self, channels: &[usize]) -> Result<Self> {
        if let Some(&bad) = channels.iter().find(|&&c| c >= self.n_channels()) {
            return Err(Error::shape(format!(
                "channel {bad} out of range ({} channels)",
                self.n_channels()
            )));
        }
        let data = self.data.select(ndarray::Axis(0), channels);
        let labels = channels.iter().map(|&c| self.channel_labels[c].clone()).collect();
        Self::new(data, self.sample_rate_hz, labels, self.units)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}
