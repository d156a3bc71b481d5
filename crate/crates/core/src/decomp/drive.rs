use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::SpikeTrainSet;
use crate::dsp::resample;
use crate::{Error, MultiChannelSignal, Result, Units};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelShape {
    Hann,
    Rectangular,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DriveKernel {
    pub shape: KernelShape,
    pub length_ms: f64,
}

impl Default for DriveKernel {
    fn default() -> Self {
        Self {
            shape: KernelShape::Hann,
            length_ms: 400.0,
        }
    }
}

impl DriveKernel {
    pub fn len_samples(&self, rate_hz: f64) -> usize {
        ((self.length_ms * rate_hz / 1000.0).round() as usize).max(1)
    }

    /// Taps `h[0..L]`, scaled so a steady train at `r` Hz yields a drive of ~`r`.
    pub fn taps(&self, rate_hz: f64) -> Result<Vec<f64>> {
        if !(self.length_ms > 0.0) {
            return Err(Error::param("drive kernel length must be positive"));
        }
        let len = self.len_samples(rate_hz);
        let raw: Vec<f64> = match self.shape {
            KernelShape::Hann => (0..len)
                .map(|l| (std::f64::consts::PI * (l + 1) as f64 / (len + 1) as f64).sin().powi(2))
                .collect(),
            KernelShape::Rectangular => vec![1.0; len],
        };
        let sum: f64 = raw.iter().sum();
        Ok(raw.into_iter().map(|v| v * rate_hz / sum).collect())
    }
}

/// `d_i[n] = Σ_ℓ h[ℓ] s_i[n − ℓ]` at the spike-train rate, `[units × samples]`.
pub fn drive_at_source_rate(spikes: &SpikeTrainSet, kernel: &DriveKernel) -> Result<Array2<f64>> {
    let h = kernel.taps(spikes.sample_rate_hz)?;
    let n = spikes.n_samples;
    let mut d = Array2::zeros((spikes.len(), n));
    for (u, unit) in spikes.units.iter().enumerate() {
        let mut row = d.row_mut(u);
        for &t in &unit.indices {
            for (l, &hl) in h.iter().enumerate().take(n - t) {
                row[t + l] += hl;
            }
        }
    }
    Ok(d)
}

#[derive(Debug, Clone, PartialEq)]
pub struct NeuralDrive {
    /// One channel per unit, labelled with the unit label.
    pub unit_drives: MultiChannelSignal,
    /// One channel per group, summing the member units.
    pub group_drives: MultiChannelSignal,
    pub kernel: DriveKernel,
}

/// Smoothed per-unit drives resampled to `out_rate_hz`, plus per-group sums.
/// Units whose group is not in `groups` only appear in the per-unit drives.
pub fn neural_drive(
    spikes: &SpikeTrainSet,
    kernel: &DriveKernel,
    out_rate_hz: f64,
    groups: &[String],
) -> Result<NeuralDrive> {
    let native = drive_at_source_rate(spikes, kernel)?;
    let labels: Vec<String> = spikes.units.iter().map(|u| u.label.clone()).collect();
    let unit_sig = MultiChannelSignal::new(native, spikes.sample_rate_hz, labels, Units::Dimensionless)?;
    let unit_drives = if spikes.is_empty() {
        let m = resample(
            &MultiChannelSignal::new(
                Array2::zeros((1, spikes.n_samples)),
                spikes.sample_rate_hz,
                vec!["_".into()],
                Units::Dimensionless,
            )?,
            out_rate_hz,
        )?
        .n_samples();
        MultiChannelSignal::new(Array2::zeros((0, m)), out_rate_hz, vec![], Units::Dimensionless)?
    } else {
        let mut r = resample(&unit_sig, out_rate_hz)?;
        // The FIR can ring slightly negative right after a spike train ends.
        let clipped = r.data().mapv(|v| v.max(0.0));
        r = r.with_data(clipped)?;
        r
    };
    let m = unit_drives.n_samples();
    let mut group_data = Array2::zeros((groups.len(), m));
    for (g, name) in groups.iter().enumerate() {
        for (u, unit) in spikes.units.iter().enumerate() {
            if unit.group.as_deref() == Some(name.as_str()) {
                let row = unit_drives.channel(u).to_owned();
                let mut acc = group_data.row_mut(g);
                acc += &row;
            }
        }
    }
    let group_drives =
        MultiChannelSignal::new(group_data, out_rate_hz, groups.to_vec(), Units::Dimensionless)?;
    Ok(NeuralDrive {
        unit_drives,
        group_drives,
        kernel: *kernel,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decomp::SpikeUnit;

    fn set(trains: Vec<Vec<usize>>, n: usize) -> SpikeTrainSet {
        let units = trains
            .into_iter()
            .enumerate()
            .map(|(i, t)| SpikeUnit { group: Some("flexor".into()), ..SpikeUnit::new(format!("u{i}"), t) })
            .collect();
        SpikeTrainSet::new(2048.0, n, units).unwrap()
    }

    #[test]
    fn empty_train_zero_drive() {
        let d = drive_at_source_rate(&set(vec![vec![]], 5000), &DriveKernel::default()).unwrap();
        assert!(d.iter().all(|&v| v == 0.0));
        let nd = neural_drive(&set(vec![vec![]], 5000), &DriveKernel::default(), 200.0, &["flexor".into()])
            .unwrap();
        assert!(nd.group_drives.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_spike_is_one_hann_lobe() {
        let k = DriveKernel::default();
        let h = k.taps(2048.0).unwrap();
        assert_eq!(h.len(), 819);
        let d = drive_at_source_rate(&set(vec![vec![100]], 2000), &k).unwrap();
        for n in 0..2000 {
            let want = if (100..100 + h.len()).contains(&n) { h[n - 100] } else { 0.0 };
            assert_eq!(d[[0, n]], want);
        }
        // Rising from near zero: a causal lobe, not a centred one.
        assert!(d[[0, 100]] < d[[0, 100 + 409]]);
    }

    #[test]
    fn two_spikes_superpose() {
        let k = DriveKernel::default();
        let h = k.taps(2048.0).unwrap();
        let gap = (0.1f64 * 2048.0).round() as usize;
        let d = drive_at_source_rate(&set(vec![vec![50, 50 + gap]], 3000), &k).unwrap();
        for n in 0..3000 {
            let mut want = 0.0;
            for s in [50, 50 + gap] {
                if n >= s && n - s < h.len() {
                    want += h[n - s];
                }
            }
            assert!((d[[0, n]] - want).abs() < 1e-9);
        }
    }

    #[test]
    fn group_drive_is_sum_of_units() {
        let s = set(vec![vec![100, 900, 1700], vec![400, 1200]], 4096);
        let nd = neural_drive(&s, &DriveKernel::default(), 200.0, &["flexor".into(), "extensor".into()]).unwrap();
        let sum = &nd.unit_drives.channel(0) + &nd.unit_drives.channel(1);
        for (a, b) in nd.group_drives.channel(0).iter().zip(sum.iter()) {
            assert!((a - b).abs() < 1e-9);
        }
        assert!(nd.group_drives.channel(1).iter().all(|&v| v == 0.0));
        assert!(nd.unit_drives.data().iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn steady_rate_gives_rate_sized_drive() {
        let spikes: Vec<usize> = (0..40_960).step_by(128).collect(); // 16 Hz
        let d = drive_at_source_rate(&set(vec![spikes], 40_960), &DriveKernel::default()).unwrap();
        let mid = d[[0, 20_000]];
        assert!((mid - 16.0).abs() < 0.5, "{mid}");
    }
}
