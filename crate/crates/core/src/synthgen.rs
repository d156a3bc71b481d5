//! Synthetic HD-sEMG with known motor-unit discharges and fingertip force.
//!
//! A trapezoidal drive recruits units by threshold; each active unit fires
//! with a linearly rate-coded, jittered discharge pattern. EMG is the sum of
//! each unit's spike train convolved with its per-channel MUAP template plus
//! white Gaussian noise, and force is the sum of twitch responses.

use ndarray::{Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::decomp::{SpikeTrainSet, SpikeUnit};
use crate::{Error, MultiChannelSignal, Result, Units};

pub const EMG_RATE_HZ: f64 = 2048.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotorUnitPool {
    pub n_units: usize,
    /// Fraction of full drive at which each unit is recruited.
    pub recruitment_thresholds: Vec<f64>,
    pub min_rate_hz: f64,
    pub peak_rate_hz: f64,
    pub twitch_amplitudes: Vec<f64>,
    pub twitch_time_constants_ms: Vec<f64>,
    /// Coefficient of variation of the inter-spike interval.
    pub isi_cv: f64,
}

impl MotorUnitPool {
    pub fn validate(&self) -> Result<()> {
        let n = self.n_units;
        if self.recruitment_thresholds.len() != n
            || self.twitch_amplitudes.len() != n
            || self.twitch_time_constants_ms.len() != n
        {
            return Err(Error::param("per-unit pool vectors must have n_units entries"));
        }
        if self.recruitment_thresholds.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::param("recruitment thresholds must be strictly increasing"));
        }
        if self.recruitment_thresholds.iter().any(|&t| !(0.0..1.0).contains(&t)) {
            return Err(Error::param("recruitment thresholds must lie in [0, 1)"));
        }
        if !(self.min_rate_hz > 0.0 && self.min_rate_hz < self.peak_rate_hz) {
            return Err(Error::param("need 0 < min_rate_hz < peak_rate_hz"));
        }
        if self.twitch_amplitudes.iter().any(|&a| !(a > 0.0))
            || self.twitch_time_constants_ms.iter().any(|&t| !(t > 0.0))
        {
            return Err(Error::param("twitch amplitudes and time constants must be positive"));
        }
        if !(0.0..=0.5).contains(&self.isi_cv) {
            return Err(Error::param("isi_cv must lie in [0, 0.5]"));
        }
        Ok(())
    }

    /// Discharge rate at `drive`, or `None` below threshold.
    fn rate_at(&self, unit: usize, drive: f64) -> Option<f64> {
        let thr = self.recruitment_thresholds[unit];
        if drive <= thr {
            return None;
        }
        let frac = ((drive - thr) / (1.0 - thr)).clamp(0.0, 1.0);
        Some(self.min_rate_hz + (self.peak_rate_hz - self.min_rate_hz) * frac)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelGroup {
    pub name: String,
    pub channels: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixingModel {
    /// `[units × channels × template_samples]`; the spike lands on the
    /// middle template sample.
    pub muap_templates: Array3<f64>,
    pub noise_std: f64,
    pub channel_groups: Vec<ChannelGroup>,
}

impl MixingModel {
    pub fn n_channels(&self) -> usize {
        self.muap_templates.shape()[1]
    }

    pub fn template_len(&self) -> usize {
        self.muap_templates.shape()[2]
    }

    pub fn validate(&self, n_units: usize) -> Result<()> {
        if self.muap_templates.shape()[0] != n_units {
            return Err(Error::param(format!(
                "{} templates for {n_units} units",
                self.muap_templates.shape()[0]
            )));
        }
        if self.template_len() == 0 || !self.muap_templates.iter().all(|v| v.is_finite()) {
            return Err(Error::param("templates must be non-empty and finite"));
        }
        if !(self.noise_std >= 0.0) {
            return Err(Error::param("noise_std must be non-negative"));
        }
        let c = self.n_channels();
        if self.channel_groups.iter().flat_map(|g| &g.channels).any(|&i| i >= c) {
            return Err(Error::param("channel group refers to a missing channel"));
        }
        Ok(())
    }

    pub fn channel_labels(&self) -> Vec<String> {
        let mut labels: Vec<String> = (0..self.n_channels()).map(|c| format!("ch{c}")).collect();
        for g in &self.channel_groups {
            for (k, &c) in g.channels.iter().enumerate() {
                labels[c] = format!("{}{k}", g.name);
            }
        }
        labels
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Trapezoid {
    pub ramp_s: f64,
    pub plateau_s: f64,
    pub plateau_level_frac_mvf: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialSpec {
    pub duration_s: f64,
    pub target_profile: Trapezoid,
    pub seed: u64,
}

impl Default for TrialSpec {
    fn default() -> Self {
        Self {
            duration_s: 30.0,
            target_profile: Trapezoid {
                ramp_s: 5.0,
                plateau_s: 15.0,
                plateau_level_frac_mvf: 0.5,
            },
            seed: 0,
        }
    }
}

impl TrialSpec {
    pub fn validate(&self) -> Result<()> {
        let p = &self.target_profile;
        if !(p.plateau_level_frac_mvf > 0.0 && p.plateau_level_frac_mvf <= 1.0) {
            return Err(Error::param("plateau level must lie in (0, 1]"));
        }
        if !(p.ramp_s >= 0.0 && p.plateau_s > 0.0) {
            return Err(Error::param("ramp must be >= 0 and plateau > 0"));
        }
        if 2.0 * p.ramp_s + p.plateau_s > self.duration_s {
            return Err(Error::param("ramps plus plateau do not fit in the trial"));
        }
        Ok(())
    }

    pub fn n_samples(&self) -> usize {
        (self.duration_s * EMG_RATE_HZ).round() as usize
    }

    /// Sample range `[start, end)` of the plateau.
    pub fn plateau_range(&self) -> (usize, usize) {
        let p = &self.target_profile;
        let rest = (self.duration_s - 2.0 * p.ramp_s - p.plateau_s) / 2.0;
        let start = ((rest + p.ramp_s) * EMG_RATE_HZ).round() as usize;
        let end = ((rest + p.ramp_s + p.plateau_s) * EMG_RATE_HZ).round() as usize;
        (start, end.min(self.n_samples()))
    }

    /// Trapezoidal drive, centred in the trial with equal rest at both ends.
    pub fn drive(&self) -> Vec<f64> {
        let p = &self.target_profile;
        let rest = (self.duration_s - 2.0 * p.ramp_s - p.plateau_s) / 2.0;
        let up = rest + p.ramp_s;
        let down = up + p.plateau_s;
        let end = down + p.ramp_s;
        (0..self.n_samples())
            .map(|i| {
                let t = i as f64 / EMG_RATE_HZ;
                let shape = if t < rest || t >= end {
                    0.0
                } else if t < up {
                    (t - rest) / p.ramp_s
                } else if t < down {
                    1.0
                } else {
                    (end - t) / p.ramp_s
                };
                shape * p.plateau_level_frac_mvf
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct Trial {
    pub emg: MultiChannelSignal,
    pub force: MultiChannelSignal,
    pub truth_spikes: SpikeTrainSet,
}

/// Per-unit RNG stream; independent of every other unit and of the noise.
fn unit_rng(seed: u64, unit: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(unit as u64 + 1);
    rng
}

/// Discharge times for every unit under `drive`.
///
/// Each unit integrates its instantaneous rate into a phase and fires each
/// time the phase crosses the next jittered ISI boundary. The boundaries are
/// drawn from the unit's own stream, so a pointwise larger drive can only
/// move spikes earlier and never removes one.
pub fn discharge_times(pool: &MotorUnitPool, drive: &[f64], seed: u64) -> Result<Vec<Vec<usize>>> {
    pool.validate()?;
    let cv = pool.isi_cv;
    let (lo, hi) = ((1.0 - 3.0 * cv).max(0.1), 1.0 + 3.0 * cv);
    let mut trains = Vec::with_capacity(pool.n_units);
    for u in 0..pool.n_units {
        let mut rng = unit_rng(seed, u);
        let next_isi = |rng: &mut ChaCha8Rng| {
            let z: f64 = StandardNormal.sample(rng);
            (1.0 + cv * z).clamp(lo, hi)
        };
        // Random initial phase so units do not start synchronized.
        let mut boundary = rng.random::<f64>() * next_isi(&mut rng);
        let mut phase = 0.0;
        let mut spikes = Vec::new();
        for (n, &d) in drive.iter().enumerate() {
            if let Some(rate) = pool.rate_at(u, d) {
                phase += rate / EMG_RATE_HZ;
                if phase >= boundary {
                    spikes.push(n);
                    boundary += next_isi(&mut rng);
                    // A single sample never carries two discharges.
                    while boundary <= phase {
                        boundary += next_isi(&mut rng);
                    }
                }
            }
        }
        trains.push(spikes);
    }
    Ok(trains)
}

/// Noise-free EMG: every spike train convolved with its unit's templates.
pub fn render_emg(mix: &MixingModel, trains: &[Vec<usize>], n_samples: usize) -> Array2<f64> {
    let c = mix.n_channels();
    let len = mix.template_len();
    let center = len / 2;
    let mut emg = Array2::zeros((c, n_samples));
    for (u, spikes) in trains.iter().enumerate() {
        for &t in spikes {
            // Template sample j lands at t - center + j.
            let j0 = center.saturating_sub(t);
            let j1 = len.min(n_samples + center - t);
            for ch in 0..c {
                let tpl = mix.muap_templates.slice(ndarray::s![u, ch, ..]);
                let mut row = emg.row_mut(ch);
                for j in j0..j1 {
                    row[t + j - center] += tpl[j];
                }
            }
        }
    }
    emg
}

/// Unit-peak twitch `(t/τ)·exp(1 − t/τ)`, truncated at 10 τ.
fn twitch_kernel(tau_ms: f64) -> Vec<f64> {
    let tau = tau_ms * EMG_RATE_HZ / 1000.0;
    let len = (10.0 * tau).ceil() as usize;
    (0..len)
        .map(|i| {
            let x = i as f64 / tau;
            x * (1.0 - x).exp()
        })
        .collect()
}

/// Raw (unnormalized) force from the discharge trains.
pub fn render_force(pool: &MotorUnitPool, trains: &[Vec<usize>], n_samples: usize) -> Vec<f64> {
    let mut force = vec![0.0; n_samples];
    for (u, spikes) in trains.iter().enumerate() {
        let kernel = twitch_kernel(pool.twitch_time_constants_ms[u]);
        let amp = pool.twitch_amplitudes[u];
        for &t in spikes {
            for (k, &h) in kernel.iter().enumerate().take(n_samples - t) {
                force[t + k] += amp * h;
            }
        }
    }
    force
}

/// Generates one trial under the spec's trapezoidal drive.
pub fn generate_trial(pool: &MotorUnitPool, mix: &MixingModel, spec: &TrialSpec) -> Result<Trial> {
    spec.validate()?;
    let drive = spec.drive();
    let level = spec.target_profile.plateau_level_frac_mvf;
    generate_trial_with_drive(pool, mix, &drive, spec.plateau_range(), level, spec.seed)
}

/// Generates a trial under an arbitrary drive. Force is scaled so its mean
/// over `plateau` equals `level·100` %MVF (left at zero if nothing fires).
pub fn generate_trial_with_drive(
    pool: &MotorUnitPool,
    mix: &MixingModel,
    drive: &[f64],
    plateau: (usize, usize),
    level: f64,
    seed: u64,
) -> Result<Trial> {
    pool.validate()?;
    mix.validate(pool.n_units)?;
    let n = drive.len();
    let trains = discharge_times(pool, drive, seed)?;

    let mut emg = render_emg(mix, &trains, n);
    if mix.noise_std > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(0);
        for v in emg.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *v += mix.noise_std * z;
        }
    }

    let mut force = render_force(pool, &trains, n);
    let (p0, p1) = (plateau.0.min(n), plateau.1.min(n));
    let plateau_mean = if p1 > p0 {
        force[p0..p1].iter().sum::<f64>() / (p1 - p0) as f64
    } else {
        0.0
    };
    if plateau_mean > 0.0 {
        let scale = level * 100.0 / plateau_mean;
        force.iter_mut().for_each(|v| *v *= scale);
    }

    let units = trains
        .into_iter()
        .enumerate()
        .map(|(u, idx)| SpikeUnit::new(format!("mu{u}"), idx))
        .collect();
    let emg = MultiChannelSignal::new(emg, EMG_RATE_HZ, mix.channel_labels(), Units::Volts)?;
    let force = MultiChannelSignal::new(
        Array2::from_shape_vec((1, n), force).expect("force length"),
        EMG_RATE_HZ,
        vec!["force".into()],
        Units::PercentMvf,
    )?;
    Ok(Trial {
        emg,
        force,
        truth_spikes: SpikeTrainSet::new(EMG_RATE_HZ, n, units)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioName {
    Easy,
    Medium,
    Hard,
}

impl std::str::FromStr for ScenarioName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "easy" => Ok(Self::Easy),
            "medium" => Ok(Self::Medium),
            "hard" => Ok(Self::Hard),
            other => Err(Error::param(format!("unknown scenario '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: ScenarioName,
    pub pool: MotorUnitPool,
    pub mix: MixingModel,
    pub trials: Vec<TrialSpec>,
    pub snr_db: f64,
}

struct Layout {
    units: usize,
    groups: [(&'static str, usize, usize); 2],
    snr_db: f64,
    overlap: bool,
}

/// Electrode pitch of the simulated grids, mm.
const PITCH_MM: f64 = 4.0;
pub const TRIALS_PER_SCENARIO: usize = 10;

/// Desk-scale stand-ins for the 10-trial protocol.
///
/// * `easy`: 8 units, 64 channels (flexor 40 + extensor 24), 20 dB SNR
/// * `medium`: 20 units, 192 channels (flexor 128 + extensor 64), 10 dB SNR
/// * `hard`: as medium, units placed in near-coincident pairs, 5 dB SNR
pub fn default_scenario(name: ScenarioName, seed: u64) -> Result<Scenario> {
    let layout = match name {
        ScenarioName::Easy => Layout {
            units: 8,
            groups: [("flexor", 5, 8), ("extensor", 3, 8)],
            snr_db: 20.0,
            overlap: false,
        },
        ScenarioName::Medium => Layout {
            units: 20,
            groups: [("flexor", 8, 16), ("extensor", 8, 8)],
            snr_db: 10.0,
            overlap: false,
        },
        ScenarioName::Hard => Layout {
            units: 20,
            groups: [("flexor", 8, 16), ("extensor", 8, 8)],
            snr_db: 5.0,
            overlap: true,
        },
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_5eed);
    let n = layout.units;

    let pool = MotorUnitPool {
        n_units: n,
        recruitment_thresholds: (0..n).map(|u| 0.02 + 0.30 * u as f64 / n as f64).collect(),
        min_rate_hz: 8.0,
        peak_rate_hz: 25.0,
        twitch_amplitudes: (0..n).map(|u| 1.0 + 4.0 * u as f64 / n as f64).collect(),
        twitch_time_constants_ms: (0..n).map(|u| 80.0 - 40.0 * u as f64 / n as f64).collect(),
        isi_cv: 0.1,
    };

    // Channel geometry: one rows×cols grid per group, side by side.
    let mut groups = Vec::new();
    let mut positions = Vec::new();
    let mut next = 0;
    for (g, &(gname, rows, cols)) in layout.groups.iter().enumerate() {
        let channels: Vec<usize> = (next..next + rows * cols).collect();
        next += rows * cols;
        for r in 0..rows {
            for c in 0..cols {
                positions.push((g, r as f64 * PITCH_MM, c as f64 * PITCH_MM));
            }
        }
        groups.push(ChannelGroup {
            name: gname.into(),
            channels,
        });
    }
    let n_channels = next;

    // Every third unit sits under the extensor array.
    let unit_group: Vec<usize> = (0..n).map(|u| usize::from(u % 3 == 2)).collect();
    let mut unit_pos = Vec::with_capacity(n);
    for u in 0..n {
        let (_, rows, cols) = layout.groups[unit_group[u]];
        let (w, h) = ((rows - 1) as f64 * PITCH_MM, (cols - 1) as f64 * PITCH_MM);
        let pos = if layout.overlap && u >= 2 && unit_group[u] == unit_group[u - 2] && u % 2 == 1 {
            // Shadow the unit two positions back (same group), about 1 mm off.
            let (x, y, d): (f64, f64, f64) = unit_pos[u - 2];
            (x + rng.random_range(-1.0..1.0), y + rng.random_range(-1.0..1.0), d)
        } else {
            (
                rng.random_range(0.0..=w),
                rng.random_range(0.0..=h),
                rng.random_range(4.0..10.0),
            )
        };
        unit_pos.push(pos);
    }

    // Hermite-Rodriguez MUAP shapes: mix of first and second order functions.
    let template_len = 41;
    let center = template_len / 2;
    let mut templates = Array3::zeros((n, n_channels, template_len));
    for u in 0..n {
        let lambda_ms: f64 = rng.random_range(1.0..2.0);
        let psi: f64 = rng.random_range(0.0..std::f64::consts::FRAC_PI_3);
        let amp = 1.0 + 2.0 * u as f64 / n as f64;
        let lambda = lambda_ms * EMG_RATE_HZ / 1000.0;
        let shape: Vec<f64> = (0..template_len)
            .map(|j| {
                let x = (j as f64 - center as f64) / lambda;
                let g = (-x * x).exp();
                psi.cos() * x * g * 2.0 + psi.sin() * (1.0 - 2.0 * x * x) * g
            })
            .collect();
        let peak = shape.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let (ux, uy, depth) = unit_pos[u];
        for (ch, &(g, cx, cy)) in positions.iter().enumerate() {
            if g != unit_group[u] {
                continue;
            }
            let r2 = (cx - ux).powi(2) + (cy - uy).powi(2);
            let gain = amp * (depth / (r2 + depth * depth).sqrt()).powi(3);
            for j in 0..template_len {
                templates[[u, ch, j]] = gain * shape[j] / peak;
            }
        }
    }

    let trials: Vec<TrialSpec> = (0..TRIALS_PER_SCENARIO)
        .map(|i| TrialSpec {
            duration_s: 30.0,
            target_profile: Trapezoid {
                ramp_s: rng.random_range(4.0..6.0),
                plateau_s: rng.random_range(12.0..16.0),
                plateau_level_frac_mvf: rng.random_range(0.4..0.6),
            },
            seed: seed.wrapping_mul(1000).wrapping_add(i as u64 + 1),
        })
        .collect();

    let mut mix = MixingModel {
        muap_templates: templates,
        noise_std: 0.0,
        channel_groups: groups,
    };
    mix.noise_std = calibrate_noise(&pool, &mix, &trials[0], layout.snr_db)?;

    Ok(Scenario {
        name,
        pool,
        mix,
        trials,
        snr_db: layout.snr_db,
    })
}

/// Noise std giving `snr_db` = 20·log10(RMS(noise-free EMG) / RMS(noise))
/// over the plateau of `reference`.
pub fn calibrate_noise(
    pool: &MotorUnitPool,
    mix: &MixingModel,
    reference: &TrialSpec,
    snr_db: f64,
) -> Result<f64> {
    let trains = discharge_times(pool, &reference.drive(), reference.seed)?;
    let emg = render_emg(mix, &trains, reference.n_samples());
    let (p0, p1) = reference.plateau_range();
    let plateau = emg.slice(ndarray::s![.., p0..p1]);
    let rms = (plateau.iter().map(|v| v * v).sum::<f64>() / plateau.len() as f64).sqrt();
    Ok(rms / 10f64.powf(snr_db / 20.0))
}
