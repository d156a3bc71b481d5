//! Fit-once, apply-many decomposition: per channel group, channel selection,
//! whitening, FastICA, spike classification, then cleanup and ranking.

use ndarray::{concatenate, s, Array2, Axis};
use serde::{Deserialize, Serialize};

use super::cleanup::{dedup_and_rank, CleanupParams};
use super::extract::{extract_spikes, SpikeClassifier, SpikeParams};
use super::{fastica, fit_whitening, select_channels, SpikeTrainSet, SpikeUnit, UnitQuality, WhiteningTransform};
use crate::synthgen::ChannelGroup;
use crate::{Error, MultiChannelSignal, Result, Units};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecompConfig {
    pub per_subregion: usize,
    pub max_sources: usize,
    pub tol: f64,
    pub max_iter: usize,
    /// Delayed copies appended per channel before whitening; 0 disables.
    pub extension: usize,
    pub spikes: SpikeParams,
    pub cleanup: CleanupParams,
    pub seed: u64,
}

impl Default for DecompConfig {
    fn default() -> Self {
        Self {
            per_subregion: 8,
            max_sources: 30,
            tol: 1e-4,
            max_iter: 100,
            extension: 0,
            spikes: SpikeParams::default(),
            cleanup: CleanupParams::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedUnit {
    pub label: String,
    /// Row of the unmixing matrix in the group's whitened space.
    pub filter: Vec<f64>,
    pub classifier: SpikeClassifier,
    pub quality: UnitQuality,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupModel {
    pub name: String,
    pub channels: Vec<usize>,
    pub whitening: WhiteningTransform,
    /// Ordered by decreasing force correlation.
    pub units: Vec<FittedUnit>,
    pub converged_sources: usize,
    pub requested_sources: usize,
}

impl GroupModel {
    pub fn unmixing(&self) -> Array2<f64> {
        let k = self.whitening.retained;
        let mut w = Array2::zeros((self.units.len(), k));
        for (i, u) in self.units.iter().enumerate() {
            w.row_mut(i).assign(&ndarray::ArrayView1::from(&u.filter));
        }
        w
    }
}

/// Frozen decomposition; applying it to new recordings refits nothing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionModel {
    pub sample_rate_hz: f64,
    pub n_channels: usize,
    pub config: DecompConfig,
    pub groups: Vec<GroupModel>,
}

/// Appends `r` delayed copies of each channel (zero history before t=0).
pub fn extend_channels(x: &Array2<f64>, r: usize) -> Array2<f64> {
    if r == 0 {
        return x.clone();
    }
    let (c, n) = x.dim();
    let mut out = Array2::zeros((c * (r + 1), n));
    for lag in 0..=r {
        out.slice_mut(s![lag * c..(lag + 1) * c, lag..])
            .assign(&x.slice(s![.., ..n - lag.min(n)]));
    }
    out
}

fn concat_time(parts: &[MultiChannelSignal]) -> Result<Array2<f64>> {
    let views: Vec<_> = parts.iter().map(|p| p.data().view()).collect();
    concatenate(Axis(1), &views).map_err(|e| Error::shape(format!("cannot concatenate trials: {e}")))
}

impl DecompositionModel {
    /// Fits on the concatenation of `emg` trials; `force` gives the matching
    /// force trace per trial (any rate) for ranking.
    pub fn fit(
        emg: &[MultiChannelSignal],
        force: &[MultiChannelSignal],
        groups: &[ChannelGroup],
        config: &DecompConfig,
    ) -> Result<Self> {
        let first = emg.first().ok_or_else(|| Error::EmptyDataset("no training trials".into()))?;
        if emg.len() != force.len() {
            return Err(Error::shape(format!("{} EMG trials but {} force traces", emg.len(), force.len())));
        }
        let fs = first.sample_rate_hz();
        for t in emg {
            if t.sample_rate_hz() != fs || t.n_channels() != first.n_channels() {
                return Err(Error::shape("training trials differ in rate or channel count"));
            }
        }
        let force_rate = force[0].sample_rate_hz();
        if force.iter().any(|f| f.sample_rate_hz() != force_rate || f.n_channels() != 1) {
            return Err(Error::shape("force traces must be single-channel at one rate"));
        }
        let all = MultiChannelSignal::new(
            concat_time(emg)?,
            fs,
            first.channel_labels().to_vec(),
            first.units(),
        )?;
        let all_force = MultiChannelSignal::from_array(concat_time(force)?, force_rate, Units::PercentMvf)?;
        let selected = select_channels(&all, groups, config.per_subregion)?;

        let mut fitted = Vec::with_capacity(selected.len());
        let mut candidates_total = 0;
        for (gi, g) in selected.iter().enumerate() {
            let x = extend_channels(&all.select(&g.channels)?.into_data(), config.extension);
            let whitening = fit_whitening(&x)?;
            let white = whitening.apply(&x)?;
            let requested = whitening.retained.min(config.max_sources);
            let ica = fastica(&white, requested, config.tol, config.max_iter, config.seed.wrapping_add(gi as u64))?;
            let sources = ica.sources(&white);

            let mut units = Vec::new();
            let mut classifiers = Vec::new();
            for row in ica.converged_rows() {
                let src = sources.row(row).to_vec();
                let det = extract_spikes(&src, fs, &config.spikes);
                let Some(classifier) = det.classifier else { continue };
                let label = format!("{}_mu{row}", g.name);
                units.push(SpikeUnit {
                    group: Some(g.name.clone()),
                    quality: Some(UnitQuality { silhouette: det.silhouette, force_corr: 0.0 }),
                    ..SpikeUnit::new(label.clone(), det.indices)
                });
                classifiers.push((label, row, classifier));
            }
            candidates_total += units.len();
            let set = SpikeTrainSet::new(fs, all.n_samples(), units)?;
            let kept = match dedup_and_rank(&set, &all_force, &config.cleanup) {
                Ok(k) => k,
                Err(Error::EmptyDecomposition(msg)) => {
                    log::warn!("group {}: {msg}", g.name);
                    SpikeTrainSet::new(fs, all.n_samples(), vec![])?
                }
                Err(e) => return Err(e),
            };
            let units = kept
                .units
                .iter()
                .map(|u| {
                    let (_, row, classifier) =
                        classifiers.iter().find(|c| c.0 == u.label).expect("survivor comes from candidates");
                    FittedUnit {
                        label: u.label.clone(),
                        filter: ica.unmixing.row(*row).to_vec(),
                        classifier: *classifier,
                        quality: u.quality.expect("ranked units carry quality"),
                    }
                })
                .collect();
            fitted.push(GroupModel {
                name: g.name.clone(),
                channels: g.channels.clone(),
                whitening,
                units,
                converged_sources: ica.converged.iter().filter(|&&c| c).count(),
                requested_sources: requested,
            });
        }
        if fitted.iter().all(|g| g.units.is_empty()) {
            return Err(Error::EmptyDecomposition(format!(
                "no unit survived cleanup out of {candidates_total} candidates"
            )));
        }
        Ok(Self {
            sample_rate_hz: fs,
            n_channels: first.n_channels(),
            config: *config,
            groups: fitted,
        })
    }

    pub fn n_units(&self) -> usize {
        self.groups.iter().map(|g| g.units.len()).sum()
    }

    pub fn group_names(&self) -> Vec<String> {
        self.groups.iter().map(|g| g.name.clone()).collect()
    }

    /// Spike trains of every fitted unit in `emg`, group by group.
    pub fn apply(&self, emg: &MultiChannelSignal) -> Result<SpikeTrainSet> {
        if emg.n_channels() != self.n_channels || emg.sample_rate_hz() != self.sample_rate_hz {
            return Err(Error::shape(format!(
                "model expects {} channels at {} Hz, got {} at {} Hz",
                self.n_channels,
                self.sample_rate_hz,
                emg.n_channels(),
                emg.sample_rate_hz()
            )));
        }
        let mut units = Vec::with_capacity(self.n_units());
        for g in &self.groups {
            if g.units.is_empty() {
                continue;
            }
            let x = extend_channels(&emg.select(&g.channels)?.into_data(), self.config.extension);
            let white = g.whitening.apply(&x)?;
            let sources = g.unmixing().dot(&white);
            for (u, fu) in g.units.iter().enumerate() {
                let src = sources.row(u).to_vec();
                units.push(SpikeUnit {
                    group: Some(g.name.clone()),
                    quality: Some(fu.quality),
                    ..SpikeUnit::new(fu.label.clone(), fu.classifier.apply(&src))
                });
            }
        }
        SpikeTrainSet::new(self.sample_rate_hz, emg.n_samples(), units)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn extension_shifts_copies() {
        let x = Array2::from_shape_vec((2, 4), vec![1., 2., 3., 4., 5., 6., 7., 8.]).unwrap();
        let e = extend_channels(&x, 2);
        assert_eq!(e.dim(), (6, 4));
        assert_eq!(e.row(2).to_vec(), vec![0., 1., 2., 3.]);
        assert_eq!(e.row(5).to_vec(), vec![0., 0., 5., 6.]);
        assert_eq!(extend_channels(&x, 0), x);
    }

    #[test]
    fn config_round_trips_through_serde_defaults() {
        let c = DecompConfig::default();
        assert_eq!(c.per_subregion, 8);
        assert_eq!(c.max_sources, 30);
        assert_eq!(c.cleanup.min_silhouette, 0.85);
    }
}
