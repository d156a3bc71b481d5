//! The decoding pipeline as file-to-file stages.
//!
//! Each stage reads only its input directories and the config, and writes
//! everything the next stage needs. Per-trial work runs on a bounded rayon
//! pool; fitting (ICA, training) stays on the calling thread.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use mudec_core::decomp::{neural_drive, rate_of_agreement, DecompositionModel, SpikeTrainSet};
use mudec_core::dsp::{
    butterworth_filter, make_windows, notch_filter, resample, zscore_fit, FeatureStats, FilterKind, NormStats,
    WindowSpec, WindowedDataset,
};
use mudec_core::models::{layer_seed, Model, ModelConfig};
use mudec_core::synthgen::{default_scenario, generate_trial, ChannelGroup, ScenarioName};
use mudec_core::tensor::Real;
use mudec_core::train::{evaluate, fit, split_trials, EvalReport, FitReport, TrialSplit, TrialWindows};
use mudec_core::{MultiChannelSignal, Units};
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{Checkpoint, Precision};
use crate::config::{FeatureMode, PipelineConfig};
use crate::error::{CliError, Result};
use crate::{csvio, mdc};

pub const MANIFEST: &str = "manifest.json";
pub const SPLIT: &str = "split.json";
pub const DECOMPOSITION: &str = "decomposition.json";
pub const DECOMP_REPORT: &str = "decomposition_report.txt";
pub const DATASET: &str = "dataset.json";
pub const CHECKPOINT: &str = "checkpoint.json";
pub const TRAIN_REPORT: &str = "train_report.toml";
pub const METRICS_TXT: &str = "metrics.txt";
pub const METRICS_CSV: &str = "metrics.csv";
pub const TRACES: &str = "traces";

/// Spike matching tolerance for the rate of agreement, ms.
pub const ROA_TOLERANCE_MS: f64 = 2.5;
/// A unit counts as recovered above this rate of agreement.
pub const ROA_RECOVERED: f64 = 0.9;

pub(crate) fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("serializable");
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub(crate) fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::format(path, e.to_string()))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn pool(jobs: usize) -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .expect("thread pool")
}

fn trial_name(i: usize) -> String {
    format!("trial_{i:02}")
}

// ---------------------------------------------------------------- data

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DataSource {
    Synthetic { scenario: ScenarioName, seed: u64, snr_db: f64 },
    External,
}

/// One recorded (or simulated) trial. Paths are relative to the manifest;
/// `.csv` files are imported, anything else is read as MDC1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialEntry {
    pub name: String,
    pub emg: String,
    pub force: String,
    #[serde(default)]
    pub truth: Option<String>,
    /// Stored CRC of each MDC1 file, keyed by file name.
    #[serde(default)]
    pub crc: BTreeMap<String, u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataManifest {
    pub source: DataSource,
    pub channel_groups: Vec<ChannelGroup>,
    pub trials: Vec<TrialEntry>,
}

impl DataManifest {
    pub fn load(dir: &Path) -> Result<Self> {
        let m: Self = read_json(&dir.join(MANIFEST))?;
        if m.trials.is_empty() {
            return Err(CliError::format(dir.join(MANIFEST), "manifest lists no trials"));
        }
        Ok(m)
    }
}

fn read_any(path: &Path, units: Units) -> Result<MultiChannelSignal> {
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
        csvio::read_signal(path, units)
    } else {
        mdc::read(path)
    }
}

fn load_emg(dir: &Path, t: &TrialEntry) -> Result<MultiChannelSignal> {
    read_any(&dir.join(&t.emg), Units::Volts)
}

fn load_force(dir: &Path, t: &TrialEntry) -> Result<MultiChannelSignal> {
    let f = read_any(&dir.join(&t.force), Units::PercentMvf)?;
    if f.n_channels() != 1 {
        return Err(CliError::format(dir.join(&t.force), format!("force has {} channels, expected 1", f.n_channels())));
    }
    Ok(f)
}

fn load_truth(dir: &Path, t: &TrialEntry) -> Result<Option<SpikeTrainSet>> {
    let Some(file) = &t.truth else { return Ok(None) };
    let sig = mdc::read(&dir.join(file))?;
    Ok(Some(SpikeTrainSet::from_binary_matrix(sig.data(), sig.sample_rate_hz(), sig.channel_labels())?))
}

/// Writes the configured synthetic scenario: EMG, force and ground-truth
/// spikes for every trial, plus the manifest.
pub fn synth(cfg: &PipelineConfig, out: &Path, jobs: usize) -> Result<DataManifest> {
    cfg.validate()?;
    create_dir(out)?;
    let mut sc = default_scenario(cfg.data.scenario, cfg.seed)?;
    if let Some(d) = cfg.data.trial_duration_s {
        for t in &mut sc.trials {
            let k = d / t.duration_s;
            t.duration_s = d;
            t.target_profile.ramp_s *= k;
            t.target_profile.plateau_s *= k;
        }
    }
    let entries = pool(jobs).install(|| {
        sc.trials
            .par_iter()
            .enumerate()
            .map(|(i, spec)| -> Result<TrialEntry> {
                let name = trial_name(i);
                let trial = generate_trial(&sc.pool, &sc.mix, spec)?;
                let labels: Vec<String> = trial.truth_spikes.units.iter().map(|u| u.label.clone()).collect();
                let truth = MultiChannelSignal::new(
                    trial.truth_spikes.binary_matrix(),
                    trial.truth_spikes.sample_rate_hz,
                    labels,
                    Units::Dimensionless,
                )?;
                let mut crc = BTreeMap::new();
                for (suffix, sig) in [("emg", &trial.emg), ("force", &trial.force), ("truth", &truth)] {
                    let file = format!("{name}_{suffix}.mdc");
                    crc.insert(file.clone(), mdc::write(&out.join(&file), sig)?);
                }
                Ok(TrialEntry {
                    emg: format!("{name}_emg.mdc"),
                    force: format!("{name}_force.mdc"),
                    truth: Some(format!("{name}_truth.mdc")),
                    name,
                    crc,
                })
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let manifest = DataManifest {
        source: DataSource::Synthetic { scenario: cfg.data.scenario, seed: cfg.seed, snr_db: sc.snr_db },
        channel_groups: sc.mix.channel_groups.clone(),
        trials: entries,
    };
    write_json(&out.join(MANIFEST), &manifest)?;
    cfg.save(&out.join("config.toml"))?;
    log::info!("synth: {} trials written to {}", manifest.trials.len(), out.display());
    Ok(manifest)
}

// ---------------------------------------------------------- preprocessing

pub fn preprocess_emg(cfg: &PipelineConfig, emg: &MultiChannelSignal) -> Result<MultiChannelSignal> {
    let d = &cfg.dsp;
    let x = notch_filter(emg, d.notch_hz, d.notch_q)?;
    Ok(butterworth_filter(&x, FilterKind::Highpass, d.highpass_order, d.highpass_hz)?)
}

pub fn preprocess_force(cfg: &PipelineConfig, force: &MultiChannelSignal) -> Result<MultiChannelSignal> {
    let d = &cfg.dsp;
    Ok(butterworth_filter(force, FilterKind::Lowpass, d.force_lowpass_order, d.force_lowpass_hz)?)
}

// ---------------------------------------------------------- decomposition

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitReport {
    pub label: String,
    pub group: String,
    pub silhouette: f64,
    pub force_corr: f64,
    /// Mean spikes per trial.
    pub mean_spikes: f64,
    /// Best-matching ground-truth unit and its mean rate of agreement over
    /// the training and the held-out trials.
    pub truth_unit: Option<String>,
    pub roa_train: Option<f64>,
    pub roa_heldout: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompReport {
    pub train_trials: Vec<String>,
    pub groups: Vec<GroupReport>,
    pub units: Vec<UnitReport>,
    /// Whitening and ICA were fitted on the training trials only and applied
    /// unchanged to every trial.
    pub frozen_transforms: bool,
    pub truth_available: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupReport {
    pub name: String,
    pub channels_selected: usize,
    pub sources_converged: usize,
    pub sources_requested: usize,
    pub units: usize,
}

impl DecompReport {
    /// Distinct ground-truth units matched with held-out RoA above `threshold`.
    pub fn recovered_units(&self, threshold: f64) -> usize {
        let mut hit: Vec<&str> = self
            .units
            .iter()
            .filter(|u| u.roa_heldout.is_some_and(|r| r > threshold))
            .filter_map(|u| u.truth_unit.as_deref())
            .collect();
        hit.sort_unstable();
        hit.dedup();
        hit.len()
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!("training trials: {}\n", self.train_trials.join(", ")));
        s.push_str(&format!("frozen transforms: {}\n", if self.frozen_transforms { "yes" } else { "no" }));
        for g in &self.groups {
            s.push_str(&format!(
                "group {}: {} channels, {}/{} sources converged, {} units\n",
                g.name, g.channels_selected, g.sources_converged, g.sources_requested, g.units
            ));
        }
        s.push('\n');
        let roa = self.truth_available;
        s.push_str(&format!("{:<16} {:<10} {:>10} {:>10} {:>8}", "unit", "group", "silhouette", "force_r", "spikes"));
        if roa {
            s.push_str(&format!(" {:>8} {:>10} {:>12}", "truth", "roa_train", "roa_heldout"));
        }
        s.push('\n');
        for u in &self.units {
            s.push_str(&format!(
                "{:<16} {:<10} {:>10.3} {:>10.3} {:>8.1}",
                u.label, u.group, u.silhouette, u.force_corr, u.mean_spikes
            ));
            if roa {
                let pct = |v: Option<f64>| v.map_or("-".to_string(), |r| format!("{:.1}%", 100.0 * r));
                s.push_str(&format!(
                    " {:>8} {:>10} {:>12}",
                    u.truth_unit.as_deref().unwrap_or("-"),
                    pct(u.roa_train),
                    pct(u.roa_heldout)
                ));
            }
            s.push('\n');
        }
        if roa {
            s.push_str(&format!(
                "\nrecovered (held-out RoA > {:.0}%): {}\n",
                100.0 * ROA_RECOVERED,
                self.recovered_units(ROA_RECOVERED)
            ));
        }
        s
    }
}

struct TrialDecomp {
    spikes: SpikeTrainSet,
    truth: Option<SpikeTrainSet>,
}

/// Fits the decomposition on the training trials, applies it frozen to all
/// trials and writes per-trial neural drives, spikes and a quality report.
pub fn decompose(cfg: &PipelineConfig, data_dir: &Path, out: &Path, jobs: usize) -> Result<DecompReport> {
    cfg.validate()?;
    let manifest = DataManifest::load(data_dir)?;
    create_dir(out)?;
    let split = split_trials(manifest.trials.len(), cfg.split, cfg.seed)?;
    write_json(&out.join(SPLIT), &split)?;
    let train_names: Vec<String> = split.train.iter().map(|&i| manifest.trials[i].name.clone()).collect();

    let mut emg = Vec::with_capacity(split.train.len());
    let mut force = Vec::with_capacity(split.train.len());
    for &i in &split.train {
        let t = &manifest.trials[i];
        emg.push(preprocess_emg(cfg, &load_emg(data_dir, t)?)?);
        force.push(preprocess_force(cfg, &load_force(data_dir, t)?)?);
    }
    let fitted = DecompositionModel::fit(&emg, &force, &manifest.channel_groups, &cfg.decomp.params);
    drop((emg, force));
    let model = match fitted {
        Ok(m) => m,
        Err(e) => {
            let text = format!("training trials: {}\ndecomposition failed: {e}\n", train_names.join(", "));
            write_text(&out.join(DECOMP_REPORT), &text)?;
            return Err(e.into());
        }
    };
    write_json(&out.join(DECOMPOSITION), &model)?;

    let groups = model.group_names();
    let kernel = cfg.decomp.params.cleanup.kernel;
    let rate = cfg.dsp.feature_rate_hz;
    let per_trial = pool(jobs).install(|| {
        manifest
            .trials
            .par_iter()
            .map(|t| -> Result<TrialDecomp> {
                let x = preprocess_emg(cfg, &load_emg(data_dir, t)?)?;
                let spikes = model.apply(&x)?;
                let drive = neural_drive(&spikes, &kernel, rate, &groups)?;
                let features = match cfg.decomp.feature_mode {
                    FeatureMode::PerGroup => drive.group_drives,
                    FeatureMode::PerMu => drive.unit_drives,
                };
                mdc::write(&out.join(format!("{}_drive.mdc", t.name)), &features)?;
                write_json(&out.join(format!("{}_spikes.json", t.name)), &spikes)?;
                Ok(TrialDecomp { spikes, truth: load_truth(data_dir, t)? })
            })
            .collect::<Result<Vec<_>>>()
    })?;

    let report = build_report(&model, &split, &manifest, &per_trial, train_names);
    write_text(&out.join(DECOMP_REPORT), &report.render())?;
    write_json(&out.join("decomposition_report.json"), &report)?;
    cfg.save(&out.join("config.toml"))?;
    log::info!("decompose: {} units retained", model.n_units());
    Ok(report)
}

fn build_report(
    model: &DecompositionModel,
    split: &TrialSplit,
    manifest: &DataManifest,
    trials: &[TrialDecomp],
    train_names: Vec<String>,
) -> DecompReport {
    let truth_available = trials.iter().all(|t| t.truth.is_some());
    let tol = (ROA_TOLERANCE_MS * model.sample_rate_hz / 1000.0).round() as usize;
    let heldout: Vec<usize> = split.val.iter().chain(&split.test).copied().collect();
    let mean = |idx: &[usize], f: &dyn Fn(usize) -> f64| -> Option<f64> {
        (!idx.is_empty()).then(|| idx.iter().map(|&i| f(i)).sum::<f64>() / idx.len() as f64)
    };

    let mut units = Vec::new();
    let mut k = 0;
    for g in &model.groups {
        for fu in &g.units {
            let est = |i: usize| &trials[i].spikes.units[k].indices;
            let mean_spikes = trials.iter().map(|t| t.spikes.units[k].indices.len() as f64).sum::<f64>()
                / trials.len().max(1) as f64;
            let (mut truth_unit, mut roa_train, mut roa_heldout) = (None, None, None);
            if truth_available {
                let n_truth = trials[0].truth.as_ref().map_or(0, |t| t.units.len());
                let all: Vec<usize> = (0..trials.len()).collect();
                let roa = |i: usize, j: usize| {
                    let truth = trials[i].truth.as_ref().expect("truth checked");
                    truth.units.get(j).map_or(0.0, |u| rate_of_agreement(est(i), &u.indices, tol))
                };
                // One truth unit per estimated unit, chosen over every trial.
                let best = (0..n_truth)
                    .map(|j| (j, mean(&all, &|i| roa(i, j)).unwrap_or(0.0)))
                    .fold(None, |acc: Option<(usize, f64)>, c| match acc {
                        Some(a) if a.1 >= c.1 => Some(a),
                        _ => Some(c),
                    });
                if let Some((j, _)) = best {
                    truth_unit = trials[0].truth.as_ref().map(|t| t.units[j].label.clone());
                    roa_train = mean(&split.train, &|i| roa(i, j));
                    roa_heldout = mean(&heldout, &|i| roa(i, j));
                }
            }
            let q = fu.quality;
            units.push(UnitReport {
                label: fu.label.clone(),
                group: g.name.clone(),
                silhouette: q.silhouette,
                force_corr: q.force_corr,
                mean_spikes,
                truth_unit,
                roa_train,
                roa_heldout,
            });
            k += 1;
        }
    }
    let _ = manifest;
    DecompReport {
        train_trials: train_names,
        groups: model
            .groups
            .iter()
            .map(|g| GroupReport {
                name: g.name.clone(),
                channels_selected: g.channels.len(),
                sources_converged: g.converged_sources,
                sources_requested: g.requested_sources,
                units: g.units.len(),
            })
            .collect(),
        units,
        frozen_transforms: true,
        truth_available,
    }
}

// ---------------------------------------------------------------- dataset

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Train,
    Val,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetTrial {
    pub name: String,
    pub role: Role,
    /// Raw neural-drive features at the feature rate.
    pub features: String,
    /// Conditioned force in %MVF at the feature rate.
    pub target: String,
}

/// Aligned per-trial features and targets plus the training statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub feature_rate_hz: f64,
    pub feature_labels: Vec<String>,
    pub window: WindowSpec,
    pub norm_stats: NormStats,
    pub target_stats: FeatureStats,
    pub split: TrialSplit,
    pub trials: Vec<DatasetTrial>,
}

impl DatasetManifest {
    pub fn load(dir: &Path) -> Result<Self> {
        read_json(&dir.join(DATASET))
    }

    pub fn n_features(&self) -> usize {
        self.feature_labels.len()
    }

    /// Standardized windows of one trial.
    pub fn windows(&self, dir: &Path, trial: &DatasetTrial) -> Result<WindowedDataset> {
        let mut d = raw_windows(dir, trial, &self.window)?;
        d.standardize(&self.norm_stats, self.target_stats)?;
        Ok(d)
    }

    pub fn role(&self, role: Role) -> impl Iterator<Item = &DatasetTrial> {
        self.trials.iter().filter(move |t| t.role == role)
    }

    pub fn trial(&self, name: &str) -> Result<&DatasetTrial> {
        self.trials
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| CliError::Config(format!("no trial named '{name}' in the dataset")))
    }
}

fn raw_windows(dir: &Path, trial: &DatasetTrial, spec: &WindowSpec) -> Result<WindowedDataset> {
    let x = mdc::read(&dir.join(&trial.features))?;
    let y = mdc::read(&dir.join(&trial.target))?;
    Ok(make_windows(&x, &y, spec)?)
}

fn truncate(sig: &MultiChannelSignal, n: usize) -> Result<MultiChannelSignal> {
    Ok(sig.with_data(sig.data().slice(ndarray::s![.., ..n]).to_owned())?)
}

/// Conditions the force, aligns it with the drives at the feature rate and
/// fits the standardization on the training windows only.
pub fn dataset(cfg: &PipelineConfig, data_dir: &Path, drive_dir: &Path, out: &Path) -> Result<DatasetManifest> {
    cfg.validate()?;
    let manifest = DataManifest::load(data_dir)?;
    let split: TrialSplit = read_json(&drive_dir.join(SPLIT))?;
    create_dir(out)?;
    let role_of = |i: usize| {
        if split.train.contains(&i) {
            Some(Role::Train)
        } else if split.val.contains(&i) {
            Some(Role::Val)
        } else if split.test.contains(&i) {
            Some(Role::Test)
        } else {
            None
        }
    };

    let mut trials = Vec::new();
    let mut labels: Option<Vec<String>> = None;
    for (i, t) in manifest.trials.iter().enumerate() {
        let Some(role) = role_of(i) else { continue };
        let drive_path = drive_dir.join(format!("{}_drive.mdc", t.name));
        let drive = mdc::read(&drive_path)?;
        match &labels {
            None => labels = Some(drive.channel_labels().to_vec()),
            Some(l) if l.as_slice() != drive.channel_labels() => {
                return Err(CliError::format(&drive_path, format!("features {:?} differ from {:?}", drive.channel_labels(), l)));
            }
            Some(_) => {}
        }
        let force = preprocess_force(cfg, &load_force(data_dir, t)?)?;
        let force = resample(&force, drive.sample_rate_hz())?;
        let n = drive.n_samples().min(force.n_samples());
        let features = format!("{}_features.mdc", t.name);
        let target = format!("{}_target.mdc", t.name);
        mdc::write(&out.join(&features), &truncate(&drive, n)?)?;
        mdc::write(&out.join(&target), &truncate(&force, n)?)?;
        trials.push(DatasetTrial { name: t.name.clone(), role, features, target });
    }
    let feature_labels = labels.ok_or_else(|| CliError::Config("split selects no trials".into()))?;

    // Statistics from the training windows, read back from disk so every
    // later stage sees exactly the same f32-rounded values.
    let mut rows = Vec::new();
    let mut targets = Vec::new();
    for t in trials.iter().filter(|t| t.role == Role::Train) {
        let d = raw_windows(out, t, &cfg.window)?;
        rows.push(d.input_rows());
        targets.push(d.targets.to_owned().into_shape_with_order((d.targets.len(), 1)).expect("contiguous"));
    }
    let norm_stats = zscore_fit(&rows.iter().map(|r| r.view()).collect::<Vec<_>>())?;
    let target_stats = zscore_fit(&targets.iter().map(|r| r.view()).collect::<Vec<_>>())?.features[0];
    for (label, s) in feature_labels.iter().zip(&norm_stats.features) {
        if s.clamped {
            log::warn!("feature {label} is constant over the training windows; std clamped");
        }
    }

    let ds = DatasetManifest {
        feature_rate_hz: cfg.dsp.feature_rate_hz,
        feature_labels,
        window: cfg.window,
        norm_stats,
        target_stats,
        split,
        trials,
    };
    write_json(&out.join(DATASET), &ds)?;
    cfg.save(&out.join("config.toml"))?;
    Ok(ds)
}

// ---------------------------------------------------------------- training

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub model: String,
    pub precision: Precision,
    pub seed: u64,
    pub train_windows: usize,
    pub val_windows: usize,
    pub fit: FitReport,
    pub test: EvalReport,
}

impl TrainReport {
    /// Key-value text form.
    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("report is representable as TOML")
    }
}

fn collect_role(ds: &DatasetManifest, dir: &Path, role: Role) -> Result<Vec<TrialWindows>> {
    ds.role(role)
        .map(|t| Ok(TrialWindows { name: t.name.clone(), data: ds.windows(dir, t)? }))
        .collect()
}

fn concat(trials: &[TrialWindows]) -> Result<WindowedDataset> {
    let parts: Vec<WindowedDataset> = trials.iter().map(|t| t.data.clone()).collect();
    Ok(WindowedDataset::concat(&parts)?)
}

fn train_typed<S: Real>(
    cfg: &PipelineConfig,
    model_cfg: &ModelConfig,
    ds: &DatasetManifest,
    dir: &Path,
    precision: Precision,
) -> Result<(Checkpoint, TrainReport, EvalReport)> {
    let train = concat(&collect_role(ds, dir, Role::Train)?)?;
    let val = concat(&collect_role(ds, dir, Role::Val)?)?;
    let test = collect_role(ds, dir, Role::Test)?;
    let mut model = Model::<S>::build(model_cfg, layer_seed(cfg.seed, 1))?;
    let fit_report = fit(&mut model, &train, &val, &cfg.train)?;
    let eval = evaluate(&model, &test, cfg.train.batch_size)?;
    let ckpt = Checkpoint::from_model(&model, precision, ds.feature_labels.clone());
    let report = TrainReport {
        model: model_cfg.name().to_string(),
        precision,
        seed: cfg.seed,
        train_windows: train.len(),
        val_windows: val.len(),
        fit: fit_report,
        test: eval.clone(),
    };
    Ok((ckpt, report, eval))
}

/// Trains the configured decoder, evaluates it on the test trials and
/// writes the checkpoint, the report and the metrics table.
pub fn train(cfg: &PipelineConfig, dataset_dir: &Path, out: &Path, precision: Precision) -> Result<TrainReport> {
    cfg.validate()?;
    let ds = DatasetManifest::load(dataset_dir)?;
    create_dir(out)?;
    let model_cfg = cfg.model.selected().with_in_features(ds.n_features());
    let (ckpt, report, eval) = match precision {
        Precision::F32 => train_typed::<f32>(cfg, &model_cfg, &ds, dataset_dir, precision)?,
        Precision::F64 => train_typed::<f64>(cfg, &model_cfg, &ds, dataset_dir, precision)?,
    };
    ckpt.save(&out.join(CHECKPOINT))?;
    write_text(&out.join(TRAIN_REPORT), &report.to_toml())?;
    write_metrics(out, &eval, ds.feature_rate_hz, ds.window.shift_ms)?;
    cfg.save(&out.join("config.toml"))?;
    log::info!(
        "train: {} best epoch {} of {}, test {}",
        report.model,
        report.fit.best_epoch,
        report.fit.epochs.len(),
        eval.summary()
    );
    Ok(report)
}

// ---------------------------------------------------------------- evaluation

pub fn render_metrics(report: &EvalReport) -> String {
    let mut s = format!("{:<12} {:>12} {:>9}\n", "trial", "rmse_%mvf", "r");
    for t in &report.trials {
        let flag = if t.r_undefined { "*" } else { "" };
        s.push_str(&format!("{:<12} {:>12.2} {:>9.3}{flag}\n", t.trial, t.rmse_pct_mvf, t.pearson_r));
    }
    s.push_str(&format!("{:<12} {:>12.2} {:>9.3}\n", "mean", report.mean_rmse_pct_mvf, report.mean_pearson_r));
    if report.trials.iter().any(|t| t.r_undefined) {
        s.push_str("* constant trace, r undefined and reported as 0\n");
    }
    s
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> CliError + '_ {
    move |e| CliError::format(path, e.to_string())
}

/// Writes the metrics table (text and CSV) and one overlay trace per trial.
pub fn write_metrics(out: &Path, report: &EvalReport, rate_hz: f64, shift_ms: f64) -> Result<()> {
    write_text(&out.join(METRICS_TXT), &render_metrics(report))?;
    let path = out.join(METRICS_CSV);
    let mut w = csv::Writer::from_path(&path).map_err(csv_err(&path))?;
    w.write_record(["trial", "rmse_pct_mvf", "pearson_r", "r_undefined"]).map_err(csv_err(&path))?;
    for t in &report.trials {
        w.write_record([t.trial.clone(), t.rmse_pct_mvf.to_string(), t.pearson_r.to_string(), t.r_undefined.to_string()])
            .map_err(csv_err(&path))?;
    }
    w.write_record(["mean".into(), report.mean_rmse_pct_mvf.to_string(), report.mean_pearson_r.to_string(), String::new()])
        .map_err(csv_err(&path))?;
    w.flush().map_err(|e| CliError::io(&path, e))?;

    let traces = out.join(TRACES);
    create_dir(&traces)?;
    let offset = mudec_core::dsp::shift_samples(shift_ms, rate_hz);
    for t in &report.trials {
        let path = traces.join(format!("{}.csv", t.trial));
        crate::plot::write_trace_csv(&path, &t.measured, &t.predicted, rate_hz, offset)?;
    }
    Ok(())
}

fn eval_typed<S: Real>(ckpt: &Checkpoint, trials: &[TrialWindows], batch: usize) -> Result<EvalReport> {
    let model = ckpt.to_model::<S>()?;
    Ok(evaluate(&model, trials, batch)?)
}

/// Evaluates a checkpoint on named trials (the test split by default).
pub fn eval(checkpoint: &Path, dataset_dir: &Path, trials: Option<&[String]>, out: &Path, batch: usize) -> Result<EvalReport> {
    let ckpt = Checkpoint::load(checkpoint)?;
    let ds = DatasetManifest::load(dataset_dir)?;
    if ckpt.feature_labels.len() != ds.n_features() {
        return Err(CliError::Config(format!(
            "checkpoint {} expects {} features {:?}, dataset {} provides {} {:?}",
            checkpoint.display(),
            ckpt.feature_labels.len(),
            ckpt.feature_labels,
            dataset_dir.display(),
            ds.n_features(),
            ds.feature_labels
        )));
    }
    let selected: Vec<&DatasetTrial> = match trials {
        Some(names) => names.iter().map(|n| ds.trial(n)).collect::<Result<_>>()?,
        None => ds.role(Role::Test).collect(),
    };
    let windows = selected
        .iter()
        .map(|t| Ok(TrialWindows { name: t.name.clone(), data: ds.windows(dataset_dir, t)? }))
        .collect::<Result<Vec<_>>>()?;
    create_dir(out)?;
    let report = match ckpt.precision {
        Precision::F32 => eval_typed::<f32>(&ckpt, &windows, batch)?,
        Precision::F64 => eval_typed::<f64>(&ckpt, &windows, batch)?,
    };
    write_metrics(out, &report, ds.feature_rate_hz, ds.window.shift_ms)?;
    Ok(report)
}

// ---------------------------------------------------------------- full run

/// Output directories of a full run, one per stage.
#[derive(Debug, Clone)]
pub struct RunDirs {
    pub data: PathBuf,
    pub decomp: PathBuf,
    pub dataset: PathBuf,
    pub train: PathBuf,
}

impl RunDirs {
    pub fn under(root: &Path) -> Self {
        Self {
            data: root.join("data"),
            decomp: root.join("decomp"),
            dataset: root.join("dataset"),
            train: root.join("train"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub decomp: DecompReport,
    pub train: TrainReport,
}

/// synth → decompose → dataset → train, each stage writing under `root`.
pub fn run_all(cfg: &PipelineConfig, root: &Path, jobs: usize, precision: Precision) -> Result<RunOutcome> {
    let dirs = RunDirs::under(root);
    synth(cfg, &dirs.data, jobs)?;
    let decomp = decompose(cfg, &dirs.data, &dirs.decomp, jobs)?;
    dataset(cfg, &dirs.data, &dirs.decomp, &dirs.dataset)?;
    let train = train(cfg, &dirs.dataset, &dirs.train, precision)?;
    Ok(RunOutcome { decomp, train })
}
