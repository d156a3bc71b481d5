mod channels;
mod cleanup;
mod drive;
mod extract;
mod fastica;
mod kmeans;
mod pipeline;
mod spikes;
mod whitening;

pub use channels::{channel_quality, select_channels, SUBREGIONS};
pub use cleanup::{dedup_and_rank, CleanupParams};
pub use drive::{drive_at_source_rate, neural_drive, DriveKernel, KernelShape, NeuralDrive};
pub use extract::{enforce_refractory, extract_spikes, find_peaks, SpikeClassifier, SpikeDetection, SpikeParams};
pub use fastica::{fastica, UnmixingModel};
pub use kmeans::{kmeans_1d, silhouette_1d, Clustering};
pub use pipeline::{extend_channels, DecompConfig, DecompositionModel, FittedUnit, GroupModel};
pub use spikes::{rate_of_agreement, SpikeTrainSet, SpikeUnit, UnitQuality};
pub use whitening::{covariance, fit_whitening, WhiteningTransform, EIGEN_FLOOR};
