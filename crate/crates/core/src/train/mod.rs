//! Optimization and evaluation: Adam, mini-batch fitting with validation
//! early stopping, trial splitting and %MVF metrics.

mod adam;
mod eval;
mod fit;
mod metrics;
mod split;

pub use adam::{adam_step, AdamConfig, OptimizerState};
pub use eval::{evaluate, stitch_windows, EvalReport, TrialMetrics, TrialWindows};
pub use fit::{batch_loss, dataset_loss, fit, EpochRecord, FitConfig, FitReport};
pub use metrics::{mse, pearson_r, rmse, Correlation};
pub use split::{split_trials, SplitScheme, TrialSplit};
