//! Stage-by-stage pipeline behind the `mudec` command: synthetic data,
//! decomposition, dataset assembly, training, evaluation and plotting.
//! Every stage reads its inputs from disk and writes its outputs to disk.

pub mod checkpoint;
pub mod config;
pub mod csvio;
pub mod error;
pub mod mdc;
pub mod pipeline;
pub mod plot;

pub use checkpoint::{Checkpoint, Precision};
pub use config::PipelineConfig;
pub use error::{CliError, Result};
