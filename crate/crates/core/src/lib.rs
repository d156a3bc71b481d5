//! Motor-unit decomposition of HD-sEMG and causal fingertip-force decoders.
//!
//! The crate is organised along the processing chain:
//!
//! - [`dsp`]: filtering, resampling, standardization and windowing
//! - [`synthgen`]: ground-truth EMG / spike / force generation
//! - [`decomp`]: whitening, FastICA, spike extraction and neural drives
//! - [`tensor`]: a small reverse-mode autodiff engine
//! - [`models`]: the TCN and LIF spiking decoders
//! - [`train`]: Adam, early stopping and evaluation metrics

pub mod decomp;
pub mod dsp;
pub mod error;
pub mod models;
pub mod selfcheck;
pub mod signal;
pub mod stats;
pub mod synthgen;
pub mod tensor;
pub mod train;

pub use error::{Error, ErrorKind, Result};
pub use signal::{MultiChannelSignal, Units};
