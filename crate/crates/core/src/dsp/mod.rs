//! Deterministic signal conditioning: IIR filters, resampling, z-scoring and
//! sliding-window dataset construction.
//!
//! Every function here is pure; filters run forward-only (causal) with zero
//! initial state.

mod filter;
mod norm;
mod resample;
mod window;

pub use filter::{
    butterworth_filter, butterworth_sections, notch_filter, notch_section, Biquad, FilterKind,
    SosFilter,
};
pub use norm::{zscore_apply, zscore_fit, zscore_invert, FeatureStats, NormStats, STD_EPSILON};
pub use resample::{antialias_taps, resample, RESAMPLE_TAPS};
pub use window::{make_windows, shift_samples, WindowSpec, WindowedDataset};
