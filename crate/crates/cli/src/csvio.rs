//! CSV import for externally recorded signals.
//!
//! The header row holds `time` followed by one label per channel; each
//! following row is one sample. The sample rate comes from the time column,
//! which must be uniformly spaced.

use std::path::Path;

use mudec_core::{MultiChannelSignal, Units};
use ndarray::Array2;

use crate::error::{CliError, Result};

/// Largest tolerated deviation of any time step from the mean step, relative.
pub const MAX_JITTER: f64 = 1e-3;

pub fn read_signal(path: &Path, units: Units) -> Result<MultiChannelSignal> {
    let file = std::fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    read_from(file, units).map_err(|msg| CliError::format(path, msg))
}

pub fn read_from(reader: impl std::io::Read, units: Units) -> Result<MultiChannelSignal, String> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers().map_err(|e| e.to_string())?.clone();
    if header.len() < 2 {
        return Err("need a time column and at least one channel".into());
    }
    let labels: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    let c = labels.len();
    let mut times = Vec::new();
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); c];
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| e.to_string())?;
        let line = row + 2;
        let parse = |i: usize| -> Result<f64, String> {
            let v: f64 = rec[i].parse().map_err(|_| format!("line {line}: '{}' is not a number", &rec[i]))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(format!("line {line}: non-finite value"))
            }
        };
        times.push(parse(0)?);
        for ch in 0..c {
            columns[ch].push(parse(ch + 1)?);
        }
    }
    let n = times.len();
    if n < 2 {
        return Err(format!("{n} samples, need at least 2 to infer the sample rate"));
    }
    let step = (times[n - 1] - times[0]) / (n - 1) as f64;
    if !(step > 0.0) {
        return Err("time column must be increasing".into());
    }
    if let Some(k) = times.windows(2).position(|w| ((w[1] - w[0]) - step).abs() > MAX_JITTER * step) {
        return Err(format!("non-uniform time step between rows {} and {}", k + 2, k + 3));
    }
    let data = Array2::from_shape_vec((c, n), columns.concat()).map_err(|e| e.to_string())?;
    MultiChannelSignal::new(data, 1.0 / step, labels, units).map_err(|e| e.to_string())
}
