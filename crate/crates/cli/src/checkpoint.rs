//! Trained decoder weights, stored as JSON with exact float round-trip.

use std::path::Path;

use mudec_core::models::{Model, ModelConfig};
use mudec_core::tensor::Real;
use ndarray::{ArrayD, IxDyn};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};
use crate::pipeline::{read_json, write_json};

/// Scalar type used for training and inference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Precision {
    #[default]
    F32,
    F64,
}

pub const PRECISION_ENV: &str = "MUDEC_PRECISION";

impl Precision {
    /// `MUDEC_PRECISION=f64` selects 64-bit; anything else is an error,
    /// unset means 32-bit.
    pub fn from_env() -> Result<Self> {
        match std::env::var(PRECISION_ENV) {
            Err(_) => Ok(Self::F32),
            Ok(v) => v.parse(),
        }
    }
}

impl std::str::FromStr for Precision {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "f32" => Ok(Self::F32),
            "f64" => Ok(Self::F64),
            other => Err(CliError::Config(format!("{PRECISION_ENV}: expected f32 or f64, got '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedParam {
    pub name: String,
    pub shape: Vec<usize>,
    /// Row-major; f32 weights are widened exactly.
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub model: ModelConfig,
    pub precision: Precision,
    pub feature_labels: Vec<String>,
    pub params: Vec<NamedParam>,
}

impl Checkpoint {
    pub fn from_model<S: Real>(model: &Model<S>, precision: Precision, feature_labels: Vec<String>) -> Self {
        let store = model.params();
        let params = store
            .names
            .iter()
            .zip(&store.tensors)
            .map(|(name, t)| NamedParam {
                name: name.clone(),
                shape: t.shape().to_vec(),
                values: t.value.iter().map(|v| v.to_f64().unwrap_or(f64::NAN)).collect(),
            })
            .collect();
        Self { model: model.config(), precision, feature_labels, params }
    }

    /// Rebuilds the model and loads every stored tensor, checking names and shapes.
    pub fn to_model<S: Real>(&self) -> Result<Model<S>> {
        let mut model = Model::<S>::build(&self.model, 0)?;
        let store = model.params_mut();
        if store.names.len() != self.params.len() {
            return Err(CliError::Config(format!(
                "checkpoint holds {} tensors, {} model needs {}",
                self.params.len(),
                self.model.name(),
                store.names.len()
            )));
        }
        for ((name, t), p) in store.names.iter().zip(store.tensors.iter_mut()).zip(&self.params) {
            if *name != p.name || t.shape() != p.shape.as_slice() {
                return Err(CliError::Config(format!(
                    "checkpoint tensor {} {:?} does not match model tensor {name} {:?}",
                    p.name,
                    p.shape,
                    t.shape()
                )));
            }
            let values = p.values.iter().map(|&v| S::of(v)).collect();
            t.value = ArrayD::from_shape_vec(IxDyn(&p.shape), values).expect("shape checked");
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        read_json(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use mudec_core::models::{SnnConfig, TcnConfig};

    #[test]
    fn f32_weights_round_trip_bit_exactly() {
        let cfg = ModelConfig::Tcn(TcnConfig { in_features: 3, width: 4, dilations: vec![1, 2], ..TcnConfig::default() });
        let model = Model::<f32>::build(&cfg, 9).unwrap();
        let ckpt = Checkpoint::from_model(&model, Precision::F32, vec!["a".into(), "b".into(), "c".into()]);
        let text = serde_json::to_string(&ckpt).unwrap();
        let back: Checkpoint = serde_json::from_str(&text).unwrap();
        assert_eq!(back.to_model::<f32>().unwrap(), model);
    }

    #[test]
    fn f64_weights_round_trip_bit_exactly() {
        let cfg = ModelConfig::Snn(SnnConfig { in_features: 2, width: 4, ..SnnConfig::default() });
        let model = Model::<f64>::build(&cfg, 3).unwrap();
        let ckpt = Checkpoint::from_model(&model, Precision::F64, vec!["x".into(), "y".into()]);
        let back: Checkpoint = serde_json::from_str(&serde_json::to_string(&ckpt).unwrap()).unwrap();
        assert_eq!(back.to_model::<f64>().unwrap(), model);
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let cfg = ModelConfig::Tcn(TcnConfig { in_features: 2, width: 4, dilations: vec![1], ..TcnConfig::default() });
        let model = Model::<f64>::build(&cfg, 1).unwrap();
        let mut ckpt = Checkpoint::from_model(&model, Precision::F64, vec![]);
        ckpt.params[0].shape.push(1);
        let err = ckpt.to_model::<f64>().unwrap_err().to_string();
        assert!(err.contains(&ckpt.params[0].name), "{err}");
    }

    #[test]
    fn precision_parsing() {
        assert_eq!("f64".parse::<Precision>().unwrap(), Precision::F64);
        assert!("f16".parse::<Precision>().is_err());
    }
}
