//! Causal force decoders: a dilated residual TCN and a LIF spiking network.
//!
//! Models take `[N, F, T]` inputs and produce `[N, 1, T]` outputs in the
//! standardized target space. Parameters are held as named tensors in a
//! fixed order so checkpoints and optimizer state can index them.

mod snn;
mod tcn;

use ndarray::{Array2, Array3, ArrayD, Axis, IxDyn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dsp::FeatureStats;
use crate::tensor::{Graph, Real, Tensor, Var};
use crate::{Error, Result};

pub use snn::{Snn, SnnConfig};
pub use tcn::{Tcn, TcnConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Dropout active, masks drawn from `seed`.
    Train { seed: u64 },
    Eval,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelConfig {
    Tcn(TcnConfig),
    Snn(SnnConfig),
}

impl ModelConfig {
    pub fn in_features(&self) -> usize {
        match self {
            ModelConfig::Tcn(c) => c.in_features,
            ModelConfig::Snn(c) => c.in_features,
        }
    }

    pub fn with_in_features(mut self, f: usize) -> Self {
        match &mut self {
            ModelConfig::Tcn(c) => c.in_features = f,
            ModelConfig::Snn(c) => c.in_features = f,
        }
        self
    }

    pub fn name(&self) -> &'static str {
        match self {
            ModelConfig::Tcn(_) => "tcn",
            ModelConfig::Snn(_) => "snn",
        }
    }
}

/// Named parameter tensors in a fixed order.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore<S: Real> {
    pub names: Vec<String>,
    pub tensors: Vec<Tensor<S>>,
}

impl<S: Real> ParamStore<S> {
    fn new() -> Self {
        Self {
            names: Vec::new(),
            tensors: Vec::new(),
        }
    }

    fn push(&mut self, name: impl Into<String>, value: ArrayD<S>) -> usize {
        self.names.push(name.into());
        self.tensors.push(Tensor::new(value, true));
        self.tensors.len() - 1
    }

    pub fn count(&self) -> usize {
        self.tensors.iter().map(|t| t.len()).sum()
    }

    /// One graph leaf per tensor, same order.
    pub fn bind(&self, g: &mut Graph<S>) -> Vec<Var> {
        self.tensors.iter().map(|t| g.param(t)).collect()
    }
}

pub(crate) struct Init {
    rng: ChaCha8Rng,
}

impl Init {
    pub(crate) fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Fan-in scaled normal weights `[C_out, C_in, k]` with std `√(gain / (C_in·k))`.
    pub(crate) fn conv<S: Real>(&mut self, cout: usize, cin: usize, k: usize, gain: f64) -> ArrayD<S> {
        let std = (gain / (cin * k) as f64).sqrt();
        let rng = &mut self.rng;
        ArrayD::from_shape_simple_fn(IxDyn(&[cout, cin, k]), || {
            let z: f64 = StandardNormal.sample(rng);
            S::of(std * z)
        })
    }
}

pub(crate) fn zeros<S: Real>(shape: &[usize]) -> ArrayD<S> {
    ArrayD::zeros(IxDyn(shape))
}

pub(crate) fn ones<S: Real>(shape: &[usize]) -> ArrayD<S> {
    ArrayD::from_elem(IxDyn(shape), S::one())
}

/// Derived seed for sub-stream `layer` of `seed` (dropout layers, epochs, batches).
pub fn layer_seed(seed: u64, layer: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(layer as u64 + 1)
}

#[derive(Debug, Clone, PartialEq)]
pub enum Model<S: Real> {
    Tcn(Tcn<S>),
    Snn(Snn<S>),
}

/// Output of one forward pass: the prediction and the parameter leaves,
/// in [`ParamStore`] order.
pub struct ForwardPass {
    pub output: Var,
    pub params: Vec<Var>,
}

impl<S: Real> Model<S> {
    pub fn build(cfg: &ModelConfig, seed: u64) -> Result<Self> {
        Ok(match cfg {
            ModelConfig::Tcn(c) => Model::Tcn(Tcn::new(c.clone(), seed)?),
            ModelConfig::Snn(c) => Model::Snn(Snn::new(c.clone(), seed)?),
        })
    }

    pub fn config(&self) -> ModelConfig {
        match self {
            Model::Tcn(m) => ModelConfig::Tcn(m.config().clone()),
            Model::Snn(m) => ModelConfig::Snn(m.config().clone()),
        }
    }

    pub fn params(&self) -> &ParamStore<S> {
        match self {
            Model::Tcn(m) => &m.params,
            Model::Snn(m) => &m.params,
        }
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<S> {
        match self {
            Model::Tcn(m) => &mut m.params,
            Model::Snn(m) => &mut m.params,
        }
    }

    pub fn in_features(&self) -> usize {
        self.config().in_features()
    }

    /// Samples of history each output depends on, including the current one.
    pub fn receptive_field(&self) -> usize {
        match self {
            Model::Tcn(m) => m.receptive_field(),
            // The LIF recurrence makes the spiking model's memory unbounded.
            Model::Snn(_) => usize::MAX,
        }
    }

    /// `x` is `[N, F, T]`; output is `[N, 1, T]`.
    pub fn forward(&self, g: &mut Graph<S>, x: Var, mode: Mode) -> Result<ForwardPass> {
        let f = g.value(x).shape().get(1).copied().unwrap_or(0);
        if g.value(x).ndim() != 3 || f != self.in_features() {
            return Err(Error::shape(format!(
                "model expects [batch, {}, time] input, got {:?}",
                self.in_features(),
                g.value(x).shape()
            )));
        }
        let params = self.params().bind(g);
        let output = match self {
            Model::Tcn(m) => m.forward(g, x, &params, mode)?,
            Model::Snn(m) => m.forward(g, x, &params, mode)?,
        };
        Ok(ForwardPass { output, params })
    }

    /// Eval-mode outputs for a batch of `[T × F]` windows, still standardized.
    pub fn predict_batch(&self, windows: &Array3<f64>) -> Result<Array2<f64>> {
        let (n, t, f) = windows.dim();
        if f != self.in_features() {
            return Err(Error::shape(format!(
                "windows carry {f} features, model expects {}",
                self.in_features()
            )));
        }
        let x = windows
            .view()
            .permuted_axes([0, 2, 1])
            .mapv(S::of)
            .into_dyn();
        let mut g = Graph::new();
        let xv = g.constant(x);
        let out = self.forward(&mut g, xv, Mode::Eval)?.output;
        g.ensure_finite()?;
        let y = g.value(out);
        Ok(Array2::from_shape_fn((n, t), |(i, j)| {
            y[[i, 0, j]].to_f64().unwrap_or(f64::NAN)
        }))
    }

    /// Force trace in %MVF for one standardized `[T × F]` window.
    pub fn predict_window(&self, window: &Array2<f64>, target: Option<&FeatureStats>) -> Result<Vec<f64>> {
        let batch = window.view().insert_axis(Axis(0)).to_owned();
        let y = self.predict_batch(&batch)?;
        Ok(y.row(0)
            .iter()
            .map(|&z| target.map_or(z, |s| s.invert(z)))
            .collect())
    }

    pub fn cast<T: Real>(&self) -> Model<T> {
        match self {
            Model::Tcn(m) => Model::Tcn(m.cast()),
            Model::Snn(m) => Model::Snn(m.cast()),
        }
    }
}

impl<S: Real> ParamStore<S> {
    pub fn cast<T: Real>(&self) -> ParamStore<T> {
        ParamStore {
            names: self.names.clone(),
            tensors: self.tensors.iter().map(|t| t.cast()).collect(),
        }
    }
}
