use serde::{Deserialize, Serialize};

use super::{zeros, Init, Mode, ParamStore};
use crate::tensor::{Graph, LifParams, Real, Var};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SnnConfig {
    pub in_features: usize,
    pub width: usize,
    pub kernel: usize,
    pub dilations: Vec<usize>,
    pub beta_m: f64,
    pub v_th: f64,
    pub surrogate_slope: f64,
    pub alpha_init: f64,
}

impl Default for SnnConfig {
    fn default() -> Self {
        Self {
            in_features: 2,
            width: 64,
            kernel: 9,
            dilations: vec![1, 2],
            beta_m: 0.9,
            v_th: 1.0,
            surrogate_slope: 25.0,
            alpha_init: 0.9,
        }
    }
}

impl SnnConfig {
    pub fn lif(&self) -> LifParams {
        LifParams {
            beta: self.beta_m,
            v_th: self.v_th,
            surrogate_slope: self.surrogate_slope,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_features == 0 || self.width == 0 || self.kernel == 0 {
            return Err(Error::param("snn features, width and kernel must be positive"));
        }
        if self.dilations.is_empty() || self.dilations.contains(&0) {
            return Err(Error::param("snn front-end dilations must be positive"));
        }
        if !(self.alpha_init > 0.0 && self.alpha_init < 1.0) {
            return Err(Error::param(format!("alpha_init must lie in (0, 1), got {}", self.alpha_init)));
        }
        self.lif().validate()
    }

    pub fn param_count(&self) -> usize {
        let (f, c, k) = (self.in_features, self.width, self.kernel);
        let first = f * c * k + c;
        let rest = (self.dilations.len() - 1) * (c * c * k + c);
        first + rest + 1 + c + 1
    }
}

/// Causal conv front-end with ReLUs, a LIF layer, a learnable synaptic
/// readout and a 1×1 head.
#[derive(Debug, Clone, PartialEq)]
pub struct Snn<S: Real> {
    cfg: SnnConfig,
    pub(crate) params: ParamStore<S>,
}

impl<S: Real> Snn<S> {
    pub fn new(cfg: SnnConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let (f, c, k) = (cfg.in_features, cfg.width, cfg.kernel);
        let mut init = Init::new(seed);
        let mut p = ParamStore::new();
        for (i, _) in cfg.dilations.iter().enumerate() {
            let cin = if i == 0 { f } else { c };
            p.push(format!("frontend{i}.w"), init.conv(c, cin, k, 2.0));
            p.push(format!("frontend{i}.b"), zeros(&[c]));
        }
        let logit = (cfg.alpha_init / (1.0 - cfg.alpha_init)).ln();
        p.push("readout.alpha_logit", ndarray::ArrayD::from_elem(ndarray::IxDyn(&[1]), S::of(logit)));
        p.push("head.w", init.conv(1, c, 1, 1.0));
        p.push("head.b", zeros(&[1]));
        Ok(Self { cfg, params: p })
    }

    pub fn config(&self) -> &SnnConfig {
        &self.cfg
    }

    /// Current readout decay `sigmoid(alpha_logit)`.
    pub fn alpha(&self) -> f64 {
        let i = 2 * self.cfg.dilations.len();
        let z = self.params.tensors[i].value.iter().next().and_then(|v| v.to_f64()).unwrap_or(0.0);
        1.0 / (1.0 + (-z).exp())
    }

    pub(crate) fn forward(&self, g: &mut Graph<S>, x: Var, p: &[Var], _mode: Mode) -> Result<Var> {
        let spikes = self.spikes(g, x, p)?;
        let n = self.cfg.dilations.len();
        let y = g.readout(spikes, p[2 * n])?;
        g.conv1d(y, p[2 * n + 1], Some(p[2 * n + 2]), 1)
    }

    /// Front-end plus LIF layer; the spike tensor is exactly binary.
    pub(crate) fn spikes(&self, g: &mut Graph<S>, x: Var, p: &[Var]) -> Result<Var> {
        let mut h = x;
        for (i, &d) in self.cfg.dilations.iter().enumerate() {
            h = g.conv1d(h, p[2 * i], Some(p[2 * i + 1]), d)?;
            h = g.relu(h);
        }
        g.lif(h, self.cfg.lif())
    }

    /// Binary spike raster `[N, width, T]` for input `x`, for inspection.
    pub fn spike_raster(&self, x: ndarray::ArrayD<S>) -> Result<ndarray::ArrayD<S>> {
        let mut g = Graph::new();
        let xv = g.constant(x);
        let p = self.params.bind(&mut g);
        let s = self.spikes(&mut g, xv, &p)?;
        Ok(g.value(s).clone())
    }

    pub fn cast<T: Real>(&self) -> Snn<T> {
        Snn {
            cfg: self.cfg.clone(),
            params: self.params.cast(),
        }
    }
}
