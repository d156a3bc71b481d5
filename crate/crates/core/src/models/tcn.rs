use serde::{Deserialize, Serialize};

use super::{layer_seed, ones, zeros, Init, Mode, ParamStore};
use crate::tensor::{Graph, Real, Var};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TcnConfig {
    pub in_features: usize,
    pub width: usize,
    pub kernel: usize,
    pub dilations: Vec<usize>,
    pub dropout: f64,
}

impl Default for TcnConfig {
    fn default() -> Self {
        Self {
            in_features: 2,
            width: 64,
            kernel: 9,
            dilations: vec![1, 2, 4, 8, 16, 32],
            dropout: 0.1,
        }
    }
}

impl TcnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.in_features == 0 || self.width == 0 || self.kernel == 0 {
            return Err(Error::param("tcn features, width and kernel must be positive"));
        }
        if self.dilations.is_empty() || self.dilations.contains(&0) {
            return Err(Error::param("tcn dilations must be a non-empty list of positive integers"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::param(format!("dropout must lie in [0, 1), got {}", self.dropout)));
        }
        Ok(())
    }

    /// `1 + (k − 1)(1 + 2Σd)`: the stem plus two convs per block.
    pub fn receptive_field(&self) -> usize {
        1 + (self.kernel - 1) * (1 + 2 * self.dilations.iter().sum::<usize>())
    }

    /// Closed-form parameter count.
    pub fn param_count(&self) -> usize {
        let (f, c, k) = (self.in_features, self.width, self.kernel);
        let stem = f * c * k + c;
        let block = 2 * (c * c * k + c) + 2 * c;
        let head = c + 1;
        stem + self.dilations.len() * block + head
    }
}

/// Stem conv, residual blocks `conv → ReLU → LayerNorm → Dropout → conv`
/// with identity skips, then a 1×1 head.
#[derive(Debug, Clone, PartialEq)]
pub struct Tcn<S: Real> {
    cfg: TcnConfig,
    pub(crate) params: ParamStore<S>,
}

const PER_BLOCK: usize = 6;

impl<S: Real> Tcn<S> {
    pub fn new(cfg: TcnConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let (f, c, k) = (cfg.in_features, cfg.width, cfg.kernel);
        let mut init = Init::new(seed);
        let mut p = ParamStore::new();
        p.push("stem.w", init.conv(c, f, k, 1.0));
        p.push("stem.b", zeros(&[c]));
        for i in 0..cfg.dilations.len() {
            p.push(format!("block{i}.conv1.w"), init.conv(c, c, k, 2.0));
            p.push(format!("block{i}.conv1.b"), zeros(&[c]));
            p.push(format!("block{i}.ln.gamma"), ones(&[c]));
            p.push(format!("block{i}.ln.beta"), zeros(&[c]));
            p.push(format!("block{i}.conv2.w"), init.conv(c, c, k, 1.0));
            p.push(format!("block{i}.conv2.b"), zeros(&[c]));
        }
        p.push("head.w", init.conv(1, c, 1, 1.0));
        p.push("head.b", zeros(&[1]));
        Ok(Self { cfg, params: p })
    }

    pub fn config(&self) -> &TcnConfig {
        &self.cfg
    }

    pub fn receptive_field(&self) -> usize {
        self.cfg.receptive_field()
    }

    pub(crate) fn forward(&self, g: &mut Graph<S>, x: Var, p: &[Var], mode: Mode) -> Result<Var> {
        let mut h = g.conv1d(x, p[0], Some(p[1]), 1)?;
        for (i, &d) in self.cfg.dilations.iter().enumerate() {
            let b = &p[2 + PER_BLOCK * i..2 + PER_BLOCK * (i + 1)];
            let a = g.conv1d(h, b[0], Some(b[1]), d)?;
            let a = g.relu(a);
            let a = g.layer_norm(a, b[2], b[3])?;
            let a = match mode {
                Mode::Train { seed } => g.dropout(a, self.cfg.dropout, true, layer_seed(seed, i))?,
                Mode::Eval => a,
            };
            let a = g.conv1d(a, b[4], Some(b[5]), d)?;
            h = g.add(h, a)?;
        }
        let head = 2 + PER_BLOCK * self.cfg.dilations.len();
        g.conv1d(h, p[head], Some(p[head + 1]), 1)
    }

    pub fn cast<T: Real>(&self) -> Tcn<T> {
        Tcn {
            cfg: self.cfg.clone(),
            params: self.params.cast(),
        }
    }
}
