use ndarray::{s, Array3, ArrayD, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamConfig, OptimizerState};
use crate::dsp::WindowedDataset;
use crate::models::{layer_seed, Mode, Model};
use crate::tensor::{Graph, Real};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub min_delta: f64,
    pub seed: u64,
    pub adam: AdamConfig,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            batch_size: 32,
            max_epochs: 80,
            patience: 10,
            min_delta: 1e-5,
            seed: 0,
            adam: AdamConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub epochs: Vec<EpochRecord>,
    /// 1-based epoch whose parameters were restored.
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub stopped_early: bool,
}

/// Windows `idx` of `data` as model input `[B, F, T]` and target `[B, 1, T]`.
fn gather<S: Real>(data: &WindowedDataset, idx: &[usize]) -> (ArrayD<S>, ArrayD<S>) {
    let (_, t, f) = data.inputs.dim();
    let mut x = Array3::<S>::zeros((idx.len(), f, t));
    let mut y = Array3::<S>::zeros((idx.len(), 1, t));
    for (b, &w) in idx.iter().enumerate() {
        let win = data.inputs.index_axis(Axis(0), w);
        x.slice_mut(s![b, .., ..]).assign(&win.t().mapv(S::of));
        y.slice_mut(s![b, 0, ..]).assign(&data.targets.row(w).mapv(S::of));
    }
    (x.into_dyn(), y.into_dyn())
}

/// Loss and parameter gradients for one mini-batch.
pub fn batch_loss<S: Real>(
    model: &Model<S>,
    data: &WindowedDataset,
    idx: &[usize],
    mode: Mode,
) -> Result<(f64, Vec<ArrayD<S>>)> {
    let (x, y) = gather::<S>(data, idx);
    let mut g = Graph::new();
    let xv = g.constant(x);
    let yv = g.constant(y);
    let pass = model.forward(&mut g, xv, mode)?;
    let loss = g.mse(pass.output, yv)?;
    g.ensure_finite()?;
    let grads = g.backward(loss)?;
    let value = g.value(loss).iter().next().and_then(|v| v.to_f64()).unwrap_or(f64::NAN);
    let shapes = &model.params().tensors;
    let flat = pass
        .params
        .iter()
        .zip(shapes)
        .map(|(&v, t)| grads.get_or_zeros(v, t.shape()))
        .collect();
    Ok((value, flat))
}

/// Eval-mode MSE over every window, in the standardized target space.
pub fn dataset_loss<S: Real>(model: &Model<S>, data: &WindowedDataset, batch_size: usize) -> Result<f64> {
    let idx: Vec<usize> = (0..data.len()).collect();
    let mut total = 0.0;
    for chunk in idx.chunks(batch_size.max(1)) {
        let (x, y) = gather::<S>(data, chunk);
        let mut g = Graph::new();
        let xv = g.constant(x);
        let yv = g.constant(y);
        let out = model.forward(&mut g, xv, Mode::Eval)?.output;
        let loss = g.mse(out, yv)?;
        let v = g.value(loss).iter().next().and_then(|v| v.to_f64()).unwrap_or(f64::NAN);
        total += v * chunk.len() as f64;
    }
    Ok(total / data.len().max(1) as f64)
}

/// Mini-batch Adam with validation early stopping. Parameters of the best
/// validation epoch are restored before returning.
pub fn fit<S: Real>(
    model: &mut Model<S>,
    train: &WindowedDataset,
    val: &WindowedDataset,
    cfg: &FitConfig,
) -> Result<FitReport> {
    cfg.adam.validate()?;
    if cfg.batch_size == 0 || cfg.max_epochs == 0 {
        return Err(Error::param("batch size and max_epochs must be positive"));
    }
    if train.is_empty() || val.is_empty() {
        return Err(Error::EmptyDataset("training and validation sets must be non-empty".into()));
    }
    for (name, d) in [("train", train), ("val", val)] {
        if d.n_features() != model.in_features() {
            return Err(Error::shape(format!(
                "{name} windows carry {} features, model expects {}",
                d.n_features(),
                model.in_features()
            )));
        }
    }
    let mut state = OptimizerState::new(model.params());
    let mut best = (f64::INFINITY, 0usize, model.params().clone());
    let mut epochs = Vec::new();
    let mut wait = 0;
    let mut stopped_early = false;
    let mut order: Vec<usize> = (0..train.len()).collect();

    for epoch in 1..=cfg.max_epochs {
        let epoch_seed = layer_seed(cfg.seed, epoch);
        order.sort_unstable();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(epoch_seed));
        let mut sum = 0.0;
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            let mode = Mode::Train { seed: layer_seed(epoch_seed, b) };
            let (loss, grads) = batch_loss(model, train, batch, mode)?;
            adam_step(model.params_mut(), &grads, &mut state, &cfg.adam)?;
            sum += loss * batch.len() as f64;
        }
        let train_loss = sum / train.len() as f64;
        let val_loss = dataset_loss(model, val, cfg.batch_size)?;
        log::info!("epoch {epoch}: train {train_loss:.5} val {val_loss:.5}");
        epochs.push(EpochRecord { epoch, train_loss, val_loss });

        if val_loss.is_finite() && val_loss < best.0 - cfg.min_delta {
            best = (val_loss, epoch, model.params().clone());
            wait = 0;
        } else {
            wait += 1;
            if wait > cfg.patience {
                stopped_early = epoch < cfg.max_epochs;
                break;
            }
        }
    }
    if best.1 == 0 {
        return Err(Error::Numerical("validation loss was never finite".into()));
    }
    *model.params_mut() = best.2;
    Ok(FitReport {
        epochs,
        best_epoch: best.1,
        best_val_loss: best.0,
        stopped_early,
    })
}

