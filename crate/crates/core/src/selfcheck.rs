//! Randomized gradient checks over every differentiable op and both
//! decoder architectures, in `f64`.
//!
//! Smooth paths are compared against central differences of the graph
//! itself. Paths through the LIF threshold are compared against central
//! differences of [`relaxed_lif`], and an instance is redrawn whenever a
//! `±h` perturbation would flip any hard spike.

use std::cell::Cell;

use ndarray::{Array3, ArrayD, Axis, IxDyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::models::{Mode, Model, ModelConfig, SnnConfig, TcnConfig};
use crate::tensor::gradcheck::{analytic_gradients, check_graph_fn, hard_lif, numeric_gradients, relative_error, relaxed_lif};
use crate::tensor::{conv1d_forward, Graph, LifParams, Tensor, Var};
use crate::{Error, Result};

pub const FD_STEP: f64 = 1e-5;
pub const SMOOTH_TOLERANCE: f64 = 1e-4;
pub const SPIKING_TOLERANCE: f64 = 1e-3;
const MAX_REDRAWS: usize = 200;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub instances: usize,
    pub max_error: f64,
    pub tolerance: f64,
    /// Instances discarded because a perturbation flipped a spike.
    pub redraws: usize,
}

impl CheckResult {
    pub fn passed(&self) -> bool {
        self.max_error < self.tolerance
    }
}

fn normal(rng: &mut ChaCha8Rng, shape: &[usize], scale: f64) -> ArrayD<f64> {
    ArrayD::from_shape_simple_fn(IxDyn(shape), || scale * rng.sample::<f64, _>(StandardNormal))
}

fn param(rng: &mut ChaCha8Rng, shape: &[usize], scale: f64) -> Tensor<f64> {
    Tensor::new(normal(rng, shape, scale), true)
}

/// `Σ out ⊙ r` for a fixed random `r`, so every output entry matters differently.
fn weighted_sum(g: &mut Graph<f64>, out: Var, r: &ArrayD<f64>) -> Result<Var> {
    let rv = g.constant(r.clone());
    let p = g.mul(out, rv)?;
    Ok(g.sum(p))
}

fn scalar(g: &Graph<f64>, v: Var) -> f64 {
    g.value(v).iter().copied().next().unwrap_or(f64::NAN)
}

struct Case {
    params: Vec<Tensor<f64>>,
    build: Box<dyn Fn(&mut Graph<f64>, &[Var]) -> Result<Var>>,
}

fn op_case(name: &str, rng: &mut ChaCha8Rng) -> Case {
    let n = 2;
    let c = rng.random_range(1..4);
    let t = rng.random_range(4..12);
    let shape = [n, c, t];
    let r = normal(rng, &shape, 1.0);
    match name {
        "conv1d" => {
            let cout = rng.random_range(1..4);
            let k = rng.random_range(1..5);
            let d = rng.random_range(1..4);
            let r = normal(rng, &[n, cout, t], 1.0);
            Case {
                params: vec![param(rng, &shape, 1.0), param(rng, &[cout, c, k], 0.5), param(rng, &[cout], 0.5)],
                build: Box::new(move |g, v| {
                    let y = g.conv1d(v[0], v[1], Some(v[2]), d)?;
                    weighted_sum(g, y, &r)
                }),
            }
        }
        "relu" => {
            // Keep every entry well away from the kink.
            let mut x = normal(rng, &shape, 1.0);
            x.mapv_inplace(|v| if v.abs() < 0.05 { v.signum() * 0.05 + v } else { v });
            Case {
                params: vec![Tensor::new(x, true)],
                build: Box::new(move |g, v| {
                    let y = g.relu(v[0]);
                    weighted_sum(g, y, &r)
                }),
            }
        }
        "layer_norm" => {
            let c = rng.random_range(2..6);
            let shape = [n, c, t];
            let r = normal(rng, &shape, 1.0);
            Case {
                params: vec![param(rng, &shape, 1.0), param(rng, &[c], 1.0), param(rng, &[c], 1.0)],
                build: Box::new(move |g, v| {
                    let y = g.layer_norm(v[0], v[1], v[2])?;
                    weighted_sum(g, y, &r)
                }),
            }
        }
        "dropout" => {
            let seed = rng.random();
            Case {
                params: vec![param(rng, &shape, 1.0)],
                build: Box::new(move |g, v| {
                    let y = g.dropout(v[0], 0.3, true, seed)?;
                    weighted_sum(g, y, &r)
                }),
            }
        }
        "add" | "sub" | "mul" => {
            let op = name.to_string();
            Case {
                params: vec![param(rng, &shape, 1.0), param(rng, &shape, 1.0)],
                build: Box::new(move |g, v| {
                    let y = match op.as_str() {
                        "add" => g.add(v[0], v[1])?,
                        "sub" => g.sub(v[0], v[1])?,
                        _ => g.mul(v[0], v[1])?,
                    };
                    weighted_sum(g, y, &r)
                }),
            }
        }
        "mul_scalar" => {
            let k = rng.sample::<f64, _>(StandardNormal);
            Case {
                params: vec![param(rng, &shape, 1.0)],
                build: Box::new(move |g, v| {
                    let y = g.mul_scalar(v[0], k);
                    weighted_sum(g, y, &r)
                }),
            }
        }
        "sum" | "mean" => {
            let mean = name == "mean";
            Case {
                params: vec![param(rng, &shape, 1.0)],
                build: Box::new(move |g, v| {
                    let sq = g.mul(v[0], v[0])?;
                    Ok(if mean { g.mean(sq) } else { g.sum(sq) })
                }),
            }
        }
        "mse" => Case {
            params: vec![param(rng, &shape, 1.0), param(rng, &shape, 1.0)],
            build: Box::new(|g, v| g.mse(v[0], v[1])),
        },
        "readout" => Case {
            params: vec![param(rng, &shape, 1.0), param(rng, &[1], 1.0)],
            build: Box::new(move |g, v| {
                let y = g.readout(v[0], v[1])?;
                weighted_sum(g, y, &r)
            }),
        },
        other => unreachable!("unknown op {other}"),
    }
}

pub const SMOOTH_OPS: [&str; 12] = [
    "conv1d", "relu", "layer_norm", "dropout", "add", "sub", "mul", "mul_scalar", "sum", "mean", "mse", "readout",
];

/// Every op except the LIF layer, `instances` random draws each.
pub fn check_ops(instances: usize, seed: u64) -> Result<Vec<CheckResult>> {
    let mut out = Vec::new();
    for (i, name) in SMOOTH_OPS.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i as u64));
        let mut worst = 0.0f64;
        for _ in 0..instances {
            let case = op_case(name, &mut rng);
            let errs = check_graph_fn(&case.params, FD_STEP, &case.build)?;
            worst = errs.into_iter().fold(worst, f64::max);
        }
        out.push(CheckResult {
            name: (*name).to_string(),
            instances,
            max_error: worst,
            tolerance: SMOOTH_TOLERANCE,
            redraws: 0,
        });
    }
    Ok(out)
}

fn first(a: &ArrayD<f64>) -> f64 {
    a.iter().copied().next().unwrap_or(f64::NAN)
}

fn readout_plain(s: &Array3<f64>, alpha: f64) -> Array3<f64> {
    let mut y = Array3::zeros(s.raw_dim());
    for (si, mut yi) in s.lanes(Axis(2)).into_iter().zip(y.lanes_mut(Axis(2))) {
        let mut prev = 0.0;
        for t in 0..si.len() {
            prev = alpha * prev + (1.0 - alpha) * si[t];
            yi[t] = prev;
        }
    }
    y
}

fn as3(a: &ArrayD<f64>) -> Result<ndarray::ArrayView3<'_, f64>> {
    a.view()
        .into_dimensionality()
        .map_err(|_| Error::Shape(format!("expected rank 3, got {:?}", a.shape())))
}

/// Front-end `conv → LIF → readout → Σ y ⊙ r`, checked on the conv weights
/// and bias against the relaxed reference.
pub fn check_lif_chain(instances: usize, seed: u64) -> Result<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lif = LifParams::default();
    let (n, c, t, k) = (1, 2, 20, 3);
    let mut worst = 0.0f64;
    let mut redraws = 0;
    let mut done = 0;
    while done < instances {
        if redraws > MAX_REDRAWS {
            return Err(Error::Numerical("LIF chain check kept hitting spike flips".into()));
        }
        let x = normal(&mut rng, &[n, c, t], 1.0);
        let params = vec![param(&mut rng, &[c, c, k], 0.6), Tensor::new(normal(&mut rng, &[c], 0.2).mapv(|v| v + 0.4), true)];
        let r = normal(&mut rng, &[n, c, t], 1.0);
        let alpha = 0.8;
        let logit = ArrayD::from_elem(IxDyn(&[1]), (alpha / (1.0 - alpha) as f64).ln());

        let current = |p: &[Tensor<f64>]| -> Result<Array3<f64>> {
            Ok(conv1d_forward(as3(&x)?, as3(&p[0].value)?, Some(p[1].value.view().into_dimensionality().map_err(|_| Error::Shape("bias".into()))?), 1))
        };
        let base_current = current(&params)?;
        let (base_spikes, anchor) = hard_lif(base_current.view(), &lif);
        if base_spikes.iter().all(|&s| s == 0.0) {
            redraws += 1;
            continue;
        }
        let flipped = Cell::new(false);
        let numeric = numeric_gradients(&params, FD_STEP, |p| {
            let i = current(p)?;
            if hard_lif(i.view(), &lif).0 != base_spikes {
                flipped.set(true);
            }
            let y = readout_plain(&relaxed_lif(i.view(), anchor.view(), &lif), alpha);
            Ok((&y * &r.view().into_dimensionality::<ndarray::Ix3>().expect("rank 3")).sum())
        })?;
        if flipped.get() {
            redraws += 1;
            continue;
        }
        let analytic = analytic_gradients(&params, |g, v| {
            let xv = g.constant(x.clone());
            let cur = g.conv1d(xv, v[0], Some(v[1]), 1)?;
            let s = g.lif(cur, lif)?;
            let a = g.constant(logit.clone());
            let y = g.readout(s, a)?;
            weighted_sum(g, y, &r)
        })?;
        for (a, nu) in analytic.iter().zip(&numeric) {
            worst = worst.max(relative_error(a, nu));
        }
        done += 1;
    }
    Ok(CheckResult {
        name: "lif_chain".into(),
        instances,
        max_error: worst,
        tolerance: SPIKING_TOLERANCE,
        redraws,
    })
}

fn model_loss(model: &Model<f64>, x: &ArrayD<f64>, y: &ArrayD<f64>, mode: Mode) -> Result<(f64, Vec<ArrayD<f64>>)> {
    let mut g = Graph::new();
    let xv = g.constant(x.clone());
    let yv = g.constant(y.clone());
    let pass = model.forward(&mut g, xv, mode)?;
    let loss = g.mse(pass.output, yv)?;
    let grads = g.backward(loss)?;
    let shapes = &model.params().tensors;
    let flat = pass.params.iter().zip(shapes).map(|(&v, t)| grads.get_or_zeros(v, t.shape())).collect();
    Ok((scalar(&g, loss), flat))
}

fn with_params(model: &Model<f64>, p: &[Tensor<f64>]) -> Model<f64> {
    let mut m = model.clone();
    m.params_mut().tensors = p.to_vec();
    m
}

/// Full TCN in train mode (fixed dropout masks), every parameter tensor.
pub fn check_tcn(instances: usize, seed: u64) -> Result<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..instances {
        let cfg = TcnConfig { in_features: 2, width: 4, kernel: 3, dilations: vec![1, 2], dropout: 0.1 };
        let model = Model::<f64>::build(&ModelConfig::Tcn(cfg), rng.random())?;
        let (n, t) = (2, 12);
        let x = normal(&mut rng, &[n, 2, t], 1.0);
        let y = normal(&mut rng, &[n, 1, t], 1.0);
        let mode = Mode::Train { seed: rng.random() };
        let (_, analytic) = model_loss(&model, &x, &y, mode)?;
        let numeric = numeric_gradients(&model.params().tensors, FD_STEP, |p| {
            Ok(model_loss(&with_params(&model, p), &x, &y, mode)?.0)
        })?;
        for (a, nu) in analytic.iter().zip(&numeric) {
            worst = worst.max(relative_error(a, nu));
        }
    }
    Ok(CheckResult { name: "tcn".into(), instances, max_error: worst, tolerance: SMOOTH_TOLERANCE, redraws: 0 })
}

/// Full SNN. Readout and head parameters sit downstream of the spikes and
/// are checked exactly; front-end parameters go through the relaxed LIF.
/// Instances where a perturbation changes a spike or a ReLU active set are
/// redrawn. Returns (downstream, front-end) results.
pub fn check_snn(instances: usize, seed: u64) -> Result<(CheckResult, CheckResult)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = SnnConfig { in_features: 2, width: 3, kernel: 3, ..SnnConfig::default() };
    let lif = cfg.lif();
    let front = 2 * cfg.dilations.len();
    let (mut down_worst, mut front_worst) = (0.0f64, 0.0f64);
    let mut redraws = 0;
    let mut done = 0;
    while done < instances {
        if redraws > MAX_REDRAWS {
            return Err(Error::Numerical("SNN check kept hitting spike flips".into()));
        }
        let mut model = Model::<f64>::build(&ModelConfig::Snn(cfg.clone()), rng.random())?;
        // Zero-initialised biases put whole windows of the second conv exactly
        // on the ReLU kink, where central differences average the two slopes.
        for i in 0..cfg.dilations.len() {
            model.params_mut().tensors[2 * i + 1] = param(&mut rng, &[cfg.width], 0.3);
        }
        let (n, t) = (1, 20);
        let x = normal(&mut rng, &[n, 2, t], 1.5);
        let y = normal(&mut rng, &[n, 1, t], 1.0);
        let tensors = &model.params().tensors;

        // Returns the LIF input current and the ReLU active sets.
        let current = |p: &[Tensor<f64>]| -> Result<(Array3<f64>, Vec<bool>)> {
            let mut h = as3(&x)?.to_owned();
            let mut active = Vec::new();
            for (i, &d) in cfg.dilations.iter().enumerate() {
                let b = p[2 * i + 1].value.view().into_dimensionality().map_err(|_| Error::Shape("bias".into()))?;
                h = conv1d_forward(h.view(), as3(&p[2 * i].value)?, Some(b), d);
                active.extend(h.iter().map(|&v| v > 0.0));
                h.mapv_inplace(|v| v.max(0.0));
            }
            Ok((h, active))
        };
        let (base_current, base_active) = current(tensors)?;
        let (base_spikes, anchor) = hard_lif(base_current.view(), &lif);
        if base_spikes.iter().all(|&s| s == 0.0) {
            redraws += 1;
            continue;
        }
        let (_, analytic) = model_loss(&model, &x, &y, Mode::Eval)?;

        let flipped = Cell::new(false);
        let relaxed_loss = |p: &[Tensor<f64>]| -> Result<f64> {
            let (i, active) = current(p)?;
            if active != base_active || hard_lif(i.view(), &lif).0 != base_spikes {
                flipped.set(true);
            }
            let alpha = 1.0 / (1.0 + (-first(&p[front].value)).exp());
            let r = readout_plain(&relaxed_lif(i.view(), anchor.view(), &lif), alpha);
            let hb = p[front + 2].value.view().into_dimensionality().map_err(|_| Error::Shape("bias".into()))?;
            let out = conv1d_forward(r.view(), as3(&p[front + 1].value)?, Some(hb), 1);
            let target = as3(&y)?;
            Ok((&out - &target).mapv(|v| v * v).mean().unwrap_or(f64::NAN))
        };
        let numeric_front = numeric_gradients(&tensors[..front], FD_STEP, |p| {
            let mut all = tensors.clone();
            all[..front].clone_from_slice(p);
            relaxed_loss(&all)
        })?;
        if flipped.get() {
            redraws += 1;
            continue;
        }
        let numeric_down = numeric_gradients(&tensors[front..], FD_STEP, |p| {
            let mut all = tensors.clone();
            all[front..].clone_from_slice(p);
            Ok(model_loss(&with_params(&model, &all), &x, &y, Mode::Eval)?.0)
        })?;
        for (a, nu) in analytic[..front].iter().zip(&numeric_front) {
            front_worst = front_worst.max(relative_error(a, nu));
        }
        for (a, nu) in analytic[front..].iter().zip(&numeric_down) {
            down_worst = down_worst.max(relative_error(a, nu));
        }
        done += 1;
    }
    Ok((
        CheckResult { name: "snn_readout_head".into(), instances, max_error: down_worst, tolerance: SMOOTH_TOLERANCE, redraws },
        CheckResult { name: "snn_frontend".into(), instances, max_error: front_worst, tolerance: SPIKING_TOLERANCE, redraws },
    ))
}
