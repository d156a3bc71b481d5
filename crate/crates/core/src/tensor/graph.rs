use ndarray::{ArrayD, ArrayView3, Ix1, Ix3, IxDyn, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::conv::{conv1d_backward, conv1d_forward};
use super::norm::{layer_norm_backward, layer_norm_forward, LayerNormCache};
use super::spiking::{lif_backward, lif_forward, readout_backward, readout_forward, LifParams};
use super::{Real, Tensor};
use crate::{Error, Result};

/// Handle to a node on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

enum Op<S: Real> {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    MulScalar(Var, S),
    Relu(Var),
    Sum(Var),
    Mean(Var),
    Conv1d {
        x: Var,
        w: Var,
        bias: Option<Var>,
        dilation: usize,
    },
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        cache: LayerNormCache<S>,
    },
    /// Mask entries are 0 or 1/(1−p).
    Dropout(Var, ArrayD<S>),
    Lif {
        input: Var,
        params: LifParams,
    },
    Readout {
        s: Var,
        param: Var,
        alpha: S,
    },
    Mse(Var, Var),
}

struct Node<S: Real> {
    value: ArrayD<S>,
    op: Op<S>,
    needs_grad: bool,
}

pub struct Graph<S: Real> {
    nodes: Vec<Node<S>>,
    /// Membrane potentials of LIF nodes, by node index.
    membranes: Vec<(usize, ArrayD<S>)>,
    first_non_finite: Option<(usize, &'static str)>,
}

impl<S: Real> Default for Graph<S> {
    fn default() -> Self {
        Self::new()
    }
}

fn as3<S: Real>(a: &ArrayD<S>) -> Result<ArrayView3<'_, S>> {
    a.view()
        .into_dimensionality::<Ix3>()
        .map_err(|_| Error::shape(format!("expected a [batch, channels, time] array, got {:?}", a.shape())))
}

fn same_shape<S: Real>(a: &ArrayD<S>, b: &ArrayD<S>, op: &str) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::shape(format!("{op}: {:?} vs {:?}", a.shape(), b.shape())));
    }
    Ok(())
}

/// Elementwise `f(a, b)` over equal shapes; contiguous arrays skip the
/// dynamic-rank iterator, which dominates small-op cost otherwise.
fn zip_map<S: Real>(a: &ArrayD<S>, b: &ArrayD<S>, f: impl Fn(S, S) -> S) -> ArrayD<S> {
    match (a.as_slice(), b.as_slice()) {
        (Some(x), Some(y)) => {
            let v = x.iter().zip(y).map(|(&p, &q)| f(p, q)).collect();
            ArrayD::from_shape_vec(a.raw_dim(), v).expect("same length")
        }
        _ => Zip::from(a).and(b).map_collect(|&p, &q| f(p, q)),
    }
}

fn add_assign<S: Real>(acc: &mut ArrayD<S>, g: &ArrayD<S>) {
    match (acc.as_slice_mut(), g.as_slice()) {
        (Some(x), Some(y)) => x.iter_mut().zip(y).for_each(|(p, &q)| *p += q),
        _ => *acc += g,
    }
}

fn all_finite<S: Real>(a: &ArrayD<S>) -> bool {
    match a.as_slice_memory_order() {
        Some(x) => x.iter().all(|v| v.is_finite()),
        None => a.iter().all(|v| v.is_finite()),
    }
}

fn sigmoid<S: Real>(x: S) -> S {
    S::one() / (S::one() + (-x).exp())
}

impl<S: Real> Graph<S> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            membranes: Vec::new(),
            first_non_finite: None,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: ArrayD<S>, op: Op<S>, name: &'static str) -> Var {
        let needs_grad = match &op {
            Op::Leaf => false,
            _ => self.inputs(&op).iter().any(|v| self.nodes[v.0].needs_grad),
        };
        self.push_with(value, op, needs_grad, name)
    }

    fn push_with(&mut self, value: ArrayD<S>, op: Op<S>, needs_grad: bool, name: &'static str) -> Var {
        if self.first_non_finite.is_none() && !all_finite(&value) {
            self.first_non_finite = Some((self.nodes.len(), name));
        }
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn inputs(&self, op: &Op<S>) -> Vec<Var> {
        match op {
            Op::Leaf => vec![],
            Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) | Op::Mse(a, b) => vec![*a, *b],
            Op::MulScalar(a, _) | Op::Relu(a) | Op::Sum(a) | Op::Mean(a) | Op::Dropout(a, _) => vec![*a],
            Op::Conv1d { x, w, bias, .. } => {
                let mut v = vec![*x, *w];
                v.extend(bias);
                v
            }
            Op::LayerNorm { x, gamma, beta, .. } => vec![*x, *gamma, *beta],
            Op::Lif { input, .. } => vec![*input],
            Op::Readout { s, param, .. } => vec![*s, *param],
        }
    }

    pub fn value(&self, v: Var) -> &ArrayD<S> {
        &self.nodes[v.0].value
    }

    /// Membrane trace recorded by a [`Graph::lif`] node.
    pub fn membrane(&self, spikes: Var) -> Option<&ArrayD<S>> {
        self.membranes.iter().find(|(i, _)| *i == spikes.0).map(|(_, m)| m)
    }

    /// Errors if any forward value so far was NaN or infinite.
    pub fn ensure_finite(&self) -> Result<()> {
        match self.first_non_finite {
            None => Ok(()),
            Some((node, op)) => Err(Error::Numerical(format!(
                "non-finite value produced by {op} (node {node})"
            ))),
        }
    }

    /// A constant input; no gradient is tracked.
    pub fn constant(&mut self, value: ArrayD<S>) -> Var {
        self.push_with(value, Op::Leaf, false, "constant")
    }

    /// A leaf tracking gradient iff the tensor asks for it.
    pub fn param(&mut self, t: &Tensor<S>) -> Var {
        self.push_with(t.value.clone(), Op::Leaf, t.requires_grad, "param")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape(self.value(a), self.value(b), "add")?;
        let v = zip_map(self.value(a), self.value(b), |p, q| p + q);
        Ok(self.push(v, Op::Add(a, b), "add"))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape(self.value(a), self.value(b), "sub")?;
        let v = zip_map(self.value(a), self.value(b), |p, q| p - q);
        Ok(self.push(v, Op::Sub(a, b), "sub"))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape(self.value(a), self.value(b), "mul")?;
        let v = zip_map(self.value(a), self.value(b), |p, q| p * q);
        Ok(self.push(v, Op::Mul(a, b), "mul"))
    }

    pub fn mul_scalar(&mut self, a: Var, c: S) -> Var {
        let v = self.value(a) * c;
        self.push(v, Op::MulScalar(a, c), "mul_scalar")
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(|x| if x > S::zero() { x } else { S::zero() });
        self.push(v, Op::Relu(a), "relu")
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let v = ArrayD::from_elem(IxDyn(&[]), self.value(a).sum());
        self.push(v, Op::Sum(a), "sum")
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let n = S::of(self.value(a).len().max(1) as f64);
        let v = ArrayD::from_elem(IxDyn(&[]), self.value(a).sum() / n);
        self.push(v, Op::Mean(a), "mean")
    }

    /// Causal dilated convolution of `x [N, C_in, T]` with `w [C_out, C_in, k]`.
    pub fn conv1d(&mut self, x: Var, w: Var, bias: Option<Var>, dilation: usize) -> Result<Var> {
        if dilation == 0 {
            return Err(Error::param("dilation must be at least 1"));
        }
        let xv = as3(self.value(x))?;
        let wv = as3(self.value(w))?;
        if xv.dim().1 != wv.dim().1 {
            return Err(Error::shape(format!(
                "conv1d: input has {} channels, weights expect {}",
                xv.dim().1,
                wv.dim().1
            )));
        }
        let b = match bias {
            Some(b) => {
                let bv = self.value(b).view().into_dimensionality::<Ix1>().ok();
                match bv {
                    Some(bv) if bv.len() == wv.dim().0 => Some(bv),
                    _ => return Err(Error::shape("conv1d: bias must have one entry per output channel")),
                }
            }
            None => None,
        };
        let y = conv1d_forward(xv, wv, b, dilation).into_dyn();
        Ok(self.push(y, Op::Conv1d { x, w, bias, dilation }, "conv1d"))
    }

    /// Normalizes `x [N, C, T]` over channels with per-channel scale and shift.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Result<Var> {
        let xv = as3(self.value(x))?;
        let c = xv.dim().1;
        let g = self.value(gamma).view().into_dimensionality::<Ix1>().ok().filter(|g| g.len() == c);
        let b = self.value(beta).view().into_dimensionality::<Ix1>().ok().filter(|b| b.len() == c);
        let (Some(g), Some(b)) = (g, b) else {
            return Err(Error::shape(format!("layer_norm: scale and shift must have {c} entries")));
        };
        let (y, cache) = layer_norm_forward(xv, g, b);
        Ok(self.push(y.into_dyn(), Op::LayerNorm { x, gamma, beta, cache }, "layer_norm"))
    }

    /// Inverted dropout. Identity when `train` is false or `p` is zero.
    pub fn dropout(&mut self, x: Var, p: f64, train: bool, seed: u64) -> Result<Var> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::param(format!("dropout p must lie in [0, 1), got {p}")));
        }
        if !train || p == 0.0 {
            return Ok(x);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let keep = S::of(1.0 / (1.0 - p));
        // Drop when a uniform u32 falls below p·2³².
        let cut = (p * 4_294_967_296.0) as u64;
        let xv = self.value(x);
        let mut bits = vec![0u32; xv.len()];
        rng.fill(&mut bits[..]);
        let values = bits.iter().map(|&b| if (b as u64) < cut { S::zero() } else { keep }).collect();
        let mask = ArrayD::from_shape_vec(xv.raw_dim(), values).expect("mask matches input shape");
        let y = zip_map(xv, &mask, |p, q| p * q);
        Ok(self.push(y, Op::Dropout(x, mask), "dropout"))
    }

    /// Leaky integrate-and-fire layer over `input [N, C, T]`; returns spikes.
    /// The membrane trace is available through [`Graph::membrane`].
    pub fn lif(&mut self, input: Var, params: LifParams) -> Result<Var> {
        params.validate()?;
        let (s, v) = lif_forward(as3(self.value(input))?, &params);
        let out = self.push(s.into_dyn(), Op::Lif { input, params }, "lif");
        self.membranes.push((out.0, v.into_dyn()));
        Ok(out)
    }

    /// Exponential synaptic trace with `α = sigmoid(param)`, `param` of shape `[1]`.
    pub fn readout(&mut self, s: Var, param: Var) -> Result<Var> {
        let pv = self.value(param);
        if pv.len() != 1 {
            return Err(Error::shape("readout: alpha parameter must hold one value"));
        }
        let alpha = sigmoid(pv.iter().copied().next().expect("one value"));
        let y = readout_forward(as3(self.value(s))?, alpha);
        Ok(self.push(y.into_dyn(), Op::Readout { s, param, alpha }, "readout"))
    }

    /// `mean((pred − target)²)` over every element.
    pub fn mse(&mut self, pred: Var, target: Var) -> Result<Var> {
        same_shape(self.value(pred), self.value(target), "mse")?;
        let n = S::of(self.value(pred).len().max(1) as f64);
        let mut acc = S::zero();
        for (a, b) in self.value(pred).iter().zip(self.value(target).iter()) {
            acc += (*a - *b) * (*a - *b);
        }
        let v = ArrayD::from_elem(IxDyn(&[]), acc / n);
        Ok(self.push(v, Op::Mse(pred, target), "mse"))
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients<S>> {
        if self.value(loss).len() != 1 {
            return Err(Error::shape(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        let mut grads: Vec<Option<ArrayD<S>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(ArrayD::from_elem(self.value(loss).raw_dim(), S::one()));
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, g, &mut grads)?;
        }
        Ok(Gradients { grads })
    }

    fn accumulate(&self, grads: &mut [Option<ArrayD<S>>], v: Var, g: ArrayD<S>) {
        if !self.nodes[v.0].needs_grad {
            return;
        }
        match &mut grads[v.0] {
            Some(acc) => add_assign(acc, &g),
            slot => *slot = Some(g),
        }
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn propagate(&self, i: usize, g: ArrayD<S>, grads: &mut [Option<ArrayD<S>>]) -> Result<()> {
        let node = &self.nodes[i];
        let scalar = |g: &ArrayD<S>| g.iter().copied().next().expect("scalar gradient");
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                if self.wants(*b) {
                    self.accumulate(grads, *b, g.clone());
                }
                self.accumulate(grads, *a, g);
            }
            Op::Sub(a, b) => {
                if self.wants(*b) {
                    self.accumulate(grads, *b, g.mapv(|v| -v));
                }
                self.accumulate(grads, *a, g);
            }
            Op::Mul(a, b) => {
                if self.wants(*a) {
                    self.accumulate(grads, *a, zip_map(&g, self.value(*b), |p, q| p * q));
                }
                if self.wants(*b) {
                    self.accumulate(grads, *b, zip_map(&g, self.value(*a), |p, q| p * q));
                }
            }
            Op::MulScalar(a, c) => self.accumulate(grads, *a, g * *c),
            Op::Relu(a) => {
                let mut g = g;
                g.zip_mut_with(&node.value, |gi, &y| {
                    if y <= S::zero() {
                        *gi = S::zero();
                    }
                });
                self.accumulate(grads, *a, g);
            }
            Op::Sum(a) => {
                let gs = scalar(&g);
                self.accumulate(grads, *a, ArrayD::from_elem(self.value(*a).raw_dim(), gs));
            }
            Op::Mean(a) => {
                let n = S::of(self.value(*a).len().max(1) as f64);
                let gs = scalar(&g) / n;
                self.accumulate(grads, *a, ArrayD::from_elem(self.value(*a).raw_dim(), gs));
            }
            Op::Conv1d { x, w, bias, dilation } => {
                let gy = as3(&g)?;
                let (gx, gw, gb) =
                    conv1d_backward(as3(self.value(*x))?, as3(self.value(*w))?, *dilation, gy, self.wants(*x));
                if let Some(gx) = gx {
                    self.accumulate(grads, *x, gx.into_dyn());
                }
                self.accumulate(grads, *w, gw.into_dyn());
                if let Some(b) = bias {
                    self.accumulate(grads, *b, gb.into_dyn());
                }
            }
            Op::LayerNorm { x, gamma, beta, cache } => {
                let gv = self.value(*gamma).view().into_dimensionality::<Ix1>().expect("checked in forward");
                let (gx, gg, gb) = layer_norm_backward(cache, gv, as3(&g)?);
                self.accumulate(grads, *x, gx.into_dyn());
                self.accumulate(grads, *gamma, gg.into_dyn());
                self.accumulate(grads, *beta, gb.into_dyn());
            }
            Op::Dropout(x, mask) => self.accumulate(grads, *x, zip_map(&g, mask, |p, q| p * q)),
            Op::Lif { input, params } => {
                let membrane = self.membrane(Var(i)).expect("lif membrane recorded");
                let gi = lif_backward(as3(membrane)?, as3(&g)?, params);
                self.accumulate(grads, *input, gi.into_dyn());
            }
            Op::Readout { s, param, alpha } => {
                let (gs, galpha) = readout_backward(as3(self.value(*s))?, as3(&node.value)?, *alpha, as3(&g)?);
                if self.wants(*s) {
                    self.accumulate(grads, *s, gs.into_dyn());
                }
                let gp = galpha * *alpha * (S::one() - *alpha);
                let shape = self.value(*param).raw_dim();
                self.accumulate(grads, *param, ArrayD::from_elem(shape, gp));
            }
            Op::Mse(a, b) => {
                let n = S::of(self.value(*a).len().max(1) as f64);
                let k = scalar(&g) * S::of(2.0) / n;
                let diff = zip_map(self.value(*a), self.value(*b), |p, q| p - q);
                if self.wants(*b) {
                    self.accumulate(grads, *b, &diff * (-k));
                }
                self.accumulate(grads, *a, diff * k);
            }
        }
        Ok(())
    }
}

/// Gradients of one backward sweep, indexed by [`Var`].
pub struct Gradients<S: Real> {
    grads: Vec<Option<ArrayD<S>>>,
}

impl<S: Real> Gradients<S> {
    /// `None` when `v` does not influence the loss or does not track gradient.
    pub fn get(&self, v: Var) -> Option<&ArrayD<S>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// Gradient of `v`, zeros if it received none.
    pub fn get_or_zeros(&self, v: Var, shape: &[usize]) -> ArrayD<S> {
        self.get(v).cloned().unwrap_or_else(|| ArrayD::zeros(IxDyn(shape)))
    }
}

/// `[N, C, T]` array from a flat vector, for tests and small callers.
pub fn array3<S: Real>(shape: (usize, usize, usize), data: Vec<S>) -> ArrayD<S> {
    ndarray::Array3::from_shape_vec(shape, data).expect("matching length").into_dyn()
}
