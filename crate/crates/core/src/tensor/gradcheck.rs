//! Central finite-difference checking for graph functions, plus a smooth
//! stand-in for the LIF layer whose exact derivative is the surrogate one.

use ndarray::{Array3, ArrayD, ArrayView3, Zip};

use super::spiking::{lif_forward, LifParams};
use super::{Graph, Tensor, Var};
use crate::Result;

/// `‖a − b‖ / max(‖a‖, ‖b‖)`, or 0 when both are below `1e-12`.
pub fn relative_error(a: &ArrayD<f64>, b: &ArrayD<f64>) -> f64 {
    let norm = |x: &ArrayD<f64>| x.iter().map(|v| v * v).sum::<f64>().sqrt();
    let scale = norm(a).max(norm(b));
    if scale < 1e-12 {
        return 0.0;
    }
    let diff: f64 = a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum();
    diff.sqrt() / scale
}

/// Central differences of `loss` w.r.t. every entry of every tensor.
pub fn numeric_gradients(
    params: &[Tensor<f64>],
    h: f64,
    mut loss: impl FnMut(&[Tensor<f64>]) -> Result<f64>,
) -> Result<Vec<ArrayD<f64>>> {
    let mut work = params.to_vec();
    let mut out = Vec::with_capacity(params.len());
    for i in 0..params.len() {
        let mut g = ArrayD::zeros(params[i].value.raw_dim());
        for j in 0..params[i].value.len() {
            let base = params[i].value.as_slice().expect("standard layout")[j];
            work[i].value.as_slice_mut().expect("standard layout")[j] = base + h;
            let up = loss(&work)?;
            work[i].value.as_slice_mut().expect("standard layout")[j] = base - h;
            let down = loss(&work)?;
            work[i].value.as_slice_mut().expect("standard layout")[j] = base;
            g.as_slice_mut().expect("standard layout")[j] = (up - down) / (2.0 * h);
        }
        out.push(g);
    }
    Ok(out)
}

/// Analytic gradients of the scalar built by `f` over `params`.
pub fn analytic_gradients(
    params: &[Tensor<f64>],
    f: impl Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
) -> Result<Vec<ArrayD<f64>>> {
    let mut g = Graph::new();
    let vars: Vec<Var> = params.iter().map(|t| g.param(t)).collect();
    let loss = f(&mut g, &vars)?;
    let grads = g.backward(loss)?;
    Ok(vars
        .iter()
        .zip(params)
        .map(|(&v, t)| grads.get_or_zeros(v, t.shape()))
        .collect())
}

/// Per-tensor relative error between backward and central differences of
/// the same graph function.
pub fn check_graph_fn(
    params: &[Tensor<f64>],
    h: f64,
    f: impl Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
) -> Result<Vec<f64>> {
    let analytic = analytic_gradients(params, &f)?;
    let numeric = numeric_gradients(params, h, |p| {
        let mut g = Graph::new();
        let vars: Vec<Var> = p.iter().map(|t| g.param(t)).collect();
        let loss = f(&mut g, &vars)?;
        Ok(g.value(loss).iter().copied().next().unwrap_or(f64::NAN))
    })?;
    Ok(analytic.iter().zip(&numeric).map(|(a, n)| relative_error(a, n)).collect())
}

/// LIF recurrence with `s = H(v̄ − v_th) + S(v) − S(v̄)`, where `S' = φ` and
/// `v̄` is a frozen membrane trace. At `v = v̄` it reproduces the hard
/// forward, and its true derivative there is the surrogate gradient.
pub fn relaxed_lif(input: ArrayView3<f64>, anchor: ArrayView3<f64>, p: &LifParams) -> Array3<f64> {
    let k = p.surrogate_slope;
    let smooth = |v: f64| (v - p.v_th) / (1.0 + k * (v - p.v_th).abs());
    let mut spikes = Array3::zeros(input.raw_dim());
    Zip::from(input.lanes(ndarray::Axis(2)))
        .and(anchor.lanes(ndarray::Axis(2)))
        .and(spikes.lanes_mut(ndarray::Axis(2)))
        .for_each(|i, vbar, mut s| {
            let (mut v_prev, mut s_prev) = (0.0, 0.0);
            for t in 0..i.len() {
                let v = p.beta * v_prev + i[t] - p.v_th * s_prev;
                let hard = if vbar[t] > p.v_th { 1.0 } else { 0.0 };
                let st = hard + smooth(v) - smooth(vbar[t]);
                s[t] = st;
                v_prev = v;
                s_prev = st;
            }
        });
    spikes
}

/// Hard spikes and membrane of the exact forward, for anchoring and for
/// detecting spike flips under perturbation.
pub fn hard_lif(input: ArrayView3<f64>, p: &LifParams) -> (Array3<f64>, Array3<f64>) {
    lif_forward(input, p)
}
