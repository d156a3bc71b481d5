use ndarray::{Array3, ArrayView3, Zip};
use serde::{Deserialize, Serialize};

use super::Real;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LifParams {
    pub beta: f64,
    pub v_th: f64,
    pub surrogate_slope: f64,
}

impl Default for LifParams {
    fn default() -> Self {
        Self {
            beta: 0.9,
            v_th: 1.0,
            surrogate_slope: 25.0,
        }
    }
}

impl LifParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(Error::param(format!("beta must lie in (0, 1), got {}", self.beta)));
        }
        if !(self.v_th > 0.0) {
            return Err(Error::param(format!("v_th must be positive, got {}", self.v_th)));
        }
        if !(self.surrogate_slope > 0.0) {
            return Err(Error::param("surrogate slope must be positive"));
        }
        Ok(())
    }

    /// `φ(v) = 1 / (1 + k|v − v_th|)²`, the stand-in for `∂s/∂v`.
    pub fn surrogate<S: Real>(&self, v: S) -> S {
        let a = S::one() + S::of(self.surrogate_slope) * (v - S::of(self.v_th)).abs();
        S::one() / (a * a)
    }
}

/// First 1-indexed step at which a constant input `i` fires, if ever.
/// From `v_t = i(1 − βᵗ)/(1 − β)` before the first reset.
pub fn lif_closed_form_first_spike(i: f64, p: &LifParams) -> Option<usize> {
    let v_inf = i / (1.0 - p.beta);
    if v_inf <= p.v_th {
        return None;
    }
    let mut t = ((1.0 - p.v_th / v_inf).ln() / p.beta.ln()).floor() as usize;
    // Step forward past float rounding at the boundary.
    while v_inf * (1.0 - p.beta.powi(t as i32)) <= p.v_th {
        t += 1;
    }
    Some(t)
}

/// `v_t = βv_{t−1} + I_t − v_th s_{t−1}`, `s_t = 1[v_t > v_th]`, zero initial state.
/// Returns (spikes, membrane).
pub(crate) fn lif_forward<S: Real>(input: ArrayView3<S>, p: &LifParams) -> (Array3<S>, Array3<S>) {
    let beta = S::of(p.beta);
    let v_th = S::of(p.v_th);
    let mut spikes = Array3::zeros(input.raw_dim());
    let mut membrane = Array3::zeros(input.raw_dim());
    Zip::from(input.lanes(ndarray::Axis(2)))
        .and(spikes.lanes_mut(ndarray::Axis(2)))
        .and(membrane.lanes_mut(ndarray::Axis(2)))
        .for_each(|i, mut s, mut v| {
            let (mut v_prev, mut s_prev) = (S::zero(), S::zero());
            for t in 0..i.len() {
                // Written as a branch so an infinite threshold never forms inf·0.
                let reset = if s_prev > S::zero() { v_th } else { S::zero() };
                let vt = beta * v_prev + i[t] - reset;
                let st = if vt > v_th { S::one() } else { S::zero() };
                v[t] = vt;
                s[t] = st;
                v_prev = vt;
                s_prev = st;
            }
        });
    (spikes, membrane)
}

/// Gradient w.r.t. the input current given the spike-output gradient.
/// BPTT runs through both the leak and the reset term.
pub(crate) fn lif_backward<S: Real>(membrane: ArrayView3<S>, gs: ArrayView3<S>, p: &LifParams) -> Array3<S> {
    let beta = S::of(p.beta);
    let v_th = S::of(p.v_th);
    let mut gi = Array3::zeros(membrane.raw_dim());
    Zip::from(membrane.lanes(ndarray::Axis(2)))
        .and(gs.lanes(ndarray::Axis(2)))
        .and(gi.lanes_mut(ndarray::Axis(2)))
        .for_each(|v, gs, mut gi| {
            let mut gv_next = S::zero();
            for t in (0..v.len()).rev() {
                // s_t feeds v_{t+1} through the reset with weight −v_th.
                let gst = gs[t] - v_th * gv_next;
                let gvt = gst * p.surrogate(v[t]) + beta * gv_next;
                gi[t] = gvt;
                gv_next = gvt;
            }
        });
    gi
}

/// `y_t = αy_{t−1} + (1 − α)s_t`, `y_{−1} = 0`.
pub(crate) fn readout_forward<S: Real>(s: ArrayView3<S>, alpha: S) -> Array3<S> {
    let mut y = Array3::zeros(s.raw_dim());
    Zip::from(s.lanes(ndarray::Axis(2)))
        .and(y.lanes_mut(ndarray::Axis(2)))
        .for_each(|s, mut y| {
            let mut prev = S::zero();
            for t in 0..s.len() {
                prev = alpha * prev + (S::one() - alpha) * s[t];
                y[t] = prev;
            }
        });
    y
}

/// Returns (gs, ∂L/∂α).
pub(crate) fn readout_backward<S: Real>(
    s: ArrayView3<S>,
    y: ArrayView3<S>,
    alpha: S,
    gy: ArrayView3<S>,
) -> (Array3<S>, S) {
    let mut gs = Array3::zeros(s.raw_dim());
    let mut galpha = S::zero();
    Zip::from(s.lanes(ndarray::Axis(2)))
        .and(y.lanes(ndarray::Axis(2)))
        .and(gy.lanes(ndarray::Axis(2)))
        .and(gs.lanes_mut(ndarray::Axis(2)))
        .for_each(|s, y, gy, mut gs| {
            let mut carry = S::zero();
            for t in (0..s.len()).rev() {
                let g = gy[t] + alpha * carry;
                gs[t] = (S::one() - alpha) * g;
                let y_prev = if t > 0 { y[t - 1] } else { S::zero() };
                galpha += g * (y_prev - s[t]);
                carry = g;
            }
        });
    (gs, galpha)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(i: &[f64], p: &LifParams) -> (Vec<f64>, Vec<f64>) {
        let x = Array3::from_shape_vec((1, 1, i.len()), i.to_vec()).unwrap();
        let (s, v) = lif_forward(x.view(), p);
        (s.iter().copied().collect(), v.iter().copied().collect())
    }

    #[test]
    fn subthreshold_constant_never_fires() {
        let (s, v) = run(&[0.05; 500], &LifParams::default());
        assert!(s.iter().all(|&x| x == 0.0));
        assert!(v.iter().all(|&x| x < 0.5));
    }

    #[test]
    fn constant_current_first_spike_at_seven() {
        let p = LifParams::default();
        let (s, _) = run(&[0.2; 20], &p);
        let first = s.iter().position(|&x| x == 1.0).unwrap() + 1;
        assert_eq!(first, 7);
        assert_eq!(lif_closed_form_first_spike(0.2, &p), Some(7));
        assert_eq!(lif_closed_form_first_spike(0.05, &p), None);
    }

    #[test]
    fn single_pulse_single_spike_then_geometric_decay() {
        let p = LifParams::default();
        let mut i = vec![0.0; 12];
        // Large enough to fire, small enough that 0.9·I − v_th stays subthreshold.
        i[2] = 2.0;
        let (s, v) = run(&i, &p);
        assert_eq!(s.iter().sum::<f64>(), 1.0);
        assert_eq!(s[2], 1.0);
        // Reset lands one step later: v_3 = 0.9·2 − 1.
        let mut want = 0.9 * 2.0 - 1.0;
        assert_eq!(v[3], want);
        for t in 4..12 {
            want *= 0.9;
            assert!((v[t] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn infinite_threshold_is_pure_leaky_integration() {
        let p = LifParams { v_th: f64::INFINITY, ..LifParams::default() };
        let i: Vec<f64> = (0..30).map(|t| (t as f64 * 0.7).sin()).collect();
        let (s, v) = run(&i, &p);
        assert!(s.iter().all(|&x| x == 0.0));
        let mut acc = 0.0;
        for t in 0..30 {
            acc = 0.9 * acc + i[t];
            assert_eq!(v[t], acc);
        }
    }

    #[test]
    fn readout_closed_forms() {
        let ones = Array3::from_elem((1, 1, 10), 1.0);
        let y = readout_forward(ones.view(), 0.9);
        for t in 0..10 {
            assert!((y[[0, 0, t]] - (1.0 - 0.9f64.powi(t as i32 + 1))).abs() < 1e-12);
        }
        let mut impulse = Array3::zeros((1, 1, 5));
        impulse[[0, 0, 0]] = 1.0;
        let y = readout_forward(impulse.view(), 0.5);
        assert_eq!(y.iter().copied().collect::<Vec<_>>(), vec![0.5, 0.25, 0.125, 0.0625, 0.03125]);
        let zeros = Array3::<f64>::zeros((2, 3, 7));
        assert!(readout_forward(zeros.view(), 0.7).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn surrogate_peaks_at_threshold() {
        let p = LifParams::default();
        assert_eq!(p.surrogate(1.0f64), 1.0);
        assert!((p.surrogate(1.04f64) - 1.0 / 4.0).abs() < 1e-12);
    }

    #[test]
    fn parameter_validation() {
        assert!(LifParams { beta: 1.0, ..Default::default() }.validate().is_err());
        assert!(LifParams { v_th: 0.0, ..Default::default() }.validate().is_err());
        assert!(LifParams::default().validate().is_ok());
    }
}
