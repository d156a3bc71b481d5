use ndarray::{Array1, Array2, Array3, ArrayView1, ArrayView3, Axis};

use super::Real;

pub const LN_EPSILON: f64 = 1e-5;

/// Normalized activations and per-(n, t) inverse std, kept for backward.
pub(crate) struct LayerNormCache<S> {
    pub xhat: Array3<S>,
    pub inv_std: Array2<S>,
}

/// Normalizes across channels independently at each (batch, time) position.
pub(crate) fn layer_norm_forward<S: Real>(
    x: ArrayView3<S>,
    gamma: ArrayView1<S>,
    beta: ArrayView1<S>,
) -> (Array3<S>, LayerNormCache<S>) {
    let (n, c, t) = x.dim();
    let inv_c = S::one() / S::of(c as f64);
    let eps = S::of(LN_EPSILON);
    let mut xhat = Array3::zeros((n, c, t));
    let mut inv_std = Array2::zeros((n, t));
    for i in 0..n {
        let xi = x.index_axis(Axis(0), i);
        let mean = xi.sum_axis(Axis(0)) * inv_c;
        let mut centered = &xi - &mean.view().insert_axis(Axis(0));
        let var = centered.mapv(|v| v * v).sum_axis(Axis(0)) * inv_c;
        let inv = var.mapv(|v| S::one() / (v + eps).sqrt());
        centered *= &inv.view().insert_axis(Axis(0));
        xhat.index_axis_mut(Axis(0), i).assign(&centered);
        inv_std.row_mut(i).assign(&inv);
    }
    let y = &xhat * &gamma.insert_axis(Axis(1)) + &beta.insert_axis(Axis(1));
    (y, LayerNormCache { xhat, inv_std })
}

/// Returns (gx, gγ, gβ).
pub(crate) fn layer_norm_backward<S: Real>(
    cache: &LayerNormCache<S>,
    gamma: ArrayView1<S>,
    gy: ArrayView3<S>,
) -> (Array3<S>, Array1<S>, Array1<S>) {
    let (n, c, t) = gy.dim();
    let inv_c = S::one() / S::of(c as f64);
    let ggamma = (&gy * &cache.xhat).sum_axis(Axis(2)).sum_axis(Axis(0));
    let gbeta = gy.sum_axis(Axis(2)).sum_axis(Axis(0));
    let mut gx = Array3::zeros((n, c, t));
    for i in 0..n {
        let gxhat = &gy.index_axis(Axis(0), i) * &gamma.insert_axis(Axis(1));
        let xhat = cache.xhat.index_axis(Axis(0), i);
        let m1 = gxhat.sum_axis(Axis(0)) * inv_c;
        let m2 = (&gxhat * &xhat).sum_axis(Axis(0)) * inv_c;
        let mut g = gxhat - &m1.insert_axis(Axis(0)) - &(&xhat * &m2.insert_axis(Axis(0)));
        g *= &cache.inv_std.row(i).insert_axis(Axis(0));
        gx.index_axis_mut(Axis(0), i).assign(&g);
    }
    (gx, ggamma, gbeta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{arr1, Array3};

    #[test]
    fn two_point_channel_vector() {
        let x = Array3::<f64>::from_shape_vec((1, 2, 1), vec![1.0, 3.0]).unwrap();
        let (y, _) = layer_norm_forward(x.view(), arr1(&[1.0, 1.0]).view(), arr1(&[0.0, 0.0]).view());
        // std of {1, 3} is 1, so the eps term only perturbs at ~5e-6.
        assert!((y[[0, 0, 0]] + 1.0).abs() < 1e-5);
        assert!((y[[0, 1, 0]] - 1.0).abs() < 1e-5);
    }

    #[test]
    fn scale_and_shift_applied_per_channel() {
        let x = Array3::from_shape_vec((1, 2, 2), vec![1.0, 5.0, 3.0, 1.0]).unwrap();
        let (y, cache) = layer_norm_forward(x.view(), arr1(&[2.0, 1.0]).view(), arr1(&[0.5, -0.5]).view());
        for t in 0..2 {
            for c in 0..2 {
                let want = cache.xhat[[0, c, t]] * [2.0, 1.0][c] + [0.5, -0.5][c];
                assert_eq!(y[[0, c, t]], want);
            }
        }
    }
}
