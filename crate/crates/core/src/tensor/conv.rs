use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array1, Array2, Array3, ArrayView1, ArrayView2, ArrayView3, Axis};

use super::Real;

/// `cols[j·k + ℓ, t] = x[j, t − dℓ]`, zero for negative time.
fn im2col<S: Real>(x: ArrayView2<S>, k: usize, d: usize, cols: &mut Array2<S>) {
    let (cin, t) = x.dim();
    for j in 0..cin {
        let src = x.row(j);
        for l in 0..k {
            let shift = (d * l).min(t);
            let mut row = cols.row_mut(j * k + l);
            row.slice_mut(s![..shift]).fill(S::zero());
            row.slice_mut(s![shift..]).assign(&src.slice(s![..t - shift]));
        }
    }
}

/// Adjoint of [`im2col`]: scatters column gradients back onto the input.
fn col2im_add<S: Real>(cols: &Array2<S>, k: usize, d: usize, gx: &mut ndarray::ArrayViewMut2<S>) {
    let (cin, t) = gx.dim();
    for j in 0..cin {
        let mut dst = gx.row_mut(j);
        for l in 0..k {
            let shift = d * l;
            if shift >= t {
                break;
            }
            let src = cols.row(j * k + l);
            let mut tail = dst.slice_mut(s![..t - shift]);
            tail += &src.slice(s![shift..]);
        }
    }
}

fn flat_weights<S: Real>(w: ArrayView3<S>) -> Array2<S> {
    let (cout, cin, k) = w.dim();
    w.as_standard_layout()
        .into_owned()
        .into_shape_with_order((cout, cin * k))
        .expect("contiguous weights")
}

/// `y[n, c, t] = b[c] + Σ_j Σ_ℓ w[c, j, ℓ] x[n, j, t − dℓ]` with zero history.
pub fn conv1d_forward<S: Real>(
    x: ArrayView3<S>,
    w: ArrayView3<S>,
    bias: Option<ArrayView1<S>>,
    dilation: usize,
) -> Array3<S> {
    let (n, cin, t) = x.dim();
    let (cout, _, k) = w.dim();
    let w2 = flat_weights(w);
    let mut y = Array3::zeros((n, cout, t));
    let mut cols = Array2::zeros((cin * k, t));
    for i in 0..n {
        im2col(x.index_axis(Axis(0), i), k, dilation, &mut cols);
        let mut yi = y.index_axis_mut(Axis(0), i);
        general_mat_mul(S::one(), &w2, &cols, S::zero(), &mut yi);
        if let Some(b) = bias {
            yi += &b.insert_axis(Axis(1));
        }
    }
    y
}

/// Gradients of [`conv1d_forward`] w.r.t. input (if requested), weights and bias.
pub fn conv1d_backward<S: Real>(
    x: ArrayView3<S>,
    w: ArrayView3<S>,
    dilation: usize,
    gy: ArrayView3<S>,
    need_input: bool,
) -> (Option<Array3<S>>, Array3<S>, Array1<S>) {
    let (n, cin, t) = x.dim();
    let (cout, _, k) = w.dim();
    let w2 = flat_weights(w);
    let mut gw2 = Array2::zeros((cout, cin * k));
    let mut gb = Array1::zeros(cout);
    let mut gx = need_input.then(|| Array3::zeros((n, cin, t)));
    let mut cols = Array2::zeros((cin * k, t));
    let mut gcols = Array2::zeros((cin * k, t));
    for i in 0..n {
        let gyi = gy.index_axis(Axis(0), i);
        im2col(x.index_axis(Axis(0), i), k, dilation, &mut cols);
        general_mat_mul(S::one(), &gyi, &cols.t(), S::one(), &mut gw2);
        gb += &gyi.sum_axis(Axis(1));
        if let Some(gx) = gx.as_mut() {
            general_mat_mul(S::one(), &w2.t(), &gyi, S::zero(), &mut gcols);
            col2im_add(&gcols, k, dilation, &mut gx.index_axis_mut(Axis(0), i));
        }
    }
    let gw = gw2
        .into_shape_with_order((cout, cin, k))
        .expect("weight gradient shape");
    (gx, gw, gb)
}
