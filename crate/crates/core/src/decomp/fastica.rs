//! Deflation-mode FastICA with the kurtosis contrast `g(u) = u³`.

use ndarray::{Array1, Array2, ArrayView1};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnmixingModel {
    /// `[sources × whitened components]`, unit-norm orthogonal rows.
    pub unmixing: Array2<f64>,
    pub converged: Vec<bool>,
    pub iterations: Vec<usize>,
}

impl UnmixingModel {
    pub fn source_count(&self) -> usize {
        self.unmixing.nrows()
    }

    /// `ŝ = W y` for whitened `[components × samples]` data.
    pub fn sources(&self, white: &Array2<f64>) -> Array2<f64> {
        self.unmixing.dot(white)
    }

    pub fn converged_rows(&self) -> impl Iterator<Item = usize> + '_ {
        self.converged.iter().enumerate().filter(|(_, &c)| c).map(|(i, _)| i)
    }
}

fn orthonormalize(w: &mut Array1<f64>, found: &[Array1<f64>]) -> bool {
    for b in found {
        let proj = w.dot(b);
        w.scaled_add(-proj, b);
    }
    let norm = w.dot(w).sqrt();
    if !(norm > 1e-12) {
        return false;
    }
    *w /= norm;
    true
}

const CHUNK: usize = 1024;

/// Dot product with four interleaved partial sums (fixed order).
fn dot4(a: &[f32], b: &[f64]) -> f64 {
    let mut p = [0.0; 4];
    let mut ca = a.chunks_exact(4);
    let mut cb = b.chunks_exact(4);
    for (x, y) in (&mut ca).zip(&mut cb) {
        for l in 0..4 {
            p[l] += f64::from(x[l]) * y[l];
        }
    }
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(&x, y)| f64::from(x) * y).sum();
    (p[0] + p[1]) + (p[2] + p[3]) + tail
}

/// `E{y (wᵀy)³}` over the columns of channel-major data `[k × samples]`,
/// processed in sample chunks that stay cache-resident. The data is held
/// in `f32` since every iteration streams all of it; sums run in `f64`.
fn contrast_step(white: &Array2<f32>, w: ArrayView1<f64>) -> Array1<f64> {
    let (k, n) = white.dim();
    let data = white.as_slice().expect("standard layout");
    let mut acc = vec![0.0; k];
    let mut u = vec![0.0; CHUNK];
    for start in (0..n).step_by(CHUNK) {
        let len = CHUNK.min(n - start);
        let u = &mut u[..len];
        u.fill(0.0);
        for (j, &wj) in w.iter().enumerate() {
            let x = &data[j * n + start..j * n + start + len];
            for (ui, &xi) in u.iter_mut().zip(x) {
                *ui += wj * f64::from(xi);
            }
        }
        for ui in u.iter_mut() {
            *ui = *ui * *ui * *ui;
        }
        for (j, a) in acc.iter_mut().enumerate() {
            *a += dot4(&data[j * n + start..j * n + start + len], u);
        }
    }
    Array1::from_iter(acc.into_iter().map(|v| v / n as f64))
}

/// Estimates `n_sources` rows of the unmixing matrix one at a time.
///
/// A row has converged once `|⟨w_new, w_old⟩| > 1 − tol`; rows that hit
/// `max_iter` are kept but flagged. Fails only if no row converges.
pub fn fastica(
    white: &Array2<f64>,
    n_sources: usize,
    tol: f64,
    max_iter: usize,
    seed: u64,
) -> Result<UnmixingModel> {
    let k = white.nrows();
    if n_sources == 0 || n_sources > k {
        return Err(Error::param(format!(
            "n_sources must be in 1..={k}, got {n_sources}"
        )));
    }
    if !(tol > 0.0 && tol < 1.0) || max_iter == 0 {
        return Err(Error::param("need 0 < tol < 1 and max_iter >= 1"));
    }
    let white = &white.mapv(|v| v as f32);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut found: Vec<Array1<f64>> = Vec::with_capacity(n_sources);
    let mut converged = Vec::with_capacity(n_sources);
    let mut iterations = Vec::with_capacity(n_sources);

    for _ in 0..n_sources {
        let mut w = Array1::from_shape_fn(k, |_| StandardNormal.sample(&mut rng));
        while !orthonormalize(&mut w, &found) {
            w = Array1::from_shape_fn(k, |_| StandardNormal.sample(&mut rng));
        }
        let mut done = false;
        let mut iters = 0;
        while iters < max_iter {
            iters += 1;
            let mut next = contrast_step(white, w.view());
            next.scaled_add(-3.0, &w);
            if !orthonormalize(&mut next, &found) {
                break;
            }
            let agreement = next.dot(&w).abs();
            w = next;
            if agreement > 1.0 - tol {
                done = true;
                break;
            }
        }
        found.push(w);
        converged.push(done);
        iterations.push(iters);
    }

    if !converged.iter().any(|&c| c) {
        return Err(Error::NoConvergence {
            requested: n_sources,
            iterations,
        });
    }
    let mut unmixing = Array2::zeros((n_sources, k));
    for (row, w) in found.iter().enumerate() {
        unmixing.row_mut(row).assign(w);
    }
    Ok(UnmixingModel {
        unmixing,
        converged,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decomp::whitening::fit_whitening;
    use rand::Rng;

    /// Sparse spiky sources: mostly zero, occasional large pulses.
    fn spiky_sources(m: usize, n: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((m, n), |_| {
            if rng.random::<f64>() < 0.05 {
                rng.sample::<f64, _>(StandardNormal) * 5.0
            } else {
                rng.sample::<f64, _>(StandardNormal) * 0.1
            }
        })
    }

    fn best_abs_corr(est: &Array2<f64>, truth: &Array2<f64>) -> Vec<f64> {
        truth
            .rows()
            .into_iter()
            .map(|t| {
                est.rows()
                    .into_iter()
                    .map(|e| crate::stats::pearson(&e.to_vec(), &t.to_vec()).unwrap_or(0.0).abs())
                    .fold(0.0, f64::max)
            })
            .collect()
    }

    #[test]
    fn identity_mixing_recovers_sources() {
        let s = spiky_sources(2, 5000, 1);
        let white = fit_whitening(&s).unwrap();
        let y = white.apply(&s).unwrap();
        let model = fastica(&y, 2, 1e-6, 200, 3).unwrap();
        assert!(model.converged.iter().all(|&c| c));
        for c in best_abs_corr(&model.sources(&y), &s) {
            assert!(c > 0.99, "{c}");
        }
    }

    #[test]
    fn rows_are_orthonormal() {
        let s = spiky_sources(3, 4000, 5);
        let y = fit_whitening(&s).unwrap().apply(&s).unwrap();
        let m = fastica(&y, 3, 1e-6, 200, 1).unwrap();
        let g = m.unmixing.dot(&m.unmixing.t());
        for ((i, j), &v) in g.indexed_iter() {
            assert!((v - if i == j { 1.0 } else { 0.0 }).abs() < 1e-9);
        }
    }

    #[test]
    fn rejects_too_many_sources() {
        let s = spiky_sources(2, 1000, 1);
        assert!(fastica(&s, 3, 1e-4, 10, 0).is_err());
    }
}
