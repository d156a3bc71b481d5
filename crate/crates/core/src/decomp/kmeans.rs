//! One-dimensional k-means with k-means++ seeding, and silhouette scoring.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct Clustering {
    pub centroids: Vec<f64>,
    pub labels: Vec<usize>,
    pub inertia: f64,
}

fn nearest(x: f64, centroids: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (k, &c) in centroids.iter().enumerate() {
        let d = (x - c) * (x - c);
        if d < best.1 {
            best = (k, d);
        }
    }
    best
}

fn plus_plus_init(values: &[f64], k: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut centroids = vec![values[rng.random_range(0..values.len())]];
    let mut d2: Vec<f64> = values.iter().map(|&v| (v - centroids[0]).powi(2)).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = values.len() - 1;
            for (i, &w) in d2.iter().enumerate() {
                if target < w {
                    pick = i;
                    break;
                }
                target -= w;
            }
            values[pick]
        } else {
            // All points coincide with a centroid already.
            values[rng.random_range(0..values.len())]
        };
        centroids.push(next);
        for (d, &v) in d2.iter_mut().zip(values) {
            *d = d.min((v - next).powi(2));
        }
    }
    centroids
}

fn lloyd(values: &[f64], mut centroids: Vec<f64>) -> Clustering {
    let k = centroids.len();
    let mut labels = vec![usize::MAX; values.len()];
    for _ in 0..300 {
        let mut changed = false;
        for (l, &v) in labels.iter_mut().zip(values) {
            let (best, _) = nearest(v, &centroids);
            if *l != best {
                *l = best;
                changed = true;
            }
        }
        let mut sums = vec![0.0; k];
        let mut counts = vec![0usize; k];
        for (&l, &v) in labels.iter().zip(values) {
            sums[l] += v;
            counts[l] += 1;
        }
        for c in 0..k {
            if counts[c] > 0 {
                centroids[c] = sums[c] / counts[c] as f64;
            }
        }
        if !changed {
            break;
        }
    }
    let inertia = labels
        .iter()
        .zip(values)
        .map(|(&l, &v)| (v - centroids[l]).powi(2))
        .sum();
    Clustering {
        centroids,
        labels,
        inertia,
    }
}

/// Best-of-`restarts` k-means++ clustering of scalar values.
pub fn kmeans_1d(values: &[f64], k: usize, restarts: usize, seed: u64) -> Clustering {
    assert!(k >= 1 && !values.is_empty());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<Clustering> = None;
    for _ in 0..restarts.max(1) {
        let init = plus_plus_init(values, k, &mut rng);
        let c = lloyd(values, init);
        if best.as_ref().is_none_or(|b| c.inertia < b.inertia) {
            best = Some(c);
        }
    }
    best.expect("at least one restart")
}

/// Mean silhouette of a labelling of scalar values, in O(n log n).
///
/// Points in singleton clusters score 0. When fewer than two clusters are
/// populated the score is 0 (no separation to speak of).
pub fn silhouette_1d(values: &[f64], labels: &[usize], k: usize) -> f64 {
    let mut members: Vec<Vec<f64>> = vec![Vec::new(); k];
    for (&l, &v) in labels.iter().zip(values) {
        members[l].push(v);
    }
    if members.iter().filter(|m| !m.is_empty()).count() < 2 {
        return 0.0;
    }
    let prefix: Vec<(Vec<f64>, Vec<f64>)> = members
        .into_iter()
        .map(|mut m| {
            m.sort_by(f64::total_cmp);
            let mut p = Vec::with_capacity(m.len() + 1);
            p.push(0.0);
            for &v in &m {
                p.push(p.last().unwrap() + v);
            }
            (m, p)
        })
        .collect();
    // Sum of |x - y| over every y in one cluster.
    let dist_sum = |x: f64, c: usize| -> f64 {
        let (sorted, p) = &prefix[c];
        let below = sorted.partition_point(|&y| y <= x);
        let n = sorted.len();
        x * below as f64 - p[below] + (p[n] - p[below]) - x * (n - below) as f64
    };
    let mut total = 0.0;
    for (&l, &x) in labels.iter().zip(values) {
        let own = prefix[l].0.len();
        if own <= 1 {
            continue;
        }
        let a = dist_sum(x, l) / (own - 1) as f64;
        let b = (0..k)
            .filter(|&c| c != l && !prefix[c].0.is_empty())
            .map(|c| dist_sum(x, c) / prefix[c].0.len() as f64)
            .fold(f64::INFINITY, f64::min);
        let denom = a.max(b);
        if denom > 0.0 {
            total += (b - a) / denom;
        }
    }
    total / values.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute_silhouette(values: &[f64], labels: &[usize]) -> f64 {
        let n = values.len();
        let mut total = 0.0;
        for i in 0..n {
            let own: Vec<usize> = (0..n).filter(|&j| j != i && labels[j] == labels[i]).collect();
            if own.is_empty() {
                continue;
            }
            let a = own.iter().map(|&j| (values[i] - values[j]).abs()).sum::<f64>() / own.len() as f64;
            let mut b = f64::INFINITY;
            for c in labels.iter().copied().collect::<std::collections::BTreeSet<_>>() {
                if c == labels[i] {
                    continue;
                }
                let other: Vec<usize> = (0..n).filter(|&j| labels[j] == c).collect();
                b = b.min(other.iter().map(|&j| (values[i] - values[j]).abs()).sum::<f64>() / other.len() as f64);
            }
            let d = a.max(b);
            if d > 0.0 {
                total += (b - a) / d;
            }
        }
        total / n as f64
    }

    /// Exhaustive minimum-SSE 2-partition.
    fn best_partition(values: &[f64]) -> Vec<bool> {
        let n = values.len();
        let mut best = (f64::INFINITY, vec![]);
        for mask in 1u32..(1 << n) - 1 {
            let side: Vec<bool> = (0..n).map(|i| mask & (1 << i) != 0).collect();
            let sse = |flag: bool| {
                let pts: Vec<f64> = (0..n).filter(|&i| side[i] == flag).map(|i| values[i]).collect();
                let m = pts.iter().sum::<f64>() / pts.len() as f64;
                pts.iter().map(|v| (v - m).powi(2)).sum::<f64>()
            };
            let total = sse(true) + sse(false);
            if total < best.0 {
                best = (total, side);
            }
        }
        best.1
    }

    #[test]
    fn four_heights_match_exhaustive_partition() {
        let values = [0.0, 0.1, 0.9, 1.0];
        let c = kmeans_1d(&values, 2, 5, 7);
        let oracle = best_partition(&values);
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(c.labels[i] == c.labels[j], oracle[i] == oracle[j]);
            }
        }
        assert_eq!(c.labels[0], c.labels[1]);
        assert_ne!(c.labels[1], c.labels[2]);
    }

    #[test]
    fn identical_values_have_no_separation() {
        let values = [2.0; 6];
        let c = kmeans_1d(&values, 2, 5, 1);
        assert!(silhouette_1d(&values, &c.labels, 2) <= 0.0);
    }

    proptest! {
        #[test]
        fn fast_silhouette_matches_brute_force(
            pts in prop::collection::vec((0.0f64..10.0, 0usize..3), 2..40)
        ) {
            let values: Vec<f64> = pts.iter().map(|p| p.0).collect();
            let labels: Vec<usize> = pts.iter().map(|p| p.1).collect();
            let populated = labels.iter().collect::<std::collections::BTreeSet<_>>().len();
            let fast = silhouette_1d(&values, &labels, 3);
            if populated >= 2 {
                prop_assert!((fast - brute_silhouette(&values, &labels)).abs() < 1e-9);
            } else {
                prop_assert_eq!(fast, 0.0);
            }
        }
    }
}
