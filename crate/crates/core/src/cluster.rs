//! Spectral clustering of node embeddings.

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::Array2;
use rand::Rng;

use crate::error::{GapError, Result};
use crate::rng::{stream, GapRng};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterAssignment {
    pub labels: Vec<usize>,
    pub k: usize,
}

const DEGREE_EPS: f64 = 1e-12;
const KMEANS_RESTARTS: u64 = 20;
const KMEANS_MAX_ITER: usize = 300;

/// Cosine similarity between rows, negative values clamped to zero.
pub fn cosine_affinity(x: &Array2<f64>) -> Array2<f64> {
    let norms: Vec<f64> = x.outer_iter().map(|r| r.dot(&r).sqrt()).collect();
    let n = x.nrows();
    let gram = x.dot(&x.t());
    Array2::from_shape_fn((n, n), |(i, j)| {
        let denom = norms[i] * norms[j];
        if denom == 0.0 {
            0.0
        } else {
            (gram[[i, j]] / denom).max(0.0)
        }
    })
}

/// Symmetric normalized Laplacian `I - D^-1/2 W D^-1/2`.
pub fn normalized_laplacian(w: &Array2<f64>) -> Array2<f64> {
    let n = w.nrows();
    let inv_sqrt: Vec<f64> = w
        .outer_iter()
        .map(|r| 1.0 / (r.sum() + DEGREE_EPS).sqrt())
        .collect();
    Array2::from_shape_fn((n, n), |(i, j)| {
        let id = if i == j { 1.0 } else { 0.0 };
        id - inv_sqrt[i] * w[[i, j]] * inv_sqrt[j]
    })
}

/// Clusters the rows of `x` into `k` groups.
pub fn spectral_clustering(x: &Array2<f64>, k: usize, seed: u64) -> Result<ClusterAssignment> {
    let n = x.nrows();
    if k == 0 {
        return Err(GapError::arg("k must be at least 1"));
    }
    if k > n {
        return Err(GapError::arg(format!("k={k} exceeds the {n} points")));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(GapError::numeric("clustering input", "non-finite entry"));
    }
    if k == 1 {
        return Ok(ClusterAssignment { labels: vec![0; n], k });
    }
    let lap = normalized_laplacian(&cosine_affinity(x));
    let dm = DMatrix::from_fn(n, n, |i, j| 0.5 * (lap[[i, j]] + lap[[j, i]]));
    let eig = SymmetricEigen::new(dm);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]).then(a.cmp(&b)));

    let mut spectral = Array2::from_shape_fn((n, k), |(i, c)| eig.eigenvectors[(i, order[c])]);
    for mut row in spectral.outer_iter_mut() {
        let norm = row.dot(&row).sqrt();
        if norm > 0.0 {
            row /= norm;
        }
    }
    let labels = kmeans(&spectral, k, seed)?;
    Ok(ClusterAssignment { labels, k })
}

fn sq_dist(a: ndarray::ArrayView1<f64>, b: ndarray::ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn kmeans_pp_init(x: &Array2<f64>, k: usize, rng: &mut GapRng) -> Array2<f64> {
    let n = x.nrows();
    let mut centers = Array2::zeros((k, x.ncols()));
    let first = rng.random_range(0..n);
    centers.row_mut(0).assign(&x.row(first));
    let mut d2: Vec<f64> = x.outer_iter().map(|r| sq_dist(r, centers.row(0))).collect();
    for c in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total <= 0.0 {
            rng.random_range(0..n)
        } else {
            let mut target = rng.random::<f64>() * total;
            let mut idx = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if target < w {
                    idx = i;
                    break;
                }
                target -= w;
            }
            idx
        };
        centers.row_mut(c).assign(&x.row(pick));
        for (i, r) in x.outer_iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(r, centers.row(c)));
        }
    }
    centers
}

fn lloyd(x: &Array2<f64>, mut centers: Array2<f64>) -> (Vec<usize>, f64) {
    let (n, k) = (x.nrows(), centers.nrows());
    let mut labels = vec![usize::MAX; n];
    let mut inertia = 0.0;
    for _ in 0..KMEANS_MAX_ITER {
        let mut changed = false;
        inertia = 0.0;
        for (i, r) in x.outer_iter().enumerate() {
            let (mut best, mut best_d) = (0, f64::INFINITY);
            for c in 0..k {
                let d = sq_dist(r, centers.row(c));
                if d < best_d {
                    best = c;
                    best_d = d;
                }
            }
            inertia += best_d;
            if labels[i] != best {
                labels[i] = best;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sums = Array2::<f64>::zeros(centers.dim());
        let mut counts = vec![0usize; k];
        for (i, r) in x.outer_iter().enumerate() {
            sums.row_mut(labels[i]).scaled_add(1.0, &r);
            counts[labels[i]] += 1;
        }
        for (c, &count) in counts.iter().enumerate() {
            // empty clusters keep their previous center
            if count > 0 {
                centers.row_mut(c).assign(&(&sums.row(c) / count as f64));
            }
        }
    }
    (labels, inertia)
}

/// k-means with k-means++ seeding; best of several seeded restarts by inertia.
pub fn kmeans(x: &Array2<f64>, k: usize, seed: u64) -> Result<Vec<usize>> {
    if k == 0 || k > x.nrows() {
        return Err(GapError::arg(format!("invalid k={k} for {} points", x.nrows())));
    }
    let mut best: Option<(f64, Vec<usize>)> = None;
    for restart in 0..KMEANS_RESTARTS {
        let mut rng = stream(seed, &[restart]);
        let centers = kmeans_pp_init(x, k, &mut rng);
        let (labels, inertia) = lloyd(x, centers);
        if best.as_ref().is_none_or(|(b, _)| inertia < *b) {
            best = Some((inertia, labels));
        }
    }
    Ok(best.expect("at least one restart").1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn single_cluster() {
        let x = Array2::from_shape_fn((5, 3), |(i, j)| (i * 3 + j) as f64);
        let a = spectral_clustering(&x, 1, 0).unwrap();
        assert_eq!(a.labels, vec![0; 5]);
        assert!(spectral_clustering(&x, 6, 0).is_err());
        assert!(spectral_clustering(&x, 0, 0).is_err());
    }

    #[test]
    fn duplicate_rows_share_a_cluster() {
        let mut rng = crate::rng::seeded(4);
        let mut x = Array2::from_shape_fn((30, 5), |_| rng.random_range(-1.0..1.0));
        let row = x.row(3).to_owned();
        x.row_mut(17).assign(&row);
        let a = spectral_clustering(&x, 4, 9).unwrap();
        assert_eq!(a.labels[3], a.labels[17]);
    }

    #[test]
    fn zero_rows_are_tolerated() {
        let mut x = Array2::from_shape_fn((10, 3), |(i, j)| ((i + 1) * (j + 2)) as f64 % 5.0 + 0.5);
        x.row_mut(2).fill(0.0);
        let a = spectral_clustering(&x, 2, 1).unwrap();
        assert_eq!(a.labels.len(), 10);
    }

    #[test]
    fn deterministic_under_seed() {
        let mut rng = crate::rng::seeded(8);
        let x = Array2::from_shape_fn((40, 6), |_| rng.random_range(-1.0..1.0));
        assert_eq!(spectral_clustering(&x, 5, 3).unwrap(), spectral_clustering(&x, 5, 3).unwrap());
    }
}
