use nalgebra::{DMatrix, SymmetricEigen};

use super::kmeans::{distinct_rows, kmeans};
use super::ClusterAssignment;
use crate::error::ClusterError;
use crate::proximity::{ProximityKind, ProximityMatrix};

const KMEANS_MAX_ITER: usize = 300;

/// Row-normalized matrix of the `k` eigenvectors of `I - D^-1/2 S D^-1/2`
/// with the smallest eigenvalues.
pub fn spectral_embedding(s: &ProximityMatrix, k: usize) -> Result<Vec<Vec<f64>>, ClusterError> {
    let n = s.len();
    if s.kind != ProximityKind::Similarity {
        return Err(ClusterError::WrongMatrixKind {
            expected: "similarity",
        });
    }
    let mut inv_sqrt_deg = Vec::with_capacity(n);
    for i in 0..n {
        let deg: f64 = s.row(i).iter().sum();
        if !(deg > 0.0) {
            return Err(ClusterError::IsolatedVertex(i));
        }
        inv_sqrt_deg.push(1.0 / deg.sqrt());
    }
    let lap = DMatrix::from_fn(n, n, |i, j| {
        let m = inv_sqrt_deg[i] * s.get(i, j) * inv_sqrt_deg[j];
        if i == j {
            1.0 - m
        } else {
            -m
        }
    });
    let lap = (&lap + lap.transpose()) * 0.5;
    let eig = SymmetricEigen::try_new(lap, 1e-14, 10_000)
        .ok_or_else(|| ClusterError::EigensolverFailure("no convergence".into()))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]).then(a.cmp(&b)));
    let cols = &order[..k];
    let rows = (0..n)
        .map(|i| {
            let mut r: Vec<f64> = cols.iter().map(|&c| eig.eigenvectors[(i, c)]).collect();
            let norm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                r.iter_mut().for_each(|v| *v /= norm);
            }
            r
        })
        .collect();
    Ok(rows)
}

/// Normalized spectral clustering: eigenvector embedding, then k-means with
/// `kmeans_restarts` restarts on the rows.
pub fn spectral(
    s: &ProximityMatrix,
    k: usize,
    seed: u64,
    kmeans_restarts: usize,
) -> Result<ClusterAssignment, ClusterError> {
    let n = s.len();
    if n == 0 {
        return Err(ClusterError::EmptyInput);
    }
    if k == 0 {
        return Err(ClusterError::ZeroK);
    }
    if k > n {
        return Err(ClusterError::KTooLarge { k, available: n });
    }
    if k == 1 {
        if s.kind != ProximityKind::Similarity {
            return Err(ClusterError::WrongMatrixKind {
                expected: "similarity",
            });
        }
        return Ok(ClusterAssignment::new(s.keys.clone(), &vec![0; n], 0.0, seed, 0));
    }
    let rows = spectral_embedding(s, k)?;
    let available = distinct_rows(&rows).len();
    if available < k {
        return Err(ClusterError::KTooLarge { k, available });
    }
    let mut a = kmeans(&rows, k, seed, kmeans_restarts, KMEANS_MAX_ITER)?;
    a.keys = s.keys.clone();
    Ok(a)
}
