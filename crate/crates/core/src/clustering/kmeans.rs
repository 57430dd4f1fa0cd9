use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{default_keys, ClusterAssignment};
use crate::error::ClusterError;
use crate::proximity::squared_euclidean;
use crate::rng::derive_seed;

/// One Lloyd run from fixed starting centroids.
#[derive(Debug, Clone)]
pub struct LloydRun {
    pub labels: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    pub objective: f64,
    /// Within-cluster sum of squares after every assignment/update step.
    pub trace: Vec<f64>,
}

fn nearest(x: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, ctr) in centroids.iter().enumerate() {
        let d = squared_euclidean(x, ctr);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn update_centroids(rows: &[Vec<f64>], labels: &[usize], k: usize) -> (Vec<Vec<f64>>, Vec<usize>) {
    let dim = rows[0].len();
    let mut sums = vec![vec![0.0; dim]; k];
    let mut counts = vec![0usize; k];
    for (x, &l) in rows.iter().zip(labels) {
        counts[l] += 1;
        for (s, v) in sums[l].iter_mut().zip(x) {
            *s += v;
        }
    }
    for (s, &c) in sums.iter_mut().zip(&counts) {
        if c > 0 {
            s.iter_mut().for_each(|v| *v /= c as f64);
        }
    }
    (sums, counts)
}

fn wcss(rows: &[Vec<f64>], labels: &[usize], centroids: &[Vec<f64>]) -> f64 {
    rows.iter()
        .zip(labels)
        .map(|(x, &l)| squared_euclidean(x, &centroids[l]))
        .sum()
}

/// Lloyd iterations from `init` centroids until labels stop changing.
///
/// A cluster that empties takes the point farthest from its own centroid
/// among clusters with at least two members.
pub fn lloyd(rows: &[Vec<f64>], init: Vec<Vec<f64>>, max_iter: usize) -> LloydRun {
    let k = init.len();
    let mut centroids = init;
    let mut labels: Vec<usize> = rows.iter().map(|x| nearest(x, &centroids).0).collect();
    let mut trace = Vec::new();
    for iter in 0..max_iter.max(1) {
        if iter > 0 {
            let new_labels: Vec<usize> = rows.iter().map(|x| nearest(x, &centroids).0).collect();
            if new_labels == labels {
                break;
            }
            labels = new_labels;
        }
        let (mut c, mut counts) = update_centroids(rows, &labels, k);
        while let Some(empty) = counts.iter().position(|&n| n == 0) {
            let donor = (0..rows.len())
                .filter(|&i| counts[labels[i]] > 1)
                .max_by(|&a, &b| {
                    let da = squared_euclidean(&rows[a], &c[labels[a]]);
                    let db = squared_euclidean(&rows[b], &c[labels[b]]);
                    da.total_cmp(&db).then(b.cmp(&a))
                });
            let Some(i) = donor else { break };
            labels[i] = empty;
            (c, counts) = update_centroids(rows, &labels, k);
        }
        centroids = c;
        let obj = wcss(rows, &labels, &centroids);
        debug_assert!(
            trace
                .last()
                .is_none_or(|&prev: &f64| obj <= prev + 1e-9 * prev.abs().max(1.0)),
            "k-means objective increased"
        );
        trace.push(obj);
    }
    let objective = *trace.last().unwrap_or(&wcss(rows, &labels, &centroids));
    LloydRun {
        labels,
        centroids,
        objective,
        trace,
    }
}

pub(crate) fn distinct_rows(rows: &[Vec<f64>]) -> Vec<usize> {
    let mut out: Vec<usize> = Vec::new();
    for (i, r) in rows.iter().enumerate() {
        if !out.iter().any(|&j| rows[j] == *r) {
            out.push(i);
        }
    }
    out
}

/// Best of `restarts` Lloyd runs, each started from `k` distinct rows drawn uniformly.
pub fn kmeans(
    rows: &[Vec<f64>],
    k: usize,
    seed: u64,
    restarts: usize,
    max_iter: usize,
) -> Result<ClusterAssignment, ClusterError> {
    if rows.is_empty() {
        return Err(ClusterError::EmptyInput);
    }
    if k == 0 {
        return Err(ClusterError::ZeroK);
    }
    let distinct = distinct_rows(rows);
    if k > distinct.len() {
        return Err(ClusterError::KTooLarge {
            k,
            available: distinct.len(),
        });
    }
    let restarts = restarts.max(1);
    let mut best: Option<LloydRun> = None;
    for r in 0..restarts {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[r as u64]));
        let init: Vec<Vec<f64>> = distinct
            .choose_multiple(&mut rng, k)
            .map(|&i| rows[i].clone())
            .collect();
        let run = lloyd(rows, init, max_iter);
        if best.as_ref().is_none_or(|b| run.objective < b.objective) {
            best = Some(run);
        }
    }
    let best = best.expect("at least one restart");
    Ok(ClusterAssignment::new(
        default_keys(rows.len()),
        &best.labels,
        best.objective,
        seed,
        restarts,
    ))
}
