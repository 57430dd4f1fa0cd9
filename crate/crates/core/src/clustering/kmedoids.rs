use super::ClusterAssignment;
use crate::error::ClusterError;
use crate::proximity::{ProximityKind, ProximityMatrix};

/// Outcome of PAM with the intermediate BUILD cost kept for inspection.
#[derive(Debug, Clone)]
pub struct PamRun {
    pub medoids: Vec<usize>,
    pub labels: Vec<usize>,
    pub build_cost: f64,
    pub cost: f64,
    pub swaps: usize,
}

struct Nearest {
    near: Vec<(usize, f64)>,
    second: Vec<f64>,
}

fn assign(d: &ProximityMatrix, medoids: &[usize]) -> Nearest {
    let n = d.len();
    let mut near = vec![(0, f64::INFINITY); n];
    let mut second = vec![f64::INFINITY; n];
    for j in 0..n {
        for (slot, &m) in medoids.iter().enumerate() {
            let v = d.get(j, m);
            if v < near[j].1 {
                second[j] = near[j].1;
                near[j] = (slot, v);
            } else if v < second[j] {
                second[j] = v;
            }
        }
    }
    Nearest { near, second }
}

fn total(nr: &Nearest) -> f64 {
    nr.near.iter().map(|p| p.1).sum()
}

/// Greedy BUILD: the most central point first, then whichever point lowers
/// the total cost most. Ties go to the lower index.
fn build(d: &ProximityMatrix, k: usize) -> Vec<usize> {
    let n = d.len();
    let mut medoids = Vec::with_capacity(k);
    let first = (0..n)
        .min_by(|&a, &b| {
            let sa: f64 = d.row(a).iter().sum();
            let sb: f64 = d.row(b).iter().sum();
            sa.total_cmp(&sb).then(a.cmp(&b))
        })
        .expect("non-empty");
    medoids.push(first);
    let mut current: Vec<f64> = (0..n).map(|j| d.get(j, first)).collect();
    while medoids.len() < k {
        let mut best = (usize::MAX, f64::NEG_INFINITY);
        for i in (0..n).filter(|i| !medoids.contains(i)) {
            let gain: f64 = (0..n).map(|j| (current[j] - d.get(j, i)).max(0.0)).sum();
            if gain > best.1 {
                best = (i, gain);
            }
        }
        medoids.push(best.0);
        for (j, c) in current.iter_mut().enumerate() {
            *c = c.min(d.get(j, best.0));
        }
    }
    medoids
}

/// Change in total cost from replacing medoid slot `slot` by point `h`.
fn swap_delta(d: &ProximityMatrix, nr: &Nearest, slot: usize, h: usize) -> f64 {
    let mut delta = 0.0;
    for j in 0..d.len() {
        let (s, dj) = nr.near[j];
        let dh = d.get(j, h);
        let new = if s == slot {
            dh.min(nr.second[j])
        } else {
            dj.min(dh)
        };
        delta += new - dj;
    }
    delta
}

/// Partitioning Around Medoids: BUILD followed by best-improvement SWAP
/// until no single medoid/non-medoid exchange lowers the cost.
pub fn pam(d: &ProximityMatrix, k: usize) -> Result<PamRun, ClusterError> {
    let n = d.len();
    if n == 0 {
        return Err(ClusterError::EmptyInput);
    }
    if k == 0 {
        return Err(ClusterError::ZeroK);
    }
    if k > n {
        return Err(ClusterError::KTooLarge { k, available: n });
    }
    if d.kind != ProximityKind::Distance {
        return Err(ClusterError::WrongMatrixKind {
            expected: "dissimilarity",
        });
    }
    let mut medoids = build(d, k);
    let mut nr = assign(d, &medoids);
    let build_cost = total(&nr);
    let mut cost = build_cost;
    let mut swaps = 0;
    loop {
        let tol = 1e-12 * cost.abs().max(1.0);
        let mut best = (0, 0, -tol);
        for slot in 0..k {
            for h in (0..n).filter(|h| !medoids.contains(h)) {
                let delta = swap_delta(d, &nr, slot, h);
                if delta < best.2 {
                    best = (slot, h, delta);
                }
            }
        }
        if best.2 >= -tol {
            break;
        }
        medoids[best.0] = best.1;
        nr = assign(d, &medoids);
        cost = total(&nr);
        swaps += 1;
        if swaps > 10 * n * k {
            break;
        }
    }
    let labels = nr.near.iter().map(|p| p.0).collect();
    Ok(PamRun {
        medoids,
        labels,
        build_cost,
        cost,
        swaps,
    })
}

/// PAM k-medoids. PAM is deterministic; `seed` is recorded only.
pub fn kmedoids(d: &ProximityMatrix, k: usize, seed: u64) -> Result<ClusterAssignment, ClusterError> {
    let run = pam(d, k)?;
    Ok(ClusterAssignment::new(
        d.keys.clone(),
        &run.labels,
        run.cost,
        seed,
        1,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::proximity::{pairwise_unkeyed, Diagonal, Metric};

    fn line(xs: &[f64]) -> ProximityMatrix {
        let rows: Vec<Vec<f64>> = xs.iter().map(|&x| vec![x]).collect();
        pairwise_unkeyed(&rows, Metric::SquaredEuclidean, Diagonal::Natural).unwrap()
    }

    #[test]
    fn k_equals_n_costs_zero() {
        let d = line(&[0.0, 3.0, 7.0, 8.0]);
        let a = kmedoids(&d, 4, 0).unwrap();
        assert_eq!(a.objective, 0.0);
        assert_eq!(a.k, 4);
    }

    #[test]
    fn four_points_on_a_line() {
        // Enumerating all 6 medoid pairs: {0,10}, {0,11}, {1,10}, {1,11} each cost 2;
        // every other pair costs more. Any optimum groups {0,1} and {10,11}.
        let d = line(&[0.0, 1.0, 10.0, 11.0]);
        let a = kmedoids(&d, 2, 0).unwrap();
        assert_eq!(a.labels, vec![0, 0, 1, 1]);
        assert_eq!(a.objective, 2.0);
    }

    #[test]
    fn rejects_similarity_and_large_k() {
        let rows = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let s = pairwise_unkeyed(&rows, Metric::AngularSimilarity, Diagonal::Zero).unwrap();
        assert!(matches!(pam(&s, 1), Err(ClusterError::WrongMatrixKind { .. })));
        let d = line(&[0.0, 1.0]);
        assert_eq!(pam(&d, 3).unwrap_err(), ClusterError::KTooLarge { k: 3, available: 2 });
    }
}
