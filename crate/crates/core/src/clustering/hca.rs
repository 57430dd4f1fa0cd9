use super::ClusterAssignment;
use crate::error::ClusterError;
use crate::proximity::{ProximityKind, ProximityMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Linkage {
    Single,
    Complete,
    Average,
}

impl Linkage {
    pub fn name(&self) -> &'static str {
        match self {
            Linkage::Single => "single",
            Linkage::Complete => "complete",
            Linkage::Average => "average",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "single" => Some(Linkage::Single),
            "complete" => Some(Linkage::Complete),
            "average" => Some(Linkage::Average),
            _ => None,
        }
    }
}

/// One agglomeration step. Clusters are named by their smallest member.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Merge {
    pub left: usize,
    pub right: usize,
    pub height: f64,
}

/// Agglomerates from singletons until `k` clusters remain.
///
/// Returns the merges in order and the final cluster of every point.
/// Ties go to the lexicographically smallest pair of cluster names.
pub fn hca_merges(
    d: &ProximityMatrix,
    k: usize,
    linkage: Linkage,
) -> Result<(Vec<Merge>, Vec<usize>), ClusterError> {
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
    let mut dist: Vec<Vec<f64>> = (0..n).map(|i| d.row(i).to_vec()).collect();
    let mut size = vec![1usize; n];
    let mut active = vec![true; n];
    let mut owner: Vec<usize> = (0..n).collect();
    let mut merges = Vec::with_capacity(n - k);
    for _ in 0..(n - k) {
        let mut best = (usize::MAX, usize::MAX, f64::INFINITY);
        for a in (0..n).filter(|&a| active[a]) {
            for b in ((a + 1)..n).filter(|&b| active[b]) {
                if dist[a][b] < best.2 {
                    best = (a, b, dist[a][b]);
                }
            }
        }
        let (a, b, h) = best;
        merges.push(Merge {
            left: a,
            right: b,
            height: h,
        });
        for c in (0..n).filter(|&c| active[c] && c != a && c != b) {
            let (da, db) = (dist[a][c], dist[b][c]);
            let v = match linkage {
                Linkage::Single => da.min(db),
                Linkage::Complete => da.max(db),
                Linkage::Average => {
                    (size[a] as f64 * da + size[b] as f64 * db) / (size[a] + size[b]) as f64
                }
            };
            dist[a][c] = v;
            dist[c][a] = v;
        }
        size[a] += size[b];
        active[b] = false;
        for o in owner.iter_mut() {
            if *o == b {
                *o = a;
            }
        }
    }
    Ok((merges, owner))
}

/// Agglomerative clustering cut to exactly `k` clusters.
pub fn hca(d: &ProximityMatrix, k: usize, linkage: Linkage) -> Result<ClusterAssignment, ClusterError> {
    let (merges, owner) = hca_merges(d, k, linkage)?;
    let height = merges.last().map_or(0.0, |m| m.height);
    Ok(ClusterAssignment::new(d.keys.clone(), &owner, height, 0, 1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clustering::default_keys;
    use crate::proximity::{pairwise_unkeyed, Diagonal, Metric};

    fn abc() -> ProximityMatrix {
        let rows = vec![
            vec![0.0, 1.0, 3.0],
            vec![1.0, 0.0, 2.0],
            vec![3.0, 2.0, 0.0],
        ];
        ProximityMatrix::from_rows(ProximityKind::Distance, "t", default_keys(3), &rows).unwrap()
    }

    #[test]
    fn identity_when_k_is_n() {
        let a = hca(&abc(), 3, Linkage::Complete).unwrap();
        assert_eq!(a.labels, vec![0, 1, 2]);
    }

    #[test]
    fn complete_linkage_three_points() {
        let a = hca(&abc(), 2, Linkage::Complete).unwrap();
        assert_eq!(a.labels, vec![0, 0, 1]);
        let (m, _) = hca_merges(&abc(), 1, Linkage::Complete).unwrap();
        assert_eq!(m[0], Merge { left: 0, right: 1, height: 1.0 });
        assert_eq!(m[1], Merge { left: 0, right: 2, height: 3.0 });
    }

    #[test]
    fn single_and_complete_differ_on_a_chain() {
        // 0-1-2-3 with unit gaps. Both merge {0,1} first (tie, smallest pair).
        // Single: {0,1}-2 and 2-3 tie at 1; smallest pair joins 2 to {0,1}.
        // Complete: {0,1}-2 is 2, 2-3 is 1, so {2,3} forms.
        let rows: Vec<Vec<f64>> = (0..4).map(|i| vec![i as f64]).collect();
        let d = pairwise_unkeyed(&rows, Metric::SquaredEuclidean, Diagonal::Natural).unwrap();
        let single = hca(&d, 2, Linkage::Single).unwrap();
        let complete = hca(&d, 2, Linkage::Complete).unwrap();
        assert_eq!(single.labels, vec![0, 0, 0, 1]);
        assert_eq!(complete.labels, vec![0, 0, 1, 1]);
    }

    #[test]
    fn heights_non_decreasing() {
        let rows: Vec<Vec<f64>> = (0..15)
            .map(|i| vec![((i * 7919) % 31) as f64 * 0.3, ((i * 104729) % 17) as f64])
            .collect();
        let d = pairwise_unkeyed(&rows, Metric::SquaredEuclidean, Diagonal::Natural).unwrap();
        for l in [Linkage::Complete, Linkage::Average, Linkage::Single] {
            let (m, _) = hca_merges(&d, 1, l).unwrap();
            assert!(m.windows(2).all(|w| w[1].height >= w[0].height - 1e-12));
        }
    }
}
