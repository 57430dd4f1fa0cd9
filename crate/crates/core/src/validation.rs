//! Internal validation indices for choosing the number of clusters.

use crate::clustering::ClusterAssignment;
use crate::error::IndexError;
use crate::proximity::{metric, pairwise, squared_euclidean, Diagonal, Metric, ProximityKind, ProximityMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum IndexName {
    CalinskiHarabasz,
    DaviesBouldin,
    Dunn,
    Silhouette,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Maximize,
    Minimize,
}

impl IndexName {
    pub const ALL: [IndexName; 4] = [
        IndexName::CalinskiHarabasz,
        IndexName::DaviesBouldin,
        IndexName::Dunn,
        IndexName::Silhouette,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            IndexName::CalinskiHarabasz => "calinski_harabasz",
            IndexName::DaviesBouldin => "davies_bouldin",
            IndexName::Dunn => "dunn",
            IndexName::Silhouette => "silhouette",
        }
    }

    pub fn short(&self) -> &'static str {
        match self {
            IndexName::CalinskiHarabasz => "ch",
            IndexName::DaviesBouldin => "db",
            IndexName::Dunn => "dunn",
            IndexName::Silhouette => "silhouette",
        }
    }

    /// Accepts both the short (`ch`, `db`) and long names.
    pub fn from_name(s: &str) -> Option<Self> {
        IndexName::ALL
            .into_iter()
            .find(|i| i.name() == s || i.short() == s)
    }

    pub fn direction(&self) -> Direction {
        match self {
            IndexName::DaviesBouldin => Direction::Minimize,
            _ => Direction::Maximize,
        }
    }
}

/// Why an index value is infinite.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Degeneracy {
    /// Zero within-cluster sum of squares (CH).
    PerfectlyCompact,
    /// Two cluster centroids coincide (DB).
    CoincidentCentroids,
    /// Every cluster has zero diameter (Dunn).
    ZeroDiameter,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IndexValue {
    pub name: IndexName,
    pub value: f64,
    pub direction: Direction,
    pub degenerate: Option<Degeneracy>,
}

impl IndexValue {
    fn new(name: IndexName, value: f64) -> Self {
        IndexValue {
            name,
            value,
            direction: name.direction(),
            degenerate: None,
        }
    }

    fn flagged(name: IndexName, value: f64, why: Degeneracy) -> Self {
        IndexValue {
            degenerate: Some(why),
            ..IndexValue::new(name, value)
        }
    }
}

/// Which feature columns are scored and with which distance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    /// Whole feature row with angular distance.
    FullAngular,
    /// Only the two risk columns with squared Euclidean distance.
    RiskEuclidean,
}

impl Variant {
    pub fn name(&self) -> &'static str {
        match self {
            Variant::FullAngular => "full_angular",
            Variant::RiskEuclidean => "risk_euclidean",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "full_angular" => Some(Variant::FullAngular),
            "risk_euclidean" => Some(Variant::RiskEuclidean),
            _ => None,
        }
    }

    pub fn metric(&self) -> Metric {
        match self {
            Variant::FullAngular => Metric::AngularDistance,
            Variant::RiskEuclidean => Metric::SquaredEuclidean,
        }
    }

    /// Columns of a feature row this variant looks at.
    pub fn project(&self, rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
        match self {
            Variant::FullAngular => rows.to_vec(),
            Variant::RiskEuclidean => rows.iter().map(|r| r[..2.min(r.len())].to_vec()).collect(),
        }
    }
}

fn check(a: &ClusterAssignment, rows: usize, k_max: usize) -> Result<(), IndexError> {
    if a.len() != rows {
        return Err(IndexError::LengthMismatch {
            labels: a.len(),
            rows,
        });
    }
    if a.k < 2 || a.k > k_max {
        return Err(IndexError::KOutOfRange {
            k: a.k,
            min: 2,
            max: k_max,
        });
    }
    Ok(())
}

fn centroids(rows: &[Vec<f64>], a: &ClusterAssignment) -> Vec<Vec<f64>> {
    let dim = rows[0].len();
    let mut c = vec![vec![0.0; dim]; a.k];
    let sizes = a.sizes();
    for (x, &l) in rows.iter().zip(&a.labels) {
        for (s, v) in c[l].iter_mut().zip(x) {
            *s += v;
        }
    }
    for (ci, &n) in c.iter_mut().zip(&sizes) {
        ci.iter_mut().for_each(|v| *v /= n as f64);
    }
    c
}

/// Calinski-Harabasz pseudo-F on squared Euclidean distances. Needs `2 <= K < J`.
pub fn calinski_harabasz(rows: &[Vec<f64>], a: &ClusterAssignment) -> Result<IndexValue, IndexError> {
    let j = rows.len();
    check(a, j, j.saturating_sub(1))?;
    let dim = rows[0].len();
    let mut global = vec![0.0; dim];
    for x in rows {
        global.iter_mut().zip(x).for_each(|(g, v)| *g += v / j as f64);
    }
    let c = centroids(rows, a);
    let between: f64 = a
        .sizes()
        .iter()
        .zip(&c)
        .map(|(&n, ci)| n as f64 * squared_euclidean(ci, &global))
        .sum();
    let within: f64 = rows
        .iter()
        .zip(&a.labels)
        .map(|(x, &l)| squared_euclidean(x, &c[l]))
        .sum();
    let name = IndexName::CalinskiHarabasz;
    if within == 0.0 {
        return Ok(IndexValue::flagged(name, f64::INFINITY, Degeneracy::PerfectlyCompact));
    }
    let k = a.k as f64;
    Ok(IndexValue::new(
        name,
        (between / (k - 1.0)) / (within / (j as f64 - k)),
    ))
}

/// Davies-Bouldin with centroids taken as arithmetic means of the rows.
pub fn davies_bouldin(
    rows: &[Vec<f64>],
    a: &ClusterAssignment,
    d: Metric,
) -> Result<IndexValue, IndexError> {
    check(a, rows.len(), rows.len())?;
    let c = centroids(rows, a);
    let sizes = a.sizes();
    let mut spread = vec![0.0; a.k];
    for (x, &l) in rows.iter().zip(&a.labels) {
        spread[l] += metric(x, &c[l], d)? / sizes[l] as f64;
    }
    let name = IndexName::DaviesBouldin;
    let mut total = 0.0;
    for p in 0..a.k {
        let mut worst = f64::NEG_INFINITY;
        for q in (0..a.k).filter(|&q| q != p) {
            let sep = metric(&c[p], &c[q], d)?;
            if sep == 0.0 {
                return Ok(IndexValue::flagged(name, f64::INFINITY, Degeneracy::CoincidentCentroids));
            }
            worst = worst.max((spread[p] + spread[q]) / sep);
        }
        total += worst;
    }
    Ok(IndexValue::new(name, total / a.k as f64))
}

fn check_distance(d: &ProximityMatrix) -> Result<(), IndexError> {
    if d.kind != ProximityKind::Distance {
        return Err(IndexError::NotADistance);
    }
    Ok(())
}

/// Dunn index: smallest between-cluster gap over the largest cluster diameter.
pub fn dunn(d: &ProximityMatrix, a: &ClusterAssignment) -> Result<IndexValue, IndexError> {
    check(a, d.len(), d.len())?;
    check_distance(d)?;
    let mut gap = f64::INFINITY;
    let mut diameter: f64 = 0.0;
    for i in 0..d.len() {
        for j in (i + 1)..d.len() {
            let v = d.get(i, j);
            if a.labels[i] == a.labels[j] {
                diameter = diameter.max(v);
            } else {
                gap = gap.min(v);
            }
        }
    }
    let name = IndexName::Dunn;
    if diameter == 0.0 {
        return Ok(IndexValue::flagged(name, f64::INFINITY, Degeneracy::ZeroDiameter));
    }
    Ok(IndexValue::new(name, gap / diameter))
}

/// Per-point silhouette widths; members of singleton clusters get 0.
pub fn silhouette_widths(d: &ProximityMatrix, a: &ClusterAssignment) -> Vec<f64> {
    let sizes = a.sizes();
    (0..d.len())
        .map(|i| {
            let own = a.labels[i];
            if sizes[own] == 1 {
                return 0.0;
            }
            let mut sums = vec![0.0; a.k];
            for j in (0..d.len()).filter(|&j| j != i) {
                sums[a.labels[j]] += d.get(i, j);
            }
            let within = sums[own] / (sizes[own] - 1) as f64;
            let nearest = (0..a.k)
                .filter(|&c| c != own)
                .map(|c| sums[c] / sizes[c] as f64)
                .fold(f64::INFINITY, f64::min);
            let denom = within.max(nearest);
            if denom == 0.0 {
                0.0
            } else {
                (nearest - within) / denom
            }
        })
        .collect()
}

/// Average silhouette width. Needs `2 <= K < J`.
pub fn silhouette(d: &ProximityMatrix, a: &ClusterAssignment) -> Result<IndexValue, IndexError> {
    check(a, d.len(), d.len().saturating_sub(1))?;
    check_distance(d)?;
    let w = silhouette_widths(d, a);
    Ok(IndexValue::new(
        IndexName::Silhouette,
        w.iter().sum::<f64>() / w.len() as f64,
    ))
}

/// Scores a partition of feature rows under the given index and variant.
///
/// CH always uses squared Euclidean distance on the projected rows.
pub fn evaluate_index(
    index: IndexName,
    rows: &[Vec<f64>],
    a: &ClusterAssignment,
    variant: Variant,
) -> Result<IndexValue, IndexError> {
    if rows.len() != a.len() {
        return Err(IndexError::LengthMismatch {
            labels: a.len(),
            rows: rows.len(),
        });
    }
    let x = variant.project(rows);
    let pairwise_d = || pairwise(a.keys.clone(), &x, variant.metric(), Diagonal::Natural);
    match index {
        IndexName::CalinskiHarabasz => calinski_harabasz(&x, a),
        IndexName::DaviesBouldin => davies_bouldin(&x, a, variant.metric()),
        IndexName::Dunn => {
            check(a, x.len(), x.len())?;
            dunn(&pairwise_d()?, a)
        }
        IndexName::Silhouette => {
            check(a, x.len(), x.len().saturating_sub(1))?;
            silhouette(&pairwise_d()?, a)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clustering::default_keys;
    use crate::proximity::pairwise_unkeyed;
    use proptest::prelude::*;

    fn assign(labels: &[usize]) -> ClusterAssignment {
        ClusterAssignment::new(default_keys(labels.len()), labels, 0.0, 0, 1)
    }

    fn pts(v: &[(f64, f64)]) -> Vec<Vec<f64>> {
        v.iter().map(|&(a, b)| vec![a, b]).collect()
    }

    fn abs_line(xs: &[f64]) -> ProximityMatrix {
        let rows: Vec<Vec<f64>> = xs
            .iter()
            .map(|&x| xs.iter().map(|&y| (x - y).abs()).collect())
            .collect();
        ProximityMatrix::from_rows(ProximityKind::Distance, "abs", default_keys(xs.len()), &rows).unwrap()
    }

    #[test]
    fn ch_two_pairs() {
        let rows = pts(&[(0.0, 0.0), (0.0, 1.0), (10.0, 0.0), (10.0, 1.0)]);
        let a = assign(&[0, 0, 1, 1]);
        // Between: 2 * 25 * 2 = 100 over (K - 1) = 1. Within: 4 * 0.25 = 1 over (J - K) = 2.
        let v = calinski_harabasz(&rows, &a).unwrap();
        assert!((v.value - 200.0).abs() < 1e-9);
        assert_eq!(v.degenerate, None);
    }

    #[test]
    fn ch_zero_within_is_flagged() {
        let rows = pts(&[(0.0, 0.0), (0.0, 0.0), (3.0, 1.0), (3.0, 1.0)]);
        let v = calinski_harabasz(&rows, &assign(&[0, 0, 1, 1])).unwrap();
        assert_eq!(v.value, f64::INFINITY);
        assert_eq!(v.degenerate, Some(Degeneracy::PerfectlyCompact));
    }

    #[test]
    fn ch_k_equals_j_minus_one() {
        // Points 0, 2, 5 on a line with {0, 2} merged.
        let rows = vec![vec![0.0], vec![2.0], vec![5.0]];
        let v = calinski_harabasz(&rows, &assign(&[0, 0, 1])).unwrap();
        // Global mean 7/3. Between: 2 (1 - 7/3)^2 + (5 - 7/3)^2 = 32/9 + 64/9 = 96/9.
        // Within: 1 + 1 = 2 over J - K = 1.
        assert!((v.value - (96.0 / 9.0) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn range_checks() {
        let rows = pts(&[(0.0, 0.0), (1.0, 0.0)]);
        assert!(matches!(
            calinski_harabasz(&rows, &assign(&[0, 1])),
            Err(IndexError::KOutOfRange { .. })
        ));
        assert!(matches!(
            calinski_harabasz(&rows, &assign(&[0, 0])),
            Err(IndexError::KOutOfRange { .. })
        ));
    }

    #[test]
    fn db_tight_far_pairs() {
        let rows = pts(&[(0.0, 0.0), (0.0, 0.2), (10.0, 0.0), (10.0, 0.2)]);
        let v = davies_bouldin(&rows, &assign(&[0, 0, 1, 1]), Metric::SquaredEuclidean).unwrap();
        // Spread per cluster 0.01; centroid separation 100.
        assert!((v.value - 0.02 / 100.0).abs() < 1e-12);
    }

    #[test]
    fn db_coincident_and_singletons() {
        let rows = pts(&[(-1.0, 0.0), (1.0, 0.0), (0.0, -1.0), (0.0, 1.0)]);
        let v = davies_bouldin(&rows, &assign(&[0, 0, 1, 1]), Metric::SquaredEuclidean).unwrap();
        assert_eq!(v.degenerate, Some(Degeneracy::CoincidentCentroids));
        let v = davies_bouldin(&rows, &assign(&[0, 1, 2, 3]), Metric::SquaredEuclidean).unwrap();
        assert_eq!(v.value, 0.0);
    }

    #[test]
    fn dunn_examples() {
        let d = abs_line(&[0.0, 1.0, 10.0, 11.0]);
        assert!((dunn(&d, &assign(&[0, 0, 1, 1])).unwrap().value - 9.0).abs() < 1e-12);
        // Interleaved: {0, 10} and {1, 11}. Gap 1, diameter 10.
        assert!((dunn(&d, &assign(&[0, 1, 0, 1])).unwrap().value - 0.1).abs() < 1e-12);
        let v = dunn(&d, &assign(&[0, 1, 2, 3])).unwrap();
        assert_eq!(v.degenerate, Some(Degeneracy::ZeroDiameter));
    }

    #[test]
    fn silhouette_examples() {
        let d = abs_line(&[0.0, 1.0, 10.0, 11.0]);
        let v = silhouette(&d, &assign(&[0, 0, 1, 1])).unwrap();
        // Point 0: a = 1, b = 10.5. Point 1: a = 1, b = 9.5. Symmetric on the other side.
        let expect = (9.5 / 10.5 + 8.5 / 9.5) / 2.0;
        assert!((v.value - expect).abs() < 1e-12);

        let w = silhouette_widths(&d, &assign(&[0, 0, 1, 2]));
        assert_eq!(w[2], 0.0);
        assert_eq!(w[3], 0.0);

        // Point 1 sits at distance 1 from both its partner and the singleton {2}.
        let d = abs_line(&[0.0, 1.0, 2.0]);
        let w = silhouette_widths(&d, &assign(&[0, 0, 1]));
        assert_eq!(w[1], 0.0);
    }

    #[test]
    fn all_indices_pick_two_blobs() {
        let mut rows = Vec::new();
        for i in 0..10 {
            let t = i as f64 * 0.37;
            rows.push(vec![t.sin() * 0.3, t.cos() * 0.3]);
            rows.push(vec![8.0 + t.cos() * 0.3, 8.0 + t.sin() * 0.3]);
        }
        let d = pairwise_unkeyed(&rows, Metric::SquaredEuclidean, Diagonal::Natural).unwrap();
        for index in IndexName::ALL {
            let mut best = (0, f64::NAN);
            for k in 2..=6 {
                let a = crate::clustering::kmeans(&rows, k, 3, 10, 100).unwrap();
                let v = match index {
                    IndexName::Dunn => dunn(&d, &a),
                    IndexName::Silhouette => silhouette(&d, &a),
                    _ => evaluate_index(index, &rows, &a, Variant::RiskEuclidean),
                }
                .unwrap()
                .value;
                let better = best.1.is_nan()
                    || match index.direction() {
                        Direction::Maximize => v > best.1,
                        Direction::Minimize => v < best.1,
                    };
                if better {
                    best = (k, v);
                }
            }
            assert_eq!(best.0, 2, "{}", index.name());
        }
    }

    #[test]
    fn names_round_trip() {
        for i in IndexName::ALL {
            assert_eq!(IndexName::from_name(i.name()), Some(i));
            assert_eq!(IndexName::from_name(i.short()), Some(i));
        }
        assert_eq!(IndexName::from_name("gap"), None);
        for v in [Variant::FullAngular, Variant::RiskEuclidean] {
            assert_eq!(Variant::from_name(v.name()), Some(v));
        }
    }

    proptest! {
        #[test]
        fn relabel_and_permute_invariance(
            xs in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 6..14),
            seed in 0u64..1000,
        ) {
            let rows = pts(&xs);
            let n = rows.len();
            let labels: Vec<usize> = (0..n).map(|i| (i * 7 + seed as usize) % 3).collect();
            let a = assign(&labels);
            prop_assume!(a.k == 3);
            let perm: Vec<usize> = (0..n).rev().collect();
            let rows_p: Vec<Vec<f64>> = perm.iter().map(|&i| rows[i].clone()).collect();
            let labels_p: Vec<usize> = perm.iter().map(|&i| (labels[i] + 1) % 3).collect();
            let b = assign(&labels_p);
            for index in IndexName::ALL {
                let u = evaluate_index(index, &rows, &a, Variant::RiskEuclidean).unwrap().value;
                let v = evaluate_index(index, &rows_p, &b, Variant::RiskEuclidean).unwrap().value;
                prop_assert!((u - v).abs() <= 1e-9 * u.abs().max(1.0) || (u.is_infinite() && u == v));
            }
            let d = pairwise_unkeyed(&rows, Metric::SquaredEuclidean, Diagonal::Natural).unwrap();
            let s = silhouette_widths(&d, &a);
            prop_assert!(s.iter().all(|w| (-1.0..=1.0).contains(w)));
        }
    }
}
