//! Proximity metrics between feature vectors and the pairwise matrices built from them.

use std::f64::consts::PI;
use std::io::Write;

use crate::error::{DataError, ProximityError};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Metric {
    SquaredEuclidean,
    /// `exp(-||x - y||^2 / sigma^2)`.
    Gaussian { sigma: f64 },
    CosineSimilarity,
    /// `1 - cosine`; not a proper metric.
    CosineDissimilarity,
    /// `acos(cosine) / pi`, a proper metric on [0, 1].
    AngularDistance,
    /// `1 - acos(cosine) / pi`.
    AngularSimilarity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProximityKind {
    Distance,
    Similarity,
}

impl Metric {
    pub fn name(&self) -> &'static str {
        match self {
            Metric::SquaredEuclidean => "squared_euclidean",
            Metric::Gaussian { .. } => "gaussian",
            Metric::CosineSimilarity => "cosine_sim",
            Metric::CosineDissimilarity => "cosine_dissim",
            Metric::AngularDistance => "angular_distance",
            Metric::AngularSimilarity => "angular_similarity",
        }
    }

    /// Parses a metric name; `gaussian` requires `sigma`.
    pub fn from_name(name: &str, sigma: Option<f64>) -> Result<Self, ProximityError> {
        Ok(match name {
            "squared_euclidean" => Metric::SquaredEuclidean,
            "gaussian" => match sigma {
                Some(s) if s > 0.0 => Metric::Gaussian { sigma: s },
                _ => return Err(ProximityError::MissingSigma),
            },
            "cosine_sim" => Metric::CosineSimilarity,
            "cosine_dissim" => Metric::CosineDissimilarity,
            "angular_distance" => Metric::AngularDistance,
            "angular_similarity" => Metric::AngularSimilarity,
            other => return Err(ProximityError::UnknownMetric(other.to_string())),
        })
    }

    pub fn kind(&self) -> ProximityKind {
        match self {
            Metric::SquaredEuclidean | Metric::CosineDissimilarity | Metric::AngularDistance => {
                ProximityKind::Distance
            }
            _ => ProximityKind::Similarity,
        }
    }

    pub fn eval(&self, x: &[f64], y: &[f64]) -> Result<f64, ProximityError> {
        metric(x, y, *self)
    }
}

pub fn squared_euclidean(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// Cosine similarity clamped to [-1, 1].
pub fn cosine(x: &[f64], y: &[f64]) -> Result<f64, ProximityError> {
    if x.len() != y.len() {
        return Err(ProximityError::DimensionMismatch(x.len(), y.len()));
    }
    let nx = x.iter().map(|a| a * a).sum::<f64>().sqrt();
    let ny = y.iter().map(|a| a * a).sum::<f64>().sqrt();
    if nx == 0.0 || ny == 0.0 {
        return Err(ProximityError::ZeroVector);
    }
    let dot: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    Ok((dot / (nx * ny)).clamp(-1.0, 1.0))
}

/// `acos(cosine) / pi`, evaluated as `2 atan2(|x^ - y^|, |x^ + y^|) / pi` on the
/// unit vectors, which stays accurate for nearly parallel inputs.
pub fn angular_distance(x: &[f64], y: &[f64]) -> Result<f64, ProximityError> {
    if x.len() != y.len() {
        return Err(ProximityError::DimensionMismatch(x.len(), y.len()));
    }
    let nx = x.iter().map(|a| a * a).sum::<f64>().sqrt();
    let ny = y.iter().map(|a| a * a).sum::<f64>().sqrt();
    if nx == 0.0 || ny == 0.0 {
        return Err(ProximityError::ZeroVector);
    }
    let (mut diff, mut sum) = (0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (u, v) = (a / nx, b / ny);
        diff += (u - v) * (u - v);
        sum += (u + v) * (u + v);
    }
    Ok((2.0 * diff.sqrt().atan2(sum.sqrt()) / PI).clamp(0.0, 1.0))
}

pub fn metric(x: &[f64], y: &[f64], m: Metric) -> Result<f64, ProximityError> {
    if x.len() != y.len() {
        return Err(ProximityError::DimensionMismatch(x.len(), y.len()));
    }
    Ok(match m {
        Metric::SquaredEuclidean => squared_euclidean(x, y),
        Metric::Gaussian { sigma } => {
            if !(sigma > 0.0) {
                return Err(ProximityError::MissingSigma);
            }
            (-squared_euclidean(x, y) / (sigma * sigma)).exp()
        }
        Metric::CosineSimilarity => cosine(x, y)?,
        Metric::CosineDissimilarity => 1.0 - cosine(x, y)?,
        Metric::AngularDistance => angular_distance(x, y)?,
        Metric::AngularSimilarity => 1.0 - angular_distance(x, y)?,
    })
}

/// How the diagonal of a pairwise matrix is filled.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Diagonal {
    /// 0 for distances, the metric's self-similarity for similarities.
    Natural,
    /// Always 0; the form spectral clustering expects.
    Zero,
}

/// Symmetric `J x J` matrix of pairwise proximities, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ProximityMatrix {
    pub kind: ProximityKind,
    pub metric_name: String,
    pub keys: Vec<String>,
    values: Vec<f64>,
    n: usize,
}

impl ProximityMatrix {
    /// Wraps a precomputed square matrix given as rows.
    pub fn from_rows(
        kind: ProximityKind,
        metric_name: impl Into<String>,
        keys: Vec<String>,
        rows: &[Vec<f64>],
    ) -> Result<Self, ProximityError> {
        let n = rows.len();
        if keys.len() != n {
            return Err(ProximityError::DimensionMismatch(keys.len(), n));
        }
        let mut values = Vec::with_capacity(n * n);
        for r in rows {
            if r.len() != n {
                return Err(ProximityError::DimensionMismatch(r.len(), n));
            }
            values.extend_from_slice(r);
        }
        Ok(ProximityMatrix {
            kind,
            metric_name: metric_name.into(),
            keys,
            values,
            n,
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n..(i + 1) * self.n]
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        (0..self.n).all(|i| (0..i).all(|j| (self.get(i, j) - self.get(j, i)).abs() <= tol))
    }

    /// Square CSV with a key header row and a key column.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), DataError> {
        let mut wtr = csv::Writer::from_writer(writer);
        let mut header = vec![String::new()];
        header.extend(self.keys.iter().cloned());
        wtr.write_record(&header)?;
        for i in 0..self.n {
            let mut row = vec![self.keys[i].clone()];
            row.extend(self.row(i).iter().map(|v| v.to_string()));
            wtr.write_record(&row)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Computes the metric for every pair of rows.
pub fn pairwise(
    keys: Vec<String>,
    rows: &[Vec<f64>],
    m: Metric,
    diagonal: Diagonal,
) -> Result<ProximityMatrix, ProximityError> {
    let n = rows.len();
    if n < 2 {
        return Err(ProximityError::TooFewRows(n));
    }
    if keys.len() != n {
        return Err(ProximityError::DimensionMismatch(keys.len(), n));
    }
    let mut values = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..i {
            let v = metric(&rows[i], &rows[j], m)?;
            values[i * n + j] = v;
            values[j * n + i] = v;
        }
    }
    if m.kind() == ProximityKind::Similarity && diagonal == Diagonal::Natural {
        // every supported similarity has self-similarity 1
        for i in 0..n {
            values[i * n + i] = 1.0;
        }
    }
    Ok(ProximityMatrix {
        kind: m.kind(),
        metric_name: m.name().to_string(),
        keys,
        values,
        n,
    })
}

/// Convenience wrapper that numbers the rows `0..n`.
pub fn pairwise_unkeyed(
    rows: &[Vec<f64>],
    m: Metric,
    diagonal: Diagonal,
) -> Result<ProximityMatrix, ProximityError> {
    let keys = (0..rows.len()).map(|i| i.to_string()).collect();
    pairwise(keys, rows, m, diagonal)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn angular_examples() {
        let x = [0.3, -1.2, 4.0];
        assert!(metric(&x, &x, Metric::AngularDistance).unwrap().abs() < 1e-7);
        assert!((metric(&x, &x, Metric::AngularSimilarity).unwrap() - 1.0).abs() < 1e-7);
        assert_eq!(angular_distance(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.5);
        assert_eq!(angular_distance(&[1.0, 0.0], &[-1.0, 0.0]).unwrap(), 1.0);
        assert_eq!(cosine(&[1.0, 0.0], &[-1.0, 0.0]).unwrap(), -1.0);
    }

    #[test]
    fn errors() {
        assert_eq!(
            metric(&[0.0, 0.0], &[1.0, 0.0], Metric::AngularDistance),
            Err(ProximityError::ZeroVector)
        );
        assert_eq!(
            metric(&[1.0], &[1.0, 0.0], Metric::SquaredEuclidean),
            Err(ProximityError::DimensionMismatch(1, 2))
        );
        assert_eq!(
            Metric::from_name("gaussian", None),
            Err(ProximityError::MissingSigma)
        );
    }

    #[test]
    fn pairwise_identical_rows() {
        let rows = vec![vec![1.0, 2.0], vec![1.0, 2.0]];
        let m = pairwise_unkeyed(&rows, Metric::AngularDistance, Diagonal::Natural).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert!(m.get(i, j).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn pairwise_matches_scalar_loop() {
        let rows = vec![vec![1.0, 0.5, -2.0], vec![0.1, 3.0, 1.0], vec![-1.0, -1.0, 0.2]];
        for m in [
            Metric::SquaredEuclidean,
            Metric::Gaussian { sigma: 1.7 },
            Metric::CosineSimilarity,
            Metric::AngularDistance,
            Metric::AngularSimilarity,
        ] {
            let p = pairwise_unkeyed(&rows, m, Diagonal::Natural).unwrap();
            assert!(p.is_symmetric(0.0));
            for i in 0..3 {
                for j in 0..3 {
                    if i != j {
                        assert_eq!(p.get(i, j), metric(&rows[i], &rows[j], m).unwrap());
                    }
                }
            }
        }
    }

    #[test]
    fn diagonal_conventions() {
        let rows = vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]];
        let nat = pairwise_unkeyed(&rows, Metric::AngularSimilarity, Diagonal::Natural).unwrap();
        let zero = pairwise_unkeyed(&rows, Metric::AngularSimilarity, Diagonal::Zero).unwrap();
        let g = pairwise_unkeyed(&rows, Metric::Gaussian { sigma: 1.0 }, Diagonal::Natural).unwrap();
        for i in 0..3 {
            assert!((nat.get(i, i) - 1.0).abs() < 1e-7);
            assert_eq!(zero.get(i, i), 0.0);
            assert_eq!(g.get(i, i), 1.0);
        }
    }

    #[test]
    fn gaussian_wide_sigma_tends_to_one() {
        let rows = vec![vec![0.0, 0.0], vec![3.0, 4.0], vec![-5.0, 1.0]];
        let p = pairwise_unkeyed(&rows, Metric::Gaussian { sigma: 1e8 }, Diagonal::Natural).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert!((p.get(i, j) - 1.0).abs() < 1e-12);
            }
        }
    }

    fn vec3() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-10.0..10.0f64, 3).prop_filter("non-zero", |v| {
            v.iter().map(|x| x * x).sum::<f64>() > 1e-6
        })
    }

    proptest! {
        #[test]
        fn similarity_plus_distance_is_one(x in vec3(), y in vec3()) {
            let d = metric(&x, &y, Metric::AngularDistance).unwrap();
            let s = metric(&x, &y, Metric::AngularSimilarity).unwrap();
            prop_assert!((d + s - 1.0).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&d));
        }

        #[test]
        fn cosine_is_scale_invariant(x in vec3(), y in vec3(), a in 0.01..100.0f64, b in 0.01..100.0f64) {
            let xs: Vec<f64> = x.iter().map(|v| v * a).collect();
            let ys: Vec<f64> = y.iter().map(|v| v * b).collect();
            prop_assert!((cosine(&x, &y).unwrap() - cosine(&xs, &ys).unwrap()).abs() < 1e-9);
        }
    }
}
