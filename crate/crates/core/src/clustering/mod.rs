//! Combinatorial clustering algorithms behind a common result type.

mod hca;
mod kmeans;
mod kmedoids;
mod spectral;

pub use hca::{hca, hca_merges, Linkage, Merge};
pub use kmeans::{kmeans, lloyd, LloydRun};
pub use kmedoids::{kmedoids, pam, PamRun};
pub use spectral::{spectral, spectral_embedding};

/// A partition of keyed items into `k` clusters.
///
/// Labels are 0-based and canonical: cluster ids are numbered by first
/// appearance in key order, so two equal partitions compare equal.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterAssignment {
    pub keys: Vec<String>,
    pub labels: Vec<usize>,
    pub k: usize,
    /// Algorithm-specific objective (lower is better for every algorithm here).
    pub objective: f64,
    pub seed: u64,
    pub restarts: usize,
}

impl ClusterAssignment {
    pub fn new(
        keys: Vec<String>,
        labels: &[usize],
        objective: f64,
        seed: u64,
        restarts: usize,
    ) -> Self {
        let (labels, k) = canonicalize(labels);
        ClusterAssignment {
            keys,
            labels,
            k,
            objective,
            seed,
            restarts,
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Members of each cluster, in key order.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.k];
        for (i, &l) in self.labels.iter().enumerate() {
            out[l].push(i);
        }
        out
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut out = vec![0; self.k];
        for &l in &self.labels {
            out[l] += 1;
        }
        out
    }

    /// CSV rows `key,cluster` with 1-based cluster ids.
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<(), crate::DataError> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["key", "cluster"])?;
        for (key, l) in self.keys.iter().zip(&self.labels) {
            wtr.write_record([key.clone(), (l + 1).to_string()])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Relabels by first appearance; returns the labels and the cluster count.
pub fn canonicalize(labels: &[usize]) -> (Vec<usize>, usize) {
    let mut map = std::collections::HashMap::new();
    let out = labels
        .iter()
        .map(|l| {
            let next = map.len();
            *map.entry(*l).or_insert(next)
        })
        .collect();
    (out, map.len())
}

pub(crate) fn default_keys(n: usize) -> Vec<String> {
    (0..n).map(|i| i.to_string()).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Algorithm {
    KMeans,
    KMedoids,
    Spectral,
    Hca(Linkage),
}

impl Algorithm {
    pub fn name(&self) -> String {
        match self {
            Algorithm::KMeans => "kmeans".into(),
            Algorithm::KMedoids => "kmedoids".into(),
            Algorithm::Spectral => "spectral".into(),
            Algorithm::Hca(l) => format!("hca_{}", l.name()),
        }
    }

    /// Parses `kmeans`, `kmedoids`, `spectral`, `hca` (complete linkage) or `hca_<linkage>`.
    pub fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "kmeans" => Algorithm::KMeans,
            "kmedoids" | "pam" => Algorithm::KMedoids,
            "spectral" => Algorithm::Spectral,
            "hca" => Algorithm::Hca(Linkage::Complete),
            other => Algorithm::Hca(Linkage::from_name(other.strip_prefix("hca_")?)?),
        })
    }
}
