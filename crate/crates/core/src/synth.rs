//! Synthetic two-level portfolios with planted groups.
//!
//! Level-1 categories belong to true groups that share a frequency effect,
//! a damage-rate effect and an embedding prototype. Inside every level-1
//! category, children belong to child groups whose effects and prototypes
//! are shared across the whole true level-1 group.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, LogNormal, Normal, Poisson};

use crate::embeddings::EmbeddingTable;
use crate::error::DataError;
use crate::model::{CategoryPath, HierarchySpec, Portfolio, PolicyRecord};

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorSpec {
    pub seed: u64,
    pub level1_groups: usize,
    pub level1_per_group: usize,
    pub level2_groups: usize,
    pub level2_per_group: usize,
    /// Spacing of planted log-severity effects.
    pub damage_scale: f64,
    /// Spacing of planted log-frequency effects.
    pub frequency_scale: f64,
    /// Child effects are this fraction of the level-1 spacing.
    pub child_effect_ratio: f64,
    pub companies_per_category: usize,
    pub years: usize,
    pub first_year: i32,
    /// Years at the end held out as test data.
    pub test_years: usize,
    pub mass_log_mean: f64,
    pub mass_log_sd: f64,
    pub base_frequency: f64,
    pub mean_severity: f64,
    pub embedding_dim: usize,
    /// Per-coordinate noise around the prototype, one entry per pseudo-encoder.
    pub encoder_noise: Vec<f64>,
}

impl Default for GeneratorSpec {
    fn default() -> Self {
        GeneratorSpec {
            seed: 20240501,
            level1_groups: 4,
            level1_per_group: 6,
            level2_groups: 3,
            level2_per_group: 2,
            damage_scale: 0.4,
            frequency_scale: 0.4,
            child_effect_ratio: 1.0,
            companies_per_category: 8,
            years: 8,
            first_year: 2015,
            test_years: 3,
            mass_log_mean: 100f64.ln(),
            mass_log_sd: 0.7,
            base_frequency: 0.002,
            mean_severity: 1.0,
            embedding_dim: 16,
            encoder_noise: vec![0.25, 0.5],
        }
    }
}

impl GeneratorSpec {
    pub fn validate(&self) -> Result<(), DataError> {
        let counts = [
            self.level1_groups,
            self.level1_per_group,
            self.level2_groups,
            self.level2_per_group,
            self.companies_per_category,
            self.years,
            self.embedding_dim,
        ];
        let scales = [
            self.damage_scale,
            self.frequency_scale,
            self.child_effect_ratio,
            self.mass_log_sd,
        ];
        let bad = |reason: &str| {
            Err(DataError::MalformedRow {
                row: 0,
                reason: reason.to_string(),
            })
        };
        if counts.contains(&0) {
            return bad("generator counts must be at least 1");
        }
        if scales.iter().any(|s| !(*s >= 0.0)) || self.encoder_noise.iter().any(|s| !(*s >= 0.0)) {
            return bad("generator scales must be non-negative");
        }
        if self.encoder_noise.is_empty() {
            return bad("at least one pseudo-encoder is required");
        }
        if !(self.base_frequency > 0.0 && self.mean_severity > 0.0) {
            return bad("base frequency and severity must be positive");
        }
        if self.test_years >= self.years {
            return bad("test years must leave at least one training year");
        }
        if self.level1_groups * self.level1_per_group > 99 || self.level2_groups * self.level2_per_group > 99 {
            return bad("at most 99 categories per parent");
        }
        Ok(())
    }

    pub fn split_year(&self) -> Option<i32> {
        (self.test_years > 0).then(|| self.first_year + (self.years - self.test_years) as i32)
    }
}

/// Planted groups, indexed like the hierarchy levels.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    /// True group of every level-1 node.
    pub level1: Vec<usize>,
    /// True group of every level-2 node, numbered `level1 group * level2_groups + child group`.
    pub level2: Vec<usize>,
    /// Planted log-frequency and log-severity effect per level-2 node.
    pub leaf_effects: Vec<(f64, f64)>,
}

#[derive(Debug, Clone)]
pub struct Synthetic {
    pub portfolio: Portfolio,
    pub embeddings: Vec<EmbeddingTable>,
    pub truth: GroundTruth,
}

/// Evenly spaced centred values times `scale`, in random order.
fn spaced_effects(n: usize, scale: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mid = (n as f64 - 1.0) / 2.0;
    let mut v: Vec<f64> = (0..n).map(|i| (i as f64 - mid) * scale).collect();
    v.shuffle(rng);
    v
}

fn gaussian_vec(dim: usize, sd: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = Normal::new(0.0, 1.0).expect("unit normal");
    (0..dim).map(|_| sd * n.sample(rng)).collect()
}

fn noisy(proto: &[f64], sd: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut v: Vec<f64> = proto.iter().zip(gaussian_vec(proto.len(), sd, rng)).map(|(p, e)| p + e).collect();
    if v.iter().all(|&x| x == 0.0) {
        v[0] = 1.0;
    }
    v
}

pub fn generate(spec: &GeneratorSpec) -> Result<Synthetic, DataError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let g1 = spec.level1_groups;
    let g2 = spec.level2_groups;
    let n1 = g1 * spec.level1_per_group;
    let per_parent = g2 * spec.level2_per_group;

    let f1 = spaced_effects(g1, spec.frequency_scale, &mut rng);
    let d1 = spaced_effects(g1, spec.damage_scale, &mut rng);
    let child_f: Vec<Vec<f64>> = (0..g1)
        .map(|_| spaced_effects(g2, spec.frequency_scale * spec.child_effect_ratio, &mut rng))
        .collect();
    let child_d: Vec<Vec<f64>> = (0..g1)
        .map(|_| spaced_effects(g2, spec.damage_scale * spec.child_effect_ratio, &mut rng))
        .collect();
    let dim = spec.embedding_dim;
    let proto1: Vec<Vec<f64>> = (0..g1).map(|_| gaussian_vec(dim, 1.0, &mut rng)).collect();
    let proto2: Vec<Vec<Vec<f64>>> = (0..g1)
        .map(|_| (0..g2).map(|_| gaussian_vec(dim, 1.0, &mut rng)).collect())
        .collect();

    // Level-1 true groups in random code order.
    let mut truth1: Vec<usize> = (0..n1).map(|i| i / spec.level1_per_group).collect();
    truth1.shuffle(&mut rng);

    let mut leaves = Vec::with_capacity(n1 * per_parent);
    let mut truth2 = Vec::with_capacity(n1 * per_parent);
    let mut leaf_effects = Vec::with_capacity(n1 * per_parent);
    for (j, &t1) in truth1.iter().enumerate() {
        let mut child_groups: Vec<usize> = (0..per_parent).map(|i| i / spec.level2_per_group).collect();
        child_groups.shuffle(&mut rng);
        let c1 = format!("{:02}", j + 1);
        for (k, &t2) in child_groups.iter().enumerate() {
            let c2 = format!("{c1}{:02}", k + 1);
            leaves.push((
                vec![c1.clone(), c2.clone()],
                vec![format!("synthetic sector {c1}"), format!("synthetic activity {c2}")],
            ));
            truth2.push(t1 * g2 + t2);
            leaf_effects.push((f1[t1] + child_f[t1][t2], d1[t1] + child_d[t1][t2]));
        }
    }
    let hierarchy = HierarchySpec::from_leaves(vec!["section".into(), "activity".into()], &leaves)?;

    let mut tables: Vec<EmbeddingTable> = spec
        .encoder_noise
        .iter()
        .enumerate()
        .map(|(e, _)| EmbeddingTable::new(format!("enc{}", e + 1), dim))
        .collect();
    for (e, &sd) in spec.encoder_noise.iter().enumerate() {
        for (j, node) in hierarchy.level(0).iter().enumerate() {
            let v = noisy(&proto1[truth1[j]], sd, &mut rng);
            tables[e].insert(node.code.clone(), v)?;
        }
        for (h, node) in hierarchy.level(1).iter().enumerate() {
            let (t1, t2) = (truth2[h] / g2, truth2[h] % g2);
            let v = noisy(&proto2[t1][t2], sd, &mut rng);
            tables[e].insert(node.code.clone(), v)?;
        }
    }

    let base_mass = LogNormal::new(spec.mass_log_mean, spec.mass_log_sd).expect("valid lognormal");
    let yearly = LogNormal::new(0.0, 0.1).expect("valid lognormal");
    let mut records = Vec::new();
    for (h, node) in hierarchy.level(1).iter().enumerate() {
        let leaf = hierarchy.find(1, &node.code).expect("leaf exists");
        debug_assert_eq!(leaf, h);
        let path = CategoryPath::new(leaves[h].0.clone());
        let (f, d) = leaf_effects[h];
        let sev_scale = spec.mean_severity * d.exp() / 2.0;
        for c in 0..spec.companies_per_category {
            let company = format!("C{}{:03}", node.code, c + 1);
            let m0: f64 = base_mass.sample(&mut rng);
            for y in 0..spec.years {
                let w = m0 * yearly.sample(&mut rng);
                let lambda = w * spec.base_frequency * f.exp();
                let n = if lambda > 0.0 {
                    Poisson::new(lambda).expect("positive rate").sample(&mut rng) as u64
                } else {
                    0
                };
                let z = if n > 0 {
                    Gamma::new(2.0 * n as f64, sev_scale).expect("valid gamma").sample(&mut rng)
                } else {
                    0.0
                };
                records.push(PolicyRecord {
                    company_id: company.clone(),
                    year: spec.first_year + y as i32,
                    path: path.clone(),
                    claim_amount: z,
                    claim_count: n,
                    salary_mass: w,
                });
            }
        }
    }
    let portfolio = Portfolio::new(hierarchy, records, spec.split_year())?;
    Ok(Synthetic {
        portfolio,
        embeddings: tables,
        truth: GroundTruth {
            level1: truth1,
            level2: truth2,
            leaf_effects,
        },
    })
}
