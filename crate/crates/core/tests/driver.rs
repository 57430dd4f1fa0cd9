use phirat_core::ari::adjusted_rand_index;
use phirat_core::clustering::{Algorithm, Linkage};
use phirat_core::embeddings::EmbeddingTable;
use phirat_core::model::{CategoryPath, HierarchySpec, PolicyRecord, Portfolio};
use phirat_core::phirat::{
    build_benchmark, enforce_mass_constraint, merge_consecutive, run_phirat, ClusterSettings, ClusteringSolution,
    PhiratConfig,
};
use phirat_core::synth::{generate, GeneratorSpec};
use phirat_core::validation::{IndexName, Variant};
use proptest::prelude::*;

fn config(alg: Algorithm, index: IndexName, variant: Variant, grids: Vec<Vec<usize>>, min_mass: f64) -> PhiratConfig {
    PhiratConfig {
        settings: ClusterSettings::new(alg),
        index,
        variant,
        grids,
        min_mass,
        seed: 11,
    }
}

fn records_for(path: &[&str], rate: f64, freq: f64, company: &str) -> Vec<PolicyRecord> {
    (0..4)
        .map(|y| {
            let n = (freq * 100.0).round() as u64 + (y % 2);
            PolicyRecord {
                company_id: company.into(),
                year: 2020 + y as i32,
                path: CategoryPath::new(path.iter().copied()),
                claim_amount: if n == 0 { 0.0 } else { rate * 100.0 * (1.0 + 0.01 * y as f64) },
                claim_count: n,
                salary_mass: 100.0,
            }
        })
        .collect()
}

#[test]
fn single_level_grid_of_one_gives_one_group() {
    let leaves: Vec<(Vec<String>, Vec<String>)> = ["1", "2", "3"]
        .iter()
        .map(|c| (vec![c.to_string()], vec![format!("label {c}")]))
        .collect();
    let h = HierarchySpec::from_leaves(vec!["l1".into()], &leaves).unwrap();
    let mut recs = Vec::new();
    for c in ["1", "2", "3"] {
        recs.extend(records_for(&[c], 0.2, 0.05, &format!("co{c}")));
    }
    let p = Portfolio::new(h, recs, None).unwrap();
    let mut t = EmbeddingTable::new("e", 2);
    t.insert("1", vec![1.0, 0.0]).unwrap();
    t.insert("2", vec![0.0, 1.0]).unwrap();
    t.insert("3", vec![1.0, 1.0]).unwrap();
    let cfg = config(
        Algorithm::KMedoids,
        IndexName::Silhouette,
        Variant::RiskEuclidean,
        vec![vec![1]],
        1.0,
    );
    let sol = run_phirat(&p, &[t], &cfg).unwrap();
    assert_eq!(sol.grouped_counts(), vec![1]);
    assert!(sol.choices[0].all_degenerate);
}

/// Three parents with nine children; embeddings push the topology of the worked example.
#[test]
fn worked_example_topology() {
    let tree = [
        ("45", ["451100", "453100", "454500"]),
        ("80", ["801000", "802100", "803000"]),
        ("85", ["851400", "852000", "853100"]),
    ];
    let mut leaves = Vec::new();
    for (p, kids) in &tree {
        for k in kids {
            leaves.push((vec![p.to_string(), k.to_string()], vec![format!("sub {p}"), format!("group {k}")]));
        }
    }
    let h = HierarchySpec::from_leaves(vec!["subsection".into(), "tariff".into()], &leaves).unwrap();
    let mut recs = Vec::new();
    for (i, (p, kids)) in tree.iter().enumerate() {
        for (j, k) in kids.iter().enumerate() {
            let rate = 0.1 + 0.05 * i as f64 + 0.01 * j as f64;
            recs.extend(records_for(&[p, k], rate, 0.03 + 0.01 * j as f64, &format!("c{k}")));
        }
    }
    let p = Portfolio::new(h, recs, None).unwrap();
    let proto = |a: usize| -> Vec<f64> { (0..6).map(|d| if d == a { 1.0 } else { 0.05 }).collect() };
    let mut t = EmbeddingTable::new("enc", 6);
    t.insert("45", proto(0)).unwrap();
    t.insert("80", proto(1)).unwrap();
    t.insert("85", {
        let mut v = proto(1);
        v[2] = 0.2;
        v
    })
    .unwrap();
    for (code, a) in [
        ("451100", 0),
        ("453100", 1),
        ("454500", 1),
        ("801000", 2),
        ("802100", 2),
        ("803000", 2),
        ("851400", 3),
        ("852000", 3),
        ("853100", 4),
    ] {
        t.insert(code, proto(a)).unwrap();
    }
    let cfg = config(
        Algorithm::Hca(Linkage::Complete),
        IndexName::Silhouette,
        Variant::FullAngular,
        vec![vec![2], vec![2, 3, 4]],
        1.0,
    );
    let sol = run_phirat(&p, &[t], &cfg).unwrap();
    let h = p.hierarchy();
    let l1 = &sol.levels[0].group_of;
    assert_eq!(l1[0], 0);
    assert_eq!(l1[1], l1[2]);
    assert_ne!(l1[0], l1[1]);
    let l2 = &sol.levels[1].group_of;
    let g = |code: &str| l2[h.find(1, code).unwrap()];
    assert_ne!(g("451100"), g("453100"));
    assert_eq!(g("453100"), g("454500"));
    assert_eq!(g("801000"), g("802100"));
    assert_eq!(g("802100"), g("803000"));
    assert_eq!(g("851400"), g("852000"));
    assert_ne!(g("852000"), g("853100"));
    assert_ne!(g("801000"), g("851400"));
    assert_eq!(sol.grouped_counts(), vec![2, 5]);
    sol.check_nesting(h).unwrap();
}

fn small_spec() -> GeneratorSpec {
    GeneratorSpec {
        level1_per_group: 3,
        companies_per_category: 4,
        ..GeneratorSpec::default()
    }
}

#[test]
fn synthetic_recovers_truth_and_is_deterministic() {
    let s = generate(&GeneratorSpec::default()).unwrap();
    let cfg = config(
        Algorithm::KMedoids,
        IndexName::CalinskiHarabasz,
        Variant::FullAngular,
        vec![(2..=8).collect(), (2..=6).collect()],
        2000.0,
    );
    let a = run_phirat(&s.portfolio, &s.embeddings, &cfg).unwrap();
    let b = run_phirat(&s.portfolio, &s.embeddings, &cfg).unwrap();
    assert_eq!(a, b);
    assert!(adjusted_rand_index(&a.levels[0].group_of, &s.truth.level1) >= 0.9);
    assert!(adjusted_rand_index(&a.levels[1].group_of, &s.truth.level2) >= 0.9);
    a.check_nesting(s.portfolio.hierarchy()).unwrap();
}

#[test]
fn grid_log_is_exhaustive_and_counts_stay_in_grid() {
    let s = generate(&small_spec()).unwrap();
    let grids = vec![vec![2, 3, 4], vec![2, 3]];
    let cfg = config(Algorithm::Spectral, IndexName::Dunn, Variant::RiskEuclidean, grids, 1.0);
    let sol = run_phirat(&s.portfolio, &s.embeddings, &cfg).unwrap();
    let level1_rows = sol.grid_log.iter().filter(|r| r.level == 1).count();
    assert_eq!(level1_rows, 2 * 3);
    for choice in &sol.choices {
        let grid: &[usize] = if choice.level == 1 { &[2, 3, 4] } else { &[2, 3] };
        assert!(grid.contains(&choice.k));
    }
    // Tiny min_mass: no merging, so level-1 groups equal the chosen K.
    assert_eq!(sol.levels[0].n_groups, sol.choices[0].k);
}

#[test]
fn heavy_mass_floor_merges_everything() {
    let s = generate(&small_spec()).unwrap();
    let cfg = config(
        Algorithm::KMedoids,
        IndexName::Silhouette,
        Variant::RiskEuclidean,
        vec![vec![2, 3], vec![2]],
        1e12,
    );
    let sol = run_phirat(&s.portfolio, &s.embeddings, &cfg).unwrap();
    assert_eq!(sol.grouped_counts(), vec![1, 1]);
    assert!(sol.levels[1].dropped);
    assert!(sol.notices.iter().any(|n| n.contains("dropped")));
}

#[test]
fn solution_csv_round_trip() {
    let s = generate(&small_spec()).unwrap();
    let cfg = config(
        Algorithm::Hca(Linkage::Complete),
        IndexName::DaviesBouldin,
        Variant::FullAngular,
        vec![vec![2, 3, 4], vec![2, 3]],
        500.0,
    );
    let sol = run_phirat(&s.portfolio, &s.embeddings, &cfg).unwrap();
    let h = s.portfolio.hierarchy();
    let mut buf = Vec::new();
    sol.write_csv(h, &mut buf).unwrap();
    let back = ClusteringSolution::read_csv(buf.as_slice(), h, &sol.method).unwrap();
    assert_eq!(back.levels, sol.levels);
}

#[test]
fn read_rejects_broken_nesting() {
    let s = generate(&small_spec()).unwrap();
    let h = s.portfolio.hierarchy();
    let mut maps = vec![vec![0; h.level(0).len()], vec![0; h.level(1).len()]];
    maps[0][0] = 1;
    // Children of both level-1 groups share grouped id 0.
    assert!(ClusteringSolution::from_group_maps("x", h, maps).is_err());
}

#[test]
fn benchmark_respects_mass_and_nesting() {
    let s = generate(&small_spec()).unwrap();
    let p = &s.portfolio;
    let min_mass = 5000.0;
    let b = build_benchmark(p, min_mass);
    b.check_nesting(p.hierarchy()).unwrap();
    for l in 0..2 {
        let mass = p.train_mass(l);
        let mut per_group = vec![0.0; b.levels[l].n_groups];
        for (c, &g) in b.levels[l].group_of.iter().enumerate() {
            per_group[g] += mass[c];
        }
        assert!(per_group.iter().all(|&m| m >= min_mass));
    }
}

proptest! {
    #[test]
    fn consecutive_blocks_meet_threshold(masses in prop::collection::vec(0.0f64..10.0, 1..40), min in 0.5f64..20.0) {
        let blocks = merge_consecutive(&masses, min);
        prop_assert_eq!(blocks.len(), masses.len());
        let k = blocks.last().unwrap() + 1;
        let mut sums = vec![0.0; k];
        for (b, m) in blocks.iter().zip(&masses) { sums[*b] += m; }
        for w in blocks.windows(2) { prop_assert!(w[1] == w[0] || w[1] == w[0] + 1); }
        if k > 1 { prop_assert!(sums.iter().all(|&s| s >= min)); }
    }

    #[test]
    fn mass_merge_meets_threshold(labels in prop::collection::vec(0usize..6, 1..30), seed in 0u64..1000, min in 0.5f64..30.0) {
        let masses: Vec<f64> = (0..labels.len()).map(|i| ((i as u64 * 7919 + seed) % 13) as f64).collect();
        let codes: Vec<u64> = (0..labels.len() as u64).map(|i| i * 3 + 1).collect();
        let (out, flagged) = enforce_mass_constraint(&labels, &masses, &codes, min);
        let k = out.iter().max().unwrap() + 1;
        let mut sums = vec![0.0; k];
        for (g, m) in out.iter().zip(&masses) { sums[*g] += m; }
        if k > 1 { prop_assert!(sums.iter().all(|&s| s >= min)); }
        prop_assert_eq!(flagged, k == 1 && sums[0] < min);
        // Original groups are never split.
        for i in 0..labels.len() { for j in 0..labels.len() {
            if labels[i] == labels[j] { prop_assert_eq!(out[i], out[j]); }
        }}
    }
}
