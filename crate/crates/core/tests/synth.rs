use phirat_core::synth::{generate, GeneratorSpec};

/// Empirical damage rate per planted leaf class against the generator's
/// analytic mean, with the compound-Poisson standard error.
#[test]
fn damage_rates_match_planted_means() {
    let spec = GeneratorSpec {
        base_frequency: 0.05,
        ..GeneratorSpec::default()
    };
    let s = generate(&spec).unwrap();
    let p = &s.portfolio;
    let classes = s.truth.level2.iter().max().unwrap() + 1;
    let mut w = vec![0.0; classes];
    let mut z = vec![0.0; classes];
    let mut var = vec![0.0; classes];
    let mut effect = vec![(0.0, 0.0); classes];
    for (i, r) in p.records().iter().enumerate() {
        let leaf = p.node_of(i, 1);
        let c = s.truth.level2[leaf];
        let (f, d) = s.truth.leaf_effects[leaf];
        effect[c] = (f, d);
        w[c] += r.salary_mass;
        z[c] += r.claim_amount;
        // Gamma(2, theta) severities: E[X^2] = 6 theta^2 with theta = mean / 2.
        let theta = spec.mean_severity * d.exp() / 2.0;
        var[c] += r.salary_mass * spec.base_frequency * f.exp() * 6.0 * theta * theta;
    }
    let mut outside = 0;
    for c in 0..classes {
        let (f, d) = effect[c];
        let planted = spec.base_frequency * spec.mean_severity * (f + d).exp();
        let se = var[c].sqrt() / w[c];
        if (z[c] / w[c] - planted).abs() > 3.0 * se {
            outside += 1;
        }
    }
    assert_eq!(outside, 0);
}

#[test]
fn null_structure_makes_categories_exchangeable() {
    let spec = GeneratorSpec {
        damage_scale: 0.0,
        frequency_scale: 0.0,
        ..GeneratorSpec::default()
    };
    let s = generate(&spec).unwrap();
    assert!(s.truth.leaf_effects.iter().all(|&(f, d)| f == 0.0 && d == 0.0));
}

#[test]
fn csv_outputs_are_byte_identical() {
    let a = generate(&GeneratorSpec::default()).unwrap();
    let b = generate(&GeneratorSpec::default()).unwrap();
    let dump = |s: &phirat_core::synth::Synthetic| {
        let mut out = Vec::new();
        s.portfolio.write_csv(&mut out).unwrap();
        s.portfolio.hierarchy().write_csv(&mut out).unwrap();
        for t in &s.embeddings {
            t.write_csv(&mut out).unwrap();
        }
        out
    };
    assert_eq!(dump(&a), dump(&b));
}

#[test]
fn ground_truth_nests() {
    let s = generate(&GeneratorSpec::default()).unwrap();
    let h = s.portfolio.hierarchy();
    let g2 = 3;
    for (c, node) in h.level(1).iter().enumerate() {
        assert_eq!(s.truth.level2[c] / g2, s.truth.level1[node.parent.unwrap()]);
    }
}
