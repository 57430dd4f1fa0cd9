use phirat_wasm::{cluster_json, indices_json, lorenz_json};
use serde_json::Value;

fn parse(s: Result<String, String>) -> Value {
    serde_json::from_str(&s.unwrap()).unwrap()
}

#[test]
fn cluster_view_recovers_planted_groups() {
    let v = parse(cluster_json(""));
    for a in v["ari"].as_array().unwrap() {
        assert!(a.as_f64().unwrap() >= 0.9);
    }
    let orig = v["original_counts"].as_array().unwrap();
    let grouped = v["grouped_counts"].as_array().unwrap();
    for (o, g) in orig.iter().zip(grouped) {
        assert!(g.as_u64().unwrap() < o.as_u64().unwrap());
    }
    assert_eq!(v["points"].as_array().unwrap().len(), 24);
    let grid = v["grid"].as_array().unwrap();
    assert_eq!(grid.len(), 7 * 2);
    assert_eq!(grid.iter().filter(|c| c["chosen"] == Value::Bool(true)).count(), 1);
}

#[test]
fn same_parameters_same_output() {
    let p = r#"{"seed": 7, "algorithm": "spectral", "index": "silhouette"}"#;
    assert_eq!(cluster_json(p).unwrap(), cluster_json(p).unwrap());
}

#[test]
fn lorenz_curves_span_the_unit_square() {
    let v = parse(lorenz_json(r#"{"algorithm": "hca"}"#));
    let curves = v.as_array().unwrap();
    assert_eq!(curves.len(), 2);
    assert_eq!(curves[1]["method"], "benchmark");
    for c in curves {
        let pts = c["points"].as_array().unwrap();
        assert!(pts.len() <= 200);
        let first = &pts[0];
        let last = &pts[pts.len() - 1];
        assert_eq!(first[0].as_f64().unwrap(), 0.0);
        assert!((last[0].as_f64().unwrap() - 1.0).abs() < 1e-12);
        assert!((last[1].as_f64().unwrap() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn index_table_covers_the_grid() {
    let v = parse(indices_json(r#"{"variant": "risk_euclidean"}"#));
    assert_eq!(v["indices"].as_array().unwrap().len(), 4);
    let rows = v["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 7);
    assert_eq!(rows[0]["k"], 2);
    assert!(rows.iter().all(|r| r["values"].as_array().unwrap().len() == 4));
}
