//! Browser bindings. Every exported function takes a JSON parameter object and
//! returns a JSON string; the `*_json` functions underneath are plain Rust and
//! are what the native tests call.

use serde::{Deserialize, Serialize};
use wasm_bindgen::prelude::*;

use phirat_core::ari::adjusted_rand_index;
use phirat_core::clustering::Algorithm;
use phirat_core::evaluation::{evaluate, lorenz_curve};
use phirat_core::features::{build_feature_matrix, fit_damage_rate_lmm, fit_frequency_poisson, EffectLevel, Grouping};
use phirat_core::model::Portfolio;
use phirat_core::phirat::{build_benchmark, cluster_rows, run_phirat, ClusterSettings, ClusteringSolution, PhiratConfig};
use phirat_core::rng::derive_seed;
use phirat_core::synth::{generate, GeneratorSpec, Synthetic};
use phirat_core::validation::{evaluate_index, IndexName, Variant};

#[derive(Debug, Clone, Deserialize)]
#[serde(default)]
pub struct Params {
    pub seed: u64,
    pub damage_scale: f64,
    pub algorithm: String,
    pub index: String,
    pub variant: String,
    pub min_mass: f64,
}

impl Default for Params {
    fn default() -> Self {
        Params {
            seed: 20240501,
            damage_scale: 0.4,
            algorithm: "kmedoids".into(),
            index: "ch".into(),
            variant: "full_angular".into(),
            min_mass: 2000.0,
        }
    }
}

struct Setup {
    data: Synthetic,
    config: PhiratConfig,
}

fn setup(params_json: &str) -> Result<Setup, String> {
    let p: Params = if params_json.trim().is_empty() {
        Params::default()
    } else {
        serde_json::from_str(params_json).map_err(|e| format!("bad parameters: {e}"))?
    };
    let algorithm = Algorithm::from_name(&p.algorithm).ok_or(format!("unknown algorithm `{}`", p.algorithm))?;
    let index = IndexName::from_name(&p.index).ok_or(format!("unknown index `{}`", p.index))?;
    let variant = Variant::from_name(&p.variant).ok_or(format!("unknown variant `{}`", p.variant))?;
    let spec = GeneratorSpec {
        seed: p.seed,
        damage_scale: p.damage_scale,
        frequency_scale: p.damage_scale,
        ..GeneratorSpec::default()
    };
    let data = generate(&spec).map_err(|e| e.to_string())?;
    let config = PhiratConfig {
        settings: ClusterSettings::new(algorithm),
        index,
        variant,
        grids: vec![(2..=8).collect(), (2..=6).collect()],
        min_mass: p.min_mass,
        seed: p.seed,
    };
    Ok(Setup { data, config })
}

#[derive(Serialize)]
struct Point {
    code: String,
    effect_dr: f64,
    effect_cf: f64,
    cluster: usize,
    truth: usize,
}

#[derive(Serialize)]
struct GridPoint {
    encoder: String,
    k: usize,
    value: Option<f64>,
    chosen: bool,
}

#[derive(Serialize)]
struct ClusterView {
    method: String,
    original_counts: Vec<usize>,
    grouped_counts: Vec<usize>,
    ari: Vec<f64>,
    points: Vec<Point>,
    grid: Vec<GridPoint>,
    notices: Vec<String>,
}

fn level1_effects(p: &Portfolio) -> Result<(Vec<f64>, Vec<f64>), String> {
    let g = Grouping::level(p, 0);
    let dr = fit_damage_rate_lmm(p, &g, None).map_err(|e| e.to_string())?;
    let cf = fit_frequency_poisson(p, &g, None).map_err(|e| e.to_string())?;
    Ok((dr.outer_effects, cf.outer_effects))
}

fn truth_ari(s: &Synthetic, sol: &ClusteringSolution) -> Vec<f64> {
    let truth = [&s.truth.level1, &s.truth.level2];
    sol.levels
        .iter()
        .zip(truth)
        .map(|(l, t)| adjusted_rand_index(&l.group_of, t))
        .collect()
}

/// Runs the procedure and returns the level-1 scatter, the level-1 grid and
/// the recovery of the planted groups.
pub fn cluster_json(params_json: &str) -> Result<String, String> {
    let Setup { data, config } = setup(params_json)?;
    let p = &data.portfolio;
    let sol = run_phirat(p, &data.embeddings, &config).map_err(|e| e.to_string())?;
    let (dr, cf) = level1_effects(p)?;
    let h = p.hierarchy();
    let points = h
        .level(0)
        .iter()
        .enumerate()
        .map(|(i, n)| Point {
            code: n.code.clone(),
            effect_dr: dr[i],
            effect_cf: cf[i],
            cluster: sol.levels[0].group_of[i],
            truth: data.truth.level1[i],
        })
        .collect();
    let grid = sol
        .grid_log
        .iter()
        .filter(|r| r.level == 1)
        .map(|r| GridPoint {
            encoder: r.encoder.clone(),
            k: r.k,
            value: r.index_value.filter(|v| v.is_finite()),
            chosen: r.chosen,
        })
        .collect();
    let view = ClusterView {
        method: sol.method.clone(),
        original_counts: (0..h.level_count()).map(|l| h.level(l).len()).collect(),
        grouped_counts: sol.grouped_counts(),
        ari: truth_ari(&data, &sol),
        points,
        grid,
        notices: sol.notices.clone(),
    };
    serde_json::to_string(&view).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct Curve {
    method: String,
    total_groups: usize,
    gini_train: f64,
    gini_test: Option<f64>,
    points: Vec<(f64, f64)>,
}

/// Keeps at most `n` points, always including both ends.
fn thin(points: Vec<(f64, f64)>, n: usize) -> Vec<(f64, f64)> {
    if points.len() <= n {
        return points;
    }
    let step = (points.len() - 1) as f64 / (n - 1) as f64;
    (0..n).map(|i| points[((i as f64 * step).round() as usize).min(points.len() - 1)]).collect()
}

/// Test-set Lorenz curves of the clustered solution and the benchmark.
pub fn lorenz_json(params_json: &str) -> Result<String, String> {
    let Setup { data, config } = setup(params_json)?;
    let p = &data.portfolio;
    let sol = run_phirat(p, &data.embeddings, &config).map_err(|e| e.to_string())?;
    let bench = build_benchmark(p, config.min_mass);
    let idx: Vec<usize> = if p.has_test() {
        p.test_indices().collect()
    } else {
        p.train_indices().collect()
    };
    let r = p.records();
    let curves = [sol, bench]
        .iter()
        .map(|s| {
            let (report, preds) = evaluate(p, s).map_err(|e| e.to_string())?;
            let pts = lorenz_curve(
                &idx.iter().map(|&i| preds[i]).collect::<Vec<_>>(),
                &idx.iter().map(|&i| r[i].claim_amount).collect::<Vec<_>>(),
                &idx.iter().map(|&i| r[i].salary_mass).collect::<Vec<_>>(),
            );
            Ok(Curve {
                method: s.method.clone(),
                total_groups: s.total_groups(),
                gini_train: report.train.gini,
                gini_test: report.test.map(|t| t.gini),
                points: thin(pts, 200),
            })
        })
        .collect::<Result<Vec<_>, String>>()?;
    serde_json::to_string(&curves).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct IndexRow {
    k: usize,
    values: Vec<Option<f64>>,
}

#[derive(Serialize)]
struct IndexTable {
    indices: Vec<&'static str>,
    rows: Vec<IndexRow>,
}

/// All four indices for every K of the level-1 grid, first encoder, chosen algorithm.
pub fn indices_json(params_json: &str) -> Result<String, String> {
    let Setup { data, config } = setup(params_json)?;
    let p = &data.portfolio;
    let g = Grouping::level(p, 0);
    let dr = fit_damage_rate_lmm(p, &g, None).map_err(|e| e.to_string())?;
    let cf = fit_frequency_poisson(p, &g, None).map_err(|e| e.to_string())?;
    let cats: Vec<(String, usize)> = p
        .hierarchy()
        .level(0)
        .iter()
        .enumerate()
        .map(|(i, n)| (n.code.clone(), i))
        .collect();
    let fm = build_feature_matrix(&dr, &cf, EffectLevel::Outer, &cats, &data.embeddings[0]).map_err(|e| e.to_string())?;
    let mut rows = Vec::new();
    for &k in &config.grids[0] {
        let a = cluster_rows(&fm.keys, &fm.rows, &config.settings, k, derive_seed(config.seed, &[0, k as u64]))
            .map_err(|e| e.to_string())?;
        let values = IndexName::ALL
            .iter()
            .map(|&i| evaluate_index(i, &fm.rows, &a, config.variant).ok().map(|v| v.value).filter(|v| v.is_finite()))
            .collect();
        rows.push(IndexRow { k, values });
    }
    let table = IndexTable {
        indices: IndexName::ALL.iter().map(|i| i.short()).collect(),
        rows,
    };
    serde_json::to_string(&table).map_err(|e| e.to_string())
}

#[wasm_bindgen]
pub fn cluster(params_json: &str) -> Result<String, JsValue> {
    cluster_json(params_json).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn lorenz(params_json: &str) -> Result<String, JsValue> {
    lorenz_json(params_json).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn indices(params_json: &str) -> Result<String, JsValue> {
    indices_json(params_json).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn version() -> String {
    phirat_core::VERSION.to_string()
}
