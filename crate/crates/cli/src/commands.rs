use std::path::{Path, PathBuf};

use phirat_core::clustering::Algorithm;
use phirat_core::embeddings::{load_embedding_table, EmbeddingTable};
use phirat_core::evaluation::{category_stats, display_transform, evaluate, lorenz_curve, EvaluationReport};
use phirat_core::features::{
    build_feature_matrix, fit_damage_rate_lmm, fit_frequency_poisson, write_fits_csv, write_variance_sidecar,
    EffectLevel, Grouping,
};
use phirat_core::model::{load_portfolio, HierarchySpec, Portfolio};
use phirat_core::phirat::{build_benchmark, run_phirat, ClusteringSolution, PhiratConfig};
use phirat_core::synth::generate;
use phirat_core::validation::IndexName;

use crate::config::{encoder_name, RunConfig};
use crate::error::CliError;
use crate::manifest::Manifest;

type Res<T> = Result<T, CliError>;

fn csv_bytes<F>(f: F) -> Res<Vec<u8>>
where
    F: FnOnce(&mut Vec<u8>) -> Result<(), phirat_core::DataError>,
{
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

fn load_inputs(cfg: &RunConfig, m: &mut Manifest) -> Res<Portfolio> {
    let h = HierarchySpec::read_csv(m.read(&cfg.hierarchy)?.as_slice())?;
    Ok(load_portfolio(m.read(&cfg.portfolio)?.as_slice(), h, cfg.split_year)?)
}

fn load_tables(cfg: &RunConfig, m: &mut Manifest) -> Res<Vec<EmbeddingTable>> {
    cfg.embeddings
        .iter()
        .map(|p| Ok(load_embedding_table(m.read(p)?.as_slice(), &encoder_name(p))?))
        .collect()
}

fn out(cfg: &RunConfig, name: &str) -> PathBuf {
    cfg.out.join(name)
}

pub fn simulate(cfg: &RunConfig, m: &mut Manifest) -> Res<()> {
    let s = generate(&cfg.generator)?;
    if s.embeddings.len() != cfg.embeddings.len() {
        return Err(CliError::Config(format!(
            "{} embedding paths for {} pseudo-encoders",
            cfg.embeddings.len(),
            s.embeddings.len()
        )));
    }
    let h = s.portfolio.hierarchy();
    m.write(&cfg.hierarchy, &csv_bytes(|b| h.write_csv(b))?)?;
    m.write(&cfg.portfolio, &csv_bytes(|b| s.portfolio.write_csv(b))?)?;
    for (t, p) in s.embeddings.iter().zip(&cfg.embeddings) {
        m.write(p, &csv_bytes(|b| t.write_csv(b))?)?;
    }
    let truth = ClusteringSolution::from_group_maps(
        "truth",
        h,
        vec![s.truth.level1.clone(), s.truth.level2.clone()],
    )?;
    m.write(&out(cfg, "truth.csv"), &csv_bytes(|b| truth.write_csv(h, b))?)?;
    Ok(())
}

pub fn features(cfg: &RunConfig, m: &mut Manifest) -> Res<()> {
    let p = load_inputs(cfg, m)?;
    let tables = load_tables(cfg, m)?;
    let g = Grouping::level(&p, 0);
    let dr = fit_damage_rate_lmm(&p, &g, None).map_err(phirat_core::Error::from)?;
    let cf = fit_frequency_poisson(&p, &g, None).map_err(phirat_core::Error::from)?;
    let cats: Vec<(String, usize)> = p
        .hierarchy()
        .level(0)
        .iter()
        .enumerate()
        .map(|(i, n)| (n.code.clone(), i))
        .collect();
    m.write(
        &out(cfg, "fits_level1.csv"),
        &csv_bytes(|b| write_fits_csv(&dr, &cf, EffectLevel::Outer, &cats, b))?,
    )?;
    m.write(
        &out(cfg, "variances_level1.csv"),
        &csv_bytes(|b| write_variance_sidecar(&dr, &cf, b))?,
    )?;
    for t in &tables {
        let fm = build_feature_matrix(&dr, &cf, EffectLevel::Outer, &cats, t)?;
        m.write(
            &out(cfg, &format!("features_level1_{}.csv", t.encoder_name())),
            &csv_bytes(|b| fm.write_csv(b))?,
        )?;
    }
    Ok(())
}

fn write_choices(sol: &ClusteringSolution) -> Res<Vec<u8>> {
    csv_bytes(|b| {
        let mut w = csv::Writer::from_writer(b);
        w.write_record(["level", "parent", "encoder", "k", "all_degenerate"])?;
        for c in &sol.choices {
            w.write_record([
                c.level.to_string(),
                c.parent.clone(),
                c.encoder.clone(),
                c.k.to_string(),
                c.all_degenerate.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    })
}

pub fn cluster(cfg: &RunConfig, m: &mut Manifest) -> Res<()> {
    let p = load_inputs(cfg, m)?;
    let tables = load_tables(cfg, m)?;
    let sol = run_phirat(&p, &tables, &cfg.phirat)?;
    let h = p.hierarchy();
    m.write(&cfg.solution, &csv_bytes(|b| sol.write_csv(h, b))?)?;
    m.write(&out(cfg, "grid_log.csv"), &csv_bytes(|b| sol.write_grid_log(b))?)?;
    m.write(&out(cfg, "choices.csv"), &write_choices(&sol)?)?;
    let notices: String = sol.notices.iter().map(|n| format!("{n}\n")).collect();
    m.write(&out(cfg, "notices.txt"), notices.as_bytes())?;
    Ok(())
}

const REPORT_HEADER: [&str; 8] = [
    "method",
    "level1_groups",
    "last_level_groups",
    "total_groups",
    "gini_train",
    "gini_test",
    "loss_ratio_train",
    "loss_ratio_test",
];

fn report_fields(r: &EvaluationReport, total: usize) -> Vec<String> {
    let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
    vec![
        r.method.clone(),
        r.level1_groups.to_string(),
        r.last_level_groups.to_string(),
        total.to_string(),
        r.train.gini.to_string(),
        opt(r.test.as_ref().map(|t| t.gini)),
        r.train.loss_ratio.to_string(),
        opt(r.test.as_ref().map(|t| t.loss_ratio)),
    ]
}

pub fn evaluate_cmd(cfg: &RunConfig, m: &mut Manifest) -> Res<()> {
    let p = load_inputs(cfg, m)?;
    let sol = ClusteringSolution::read_csv(m.read(&cfg.solution)?.as_slice(), p.hierarchy(), "solution")?;
    let (report, preds) = evaluate(&p, &sol)?;
    m.write(
        &out(cfg, "evaluation.csv"),
        &csv_bytes(|b| {
            let mut w = csv::Writer::from_writer(b);
            w.write_record(REPORT_HEADER)?;
            w.write_record(report_fields(&report, sol.total_groups()))?;
            w.flush()?;
            Ok(())
        })?,
    )?;
    let idx: Vec<usize> = if p.has_test() {
        p.test_indices().collect()
    } else {
        p.train_indices().collect()
    };
    let r = p.records();
    let curve = lorenz_curve(
        &idx.iter().map(|&i| preds[i]).collect::<Vec<_>>(),
        &idx.iter().map(|&i| r[i].claim_amount).collect::<Vec<_>>(),
        &idx.iter().map(|&i| r[i].salary_mass).collect::<Vec<_>>(),
    );
    m.write(
        &out(cfg, "lorenz.csv"),
        &csv_bytes(|b| {
            let mut w = csv::Writer::from_writer(b);
            w.write_record(["mass_share", "claim_share"])?;
            for (x, y) in curve {
                w.write_record([x.to_string(), y.to_string()])?;
            }
            w.flush()?;
            Ok(())
        })?,
    )?;
    Ok(())
}

fn fmt(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        v.to_string()
    }
}

pub fn report(cfg: &RunConfig, m: &mut Manifest) -> Res<()> {
    let p = load_inputs(cfg, m)?;
    let h = p.hierarchy();
    let sol = ClusteringSolution::read_csv(m.read(&cfg.solution)?.as_slice(), h, "solution")?;
    let fits_path = out(cfg, "fits_level1.csv");
    let fits = m.read(&fits_path)?;

    // Sunburst rows for the original and the grouped hierarchy.
    let mut rows: Vec<[String; 6]> = Vec::new();
    for l in 0..h.level_count() {
        let views = [
            ("original", Grouping::level(&p, l)),
            ("grouped", sol.grouping(&p, l)),
        ];
        for (view, g) in views {
            let stats = category_stats(&p, &g);
            let shown = display_transform(&stats.iter().map(|s| s.damage_rate).collect::<Vec<_>>());
            for (id, (st, y)) in stats.iter().zip(shown).enumerate() {
                let (code, parent) = if view == "original" {
                    let node = h.node(l, id);
                    let parent = node.parent.map_or(String::new(), |q| h.node(l - 1, q).code.clone());
                    (node.code.clone(), parent)
                } else {
                    let parent = if l == 0 {
                        String::new()
                    } else {
                        format!("L{}G{}", l, sol.levels[l].parent_of_group[id] + 1)
                    };
                    (format!("L{}G{}", l + 1, id + 1), parent)
                };
                rows.push([view.into(), (l + 1).to_string(), code, parent, st.mass.to_string(), fmt(y)]);
            }
        }
    }
    m.write(
        &out(cfg, "sunburst.csv"),
        &csv_bytes(|b| {
            let mut w = csv::Writer::from_writer(b);
            w.write_record(["view", "level", "code", "parent", "mass", "damage_rate_display"])?;
            for r in &rows {
                w.write_record(r)?;
            }
            w.flush()?;
            Ok(())
        })?,
    )?;

    let mut rdr = csv::Reader::from_reader(fits.as_slice());
    let mut scatter = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(phirat_core::DataError::from)?;
        let code = rec.get(0).unwrap_or("").to_string();
        let id = h.find(0, &code).ok_or_else(|| phirat_core::DataError::UnknownCategory {
            row: row + 1,
            path: code.clone(),
        })?;
        scatter.push([
            code,
            rec.get(1).unwrap_or("").to_string(),
            rec.get(2).unwrap_or("").to_string(),
            (sol.levels[0].group_of[id] + 1).to_string(),
        ]);
    }
    m.write(
        &out(cfg, "scatter.csv"),
        &csv_bytes(|b| {
            let mut w = csv::Writer::from_writer(b);
            w.write_record(["category", "effect_dr", "effect_cf", "cluster"])?;
            for r in &scatter {
                w.write_record(r)?;
            }
            w.flush()?;
            Ok(())
        })?,
    )?;
    Ok(())
}

/// One row of the method comparison.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub algorithm: String,
    pub index: String,
    pub solution: ClusteringSolution,
    pub report: EvaluationReport,
}

/// Runs every algorithm against every index, then the benchmark last.
pub fn sweep_rows(
    portfolio: &Portfolio,
    tables: &[EmbeddingTable],
    base: &PhiratConfig,
    algorithms: &[Algorithm],
) -> Result<Vec<SweepRow>, phirat_core::Error> {
    let cells: Vec<(Algorithm, IndexName)> = algorithms
        .iter()
        .flat_map(|&a| IndexName::ALL.into_iter().map(move |i| (a, i)))
        .collect();
    let results: Vec<Result<SweepRow, phirat_core::Error>> = std::thread::scope(|scope| {
        let handles: Vec<_> = cells
            .iter()
            .map(|&(alg, index)| {
                scope.spawn(move || {
                    let mut cfg = base.clone();
                    cfg.settings.algorithm = alg;
                    cfg.index = index;
                    let solution = run_phirat(portfolio, tables, &cfg)?;
                    let (report, _) = evaluate(portfolio, &solution)?;
                    Ok(SweepRow {
                        algorithm: alg.name(),
                        index: index.short().to_string(),
                        solution,
                        report,
                    })
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("sweep worker panicked")).collect()
    });
    let mut rows = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    let bench = build_benchmark(portfolio, base.min_mass);
    let (report, _) = evaluate(portfolio, &bench)?;
    rows.push(SweepRow {
        algorithm: "benchmark".into(),
        index: String::new(),
        solution: bench,
        report,
    });
    Ok(rows)
}

pub fn sweep(cfg: &RunConfig, m: &mut Manifest) -> Res<()> {
    let p = load_inputs(cfg, m)?;
    let tables = load_tables(cfg, m)?;
    let rows = sweep_rows(&p, &tables, &cfg.phirat, &cfg.sweep_algorithms)?;
    let h = p.hierarchy();
    let mut header: Vec<&str> = vec!["algorithm", "index"];
    header.extend(REPORT_HEADER);
    let table = csv_bytes(|b| {
        let mut w = csv::Writer::from_writer(b);
        w.write_record(&header)?;
        for r in &rows {
            let mut rec = vec![r.algorithm.clone(), r.index.clone()];
            rec.extend(report_fields(&r.report, r.solution.total_groups()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    })?;
    m.write(&out(cfg, "sweep.csv"), &table)?;
    for r in &rows {
        let name = if r.index.is_empty() {
            format!("solution_{}.csv", r.algorithm)
        } else {
            format!("solution_{}_{}.csv", r.algorithm, r.index)
        };
        m.write(
            &cfg.out.join("sweep").join(name),
            &csv_bytes(|b| r.solution.write_csv(h, b))?,
        )?;
    }
    Ok(())
}

pub fn manifest_path(cfg: &RunConfig, command: &str) -> PathBuf {
    Path::new(&cfg.out).join(format!("manifest_{command}.txt"))
}
