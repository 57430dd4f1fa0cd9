//! Random-effects risk features: shrunken damage-rate and claim-frequency
//! effects per category, and the feature matrix that feeds clustering.

pub mod lmm;
pub mod pql;

use std::io::Write;

use crate::embeddings::EmbeddingTable;
use crate::error::{DataError, FitError};
use crate::model::Portfolio;
use lmm::{fit_cells, CellStats, LmmOptions};
use pql::{fit_poisson_cells, CountCell, PqlOptions};

/// Maps every portfolio record to a category id in `0..count`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Grouping {
    pub ids: Vec<usize>,
    pub count: usize,
}

impl Grouping {
    pub fn new(ids: Vec<usize>, count: usize) -> Self {
        debug_assert!(ids.iter().all(|&i| i < count));
        Grouping { ids, count }
    }

    /// Node index of every record at a hierarchy level.
    pub fn level(portfolio: &Portfolio, level: usize) -> Self {
        let ids = (0..portfolio.len()).map(|i| portfolio.node_of(i, level)).collect();
        Grouping::new(ids, portfolio.hierarchy().level(level).len())
    }

    /// Composes with a category-to-group map.
    pub fn relabel(&self, map: &[usize], count: usize) -> Self {
        Grouping::new(self.ids.iter().map(|&i| map[i]).collect(), count)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitFlag {
    VarianceFloorHit,
    NoConvergence,
    AllZeroCounts,
}

/// Intercept and predicted category effects of a one- or two-level model.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomEffectsFit {
    pub intercept: f64,
    pub outer_effects: Vec<f64>,
    /// Empty for a one-level fit.
    pub inner_effects: Vec<f64>,
    pub outer_seen: Vec<bool>,
    pub inner_seen: Vec<bool>,
    /// Outer variance, inner variance (nested fits only), then residual (LMM only).
    pub variance_components: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub flags: Vec<FitFlag>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EffectLevel {
    Outer,
    Inner,
}

impl RandomEffectsFit {
    pub fn is_nested(&self) -> bool {
        !self.inner_seen.is_empty()
    }

    /// Effect of a category that had training data.
    pub fn effect(&self, level: EffectLevel, id: usize) -> Option<f64> {
        let (effects, seen) = match level {
            EffectLevel::Outer => (&self.outer_effects, &self.outer_seen),
            EffectLevel::Inner => (&self.inner_effects, &self.inner_seen),
        };
        seen.get(id).copied().unwrap_or(false).then(|| effects[id])
    }

    /// Linear predictor; categories without training data contribute 0.
    pub fn predict(&self, outer: usize, inner: Option<usize>) -> f64 {
        let u = self.effect(EffectLevel::Outer, outer).unwrap_or(0.0);
        let v = inner
            .and_then(|h| self.effect(EffectLevel::Inner, h))
            .unwrap_or(0.0);
        self.intercept + u + v
    }
}

/// Inner-cell layout shared by both models: per inner id, its outer id.
struct Layout {
    cell_outer: Vec<usize>,
    cell_of_record: Vec<usize>,
    n_cells: usize,
}

fn layout(
    portfolio: &Portfolio,
    grouping: &Grouping,
    nested: Option<&Grouping>,
) -> Result<Layout, FitError> {
    if grouping.ids.len() != portfolio.len() || nested.is_some_and(|n| n.ids.len() != portfolio.len()) {
        return Err(FitError::SingularSystem("grouping does not cover every record".into()));
    }
    match nested {
        None => Ok(Layout {
            cell_outer: (0..grouping.count).collect(),
            cell_of_record: grouping.ids.clone(),
            n_cells: grouping.count,
        }),
        Some(inner) => {
            let mut cell_outer = vec![usize::MAX; inner.count];
            for (i, (&h, &g)) in inner.ids.iter().zip(&grouping.ids).enumerate() {
                if !portfolio.is_train(i) {
                    continue;
                }
                if cell_outer[h] == usize::MAX {
                    cell_outer[h] = g;
                } else if cell_outer[h] != g {
                    return Err(FitError::NotNested(h));
                }
            }
            // Cells without training data carry no weight; any outer id will do.
            cell_outer.iter_mut().filter(|o| **o == usize::MAX).for_each(|o| *o = 0);
            Ok(Layout {
                cell_outer,
                cell_of_record: inner.ids.clone(),
                n_cells: inner.count,
            })
        }
    }
}

fn seen(portfolio: &Portfolio, ids: &[usize], count: usize) -> Vec<bool> {
    let mut s = vec![false; count];
    portfolio.train_indices().for_each(|i| s[ids[i]] = true);
    s
}

/// Weighted LMM for the damage rate with salary mass as weight and identity link.
pub fn fit_damage_rate_lmm(
    portfolio: &Portfolio,
    grouping: &Grouping,
    nested: Option<&Grouping>,
) -> Result<RandomEffectsFit, FitError> {
    let lay = layout(portfolio, grouping, nested)?;
    let mut cells: Vec<CellStats> = lay
        .cell_outer
        .iter()
        .map(|&outer| CellStats {
            outer,
            ..Default::default()
        })
        .collect();
    for i in portfolio.train_indices() {
        let r = &portfolio.records()[i];
        let y = r.damage_rate();
        let c = &mut cells[lay.cell_of_record[i]];
        c.weight += r.salary_mass;
        c.sum += r.claim_amount;
        c.sum_sq += r.claim_amount * y;
        c.n += 1;
    }
    let opts = LmmOptions {
        fixed_inner: if nested.is_some() { None } else { Some(0.0) },
        ..LmmOptions::default()
    };
    let sol = fit_cells(&cells, grouping.count, &opts, None)?;
    let mut flags = Vec::new();
    if sol.floor_hit {
        flags.push(FitFlag::VarianceFloorHit);
    }
    if !sol.converged {
        flags.push(FitFlag::NoConvergence);
    }
    let v = sol.variances;
    let (inner_effects, inner_seen, variance_components) = match nested {
        Some(n) => (
            sol.blup.inner.clone(),
            seen(portfolio, &n.ids, n.count),
            vec![v.outer, v.inner, v.residual],
        ),
        None => (Vec::new(), Vec::new(), vec![v.outer, v.residual]),
    };
    Ok(RandomEffectsFit {
        intercept: sol.blup.mu,
        outer_effects: sol.blup.outer,
        inner_effects,
        outer_seen: seen(portfolio, &grouping.ids, grouping.count),
        inner_seen,
        variance_components,
        converged: sol.converged,
        iterations: sol.iterations,
        flags,
    })
}

/// Poisson model for claim counts with log salary mass as offset, via PQL.
pub fn fit_frequency_poisson(
    portfolio: &Portfolio,
    grouping: &Grouping,
    nested: Option<&Grouping>,
) -> Result<RandomEffectsFit, FitError> {
    let lay = layout(portfolio, grouping, nested)?;
    let mut cells: Vec<CountCell> = lay
        .cell_outer
        .iter()
        .map(|&outer| CountCell {
            outer,
            ..Default::default()
        })
        .collect();
    for i in portfolio.train_indices() {
        let r = &portfolio.records()[i];
        let c = &mut cells[lay.cell_of_record[i]];
        c.exposure += r.salary_mass;
        c.count += r.claim_count as f64;
        c.n += 1;
    }
    let opts = PqlOptions {
        nested: nested.is_some(),
        ..PqlOptions::default()
    };
    let sol = fit_poisson_cells(&cells, grouping.count, &opts)?;
    let mut flags = Vec::new();
    if sol.all_zero {
        flags.push(FitFlag::AllZeroCounts);
    }
    if sol.floor_hit {
        flags.push(FitFlag::VarianceFloorHit);
    }
    if !sol.converged {
        flags.push(FitFlag::NoConvergence);
    }
    let v = sol.variances;
    let (inner_effects, inner_seen, variance_components) = match nested {
        Some(n) => (
            sol.inner,
            seen(portfolio, &n.ids, n.count),
            vec![v.outer, v.inner],
        ),
        None => (Vec::new(), Vec::new(), vec![v.outer]),
    };
    debug_assert_eq!(lay.n_cells, cells.len());
    Ok(RandomEffectsFit {
        intercept: sol.mu,
        outer_effects: sol.outer,
        inner_effects,
        outer_seen: seen(portfolio, &grouping.ids, grouping.count),
        inner_seen,
        variance_components,
        converged: sol.converged,
        iterations: sol.iterations,
        flags,
    })
}

/// Per-category rows `(damage-rate effect, frequency effect, embedding...)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub encoder: String,
    pub keys: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl FeatureMatrix {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), DataError> {
        let mut wtr = csv::Writer::from_writer(writer);
        let dim = self.rows.first().map_or(2, Vec::len);
        let mut header = vec!["key".to_string(), "effect_dr".into(), "effect_cf".into()];
        header.extend((1..=dim.saturating_sub(2)).map(|i| format!("e_{i}")));
        wtr.write_record(&header)?;
        for (k, r) in self.keys.iter().zip(&self.rows) {
            let mut rec = vec![k.clone()];
            rec.extend(r.iter().map(|v| v.to_string()));
            wtr.write_record(&rec)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Builds feature rows for `categories` given as `(key, id in the fits)`.
/// Embeddings are looked up by key.
pub fn build_feature_matrix(
    dr: &RandomEffectsFit,
    cf: &RandomEffectsFit,
    level: EffectLevel,
    categories: &[(String, usize)],
    embeddings: &EmbeddingTable,
) -> Result<FeatureMatrix, DataError> {
    let mut rows = Vec::with_capacity(categories.len());
    for (key, id) in categories {
        let missing = || DataError::MissingEffect(key.clone());
        let ud = dr.effect(level, *id).ok_or_else(missing)?;
        let uf = cf.effect(level, *id).ok_or_else(missing)?;
        let e = embeddings
            .get(key)
            .ok_or_else(|| DataError::MissingEmbedding(key.clone()))?;
        let mut row = Vec::with_capacity(2 + e.len());
        row.push(ud);
        row.push(uf);
        row.extend_from_slice(e);
        rows.push(row);
    }
    Ok(FeatureMatrix {
        encoder: embeddings.encoder_name().to_string(),
        keys: categories.iter().map(|c| c.0.clone()).collect(),
        rows,
    })
}

/// Writes `category,effect_dr,effect_cf` for the given categories.
pub fn write_fits_csv<W: Write>(
    dr: &RandomEffectsFit,
    cf: &RandomEffectsFit,
    level: EffectLevel,
    categories: &[(String, usize)],
    writer: W,
) -> Result<(), DataError> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["category", "effect_dr", "effect_cf"])?;
    for (key, id) in categories {
        let f = |fit: &RandomEffectsFit| fit.effect(level, *id).map_or(String::new(), |v| v.to_string());
        wtr.write_record([key.clone(), f(dr), f(cf)])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Writes `model,component,value` rows with intercepts and variance components.
pub fn write_variance_sidecar<W: Write>(
    dr: &RandomEffectsFit,
    cf: &RandomEffectsFit,
    writer: W,
) -> Result<(), DataError> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["model", "component", "value"])?;
    for (model, fit, names) in [
        ("damage_rate", dr, &["outer", "inner", "residual"][..]),
        ("frequency", cf, &["outer", "inner"][..]),
    ] {
        wtr.write_record([model, "intercept", &fit.intercept.to_string()])?;
        let names: Vec<&str> = if fit.is_nested() {
            names.to_vec()
        } else {
            names.iter().copied().filter(|n| *n != "inner").collect()
        };
        for (n, v) in names.iter().zip(&fit.variance_components) {
            wtr.write_record([model, n, &v.to_string()])?;
        }
        wtr.write_record([model, "converged", &fit.converged.to_string()])?;
    }
    wtr.flush()?;
    Ok(())
}
