//! Scoring a grouped hierarchy: a damage-rate model on the grouped
//! categories, calibration, Gini index and loss ratio.

pub use crate::error::EvalError;
use crate::error::Error;
use crate::features::{fit_damage_rate_lmm, Grouping, RandomEffectsFit};
use crate::model::Portfolio;
use crate::phirat::ClusteringSolution;

/// Damage-rate LMM fitted on the grouped first and last levels.
#[derive(Debug, Clone)]
pub struct EvaluationModel {
    pub fit: RandomEffectsFit,
    outer: Grouping,
    inner: Option<Grouping>,
    /// Added to every prediction after calibration.
    pub shift: f64,
}

impl EvaluationModel {
    /// Predicted damage rate of record `i`.
    pub fn predict(&self, i: usize) -> f64 {
        let inner = self.inner.as_ref().map(|g| g.ids[i]);
        self.fit.predict(self.outer.ids[i], inner) + self.shift
    }

    pub fn predictions(&self, portfolio: &Portfolio) -> Vec<f64> {
        (0..portfolio.len()).map(|i| self.predict(i)).collect()
    }
}

pub fn fit_evaluation_model(portfolio: &Portfolio, solution: &ClusteringSolution) -> Result<EvaluationModel, Error> {
    let outer = solution.grouping(portfolio, 0);
    let last = solution.levels.len() - 1;
    let inner = (last > 0 && !solution.levels[last].dropped).then(|| solution.grouping(portfolio, last));
    let fit = fit_damage_rate_lmm(portfolio, &outer, inner.as_ref())?;
    Ok(EvaluationModel {
        fit,
        outer,
        inner,
        shift: 0.0,
    })
}

/// Shifts the intercept so predicted and observed training claims agree.
pub fn calibrate(model: &mut EvaluationModel, portfolio: &Portfolio) {
    let (mut z, mut zhat, mut w) = (0.0, 0.0, 0.0);
    for i in portfolio.train_indices() {
        let r = &portfolio.records()[i];
        z += r.claim_amount;
        zhat += model.predict(i) * r.salary_mass;
        w += r.salary_mass;
    }
    if w > 0.0 {
        model.shift += (z - zhat) / w;
    }
}

/// Gini index from the Lorenz curve of claims against mass, records sorted
/// by ascending prediction. Records with equal predictions form one step,
/// so a constant prediction scores exactly 0.
///
/// The flag is set when the total claim amount is zero (the index is then 0).
pub fn gini_index(predictions: &[f64], amounts: &[f64], masses: &[f64]) -> (f64, bool) {
    let total_z: f64 = amounts.iter().sum();
    let total_w: f64 = masses.iter().sum();
    if !(total_z > 0.0) || !(total_w > 0.0) {
        return (0.0, true);
    }
    let mut order: Vec<usize> = (0..predictions.len()).collect();
    order.sort_by(|&a, &b| predictions[a].total_cmp(&predictions[b]));
    let (mut x0, mut y0, mut area) = (0.0, 0.0, 0.0);
    let mut i = 0;
    while i < order.len() {
        let p = predictions[order[i]];
        let (mut dw, mut dz) = (0.0, 0.0);
        while i < order.len() && predictions[order[i]] == p {
            dw += masses[order[i]];
            dz += amounts[order[i]];
            i += 1;
        }
        let (x1, y1) = (x0 + dw / total_w, y0 + dz / total_z);
        area += (x1 - x0) * (y0 + y1) / 2.0;
        (x0, y0) = (x1, y1);
    }
    (1.0 - 2.0 * area, false)
}

/// Lorenz curve points `(mass share, claim share)` starting at the origin.
pub fn lorenz_curve(predictions: &[f64], amounts: &[f64], masses: &[f64]) -> Vec<(f64, f64)> {
    let total_z: f64 = amounts.iter().sum();
    let total_w: f64 = masses.iter().sum();
    let mut order: Vec<usize> = (0..predictions.len()).collect();
    order.sort_by(|&a, &b| predictions[a].total_cmp(&predictions[b]));
    let mut pts = vec![(0.0, 0.0)];
    let (mut cw, mut cz) = (0.0, 0.0);
    let mut i = 0;
    while i < order.len() {
        let p = predictions[order[i]];
        while i < order.len() && predictions[order[i]] == p {
            cw += masses[order[i]];
            cz += amounts[order[i]];
            i += 1;
        }
        let y = if total_z > 0.0 { cz / total_z } else { 0.0 };
        pts.push((cw / total_w, y));
    }
    pts
}

/// Observed over predicted claim totals.
pub fn loss_ratio(predictions: &[f64], amounts: &[f64], masses: &[f64]) -> Result<f64, EvalError> {
    if predictions.is_empty() {
        return Err(EvalError::Empty);
    }
    let z: f64 = amounts.iter().sum();
    let zhat: f64 = predictions.iter().zip(masses).map(|(p, w)| p * w).sum();
    if !(zhat > 0.0) {
        return Err(EvalError::NonPositivePrediction);
    }
    Ok(z / zhat)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitScore {
    pub gini: f64,
    pub loss_ratio: f64,
    pub records: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationReport {
    pub method: String,
    pub level1_groups: usize,
    pub last_level_groups: usize,
    pub train: SplitScore,
    pub test: Option<SplitScore>,
}

fn score(portfolio: &Portfolio, preds: &[f64], idx: &[usize]) -> Result<SplitScore, EvalError> {
    let r = portfolio.records();
    let p: Vec<f64> = idx.iter().map(|&i| preds[i]).collect();
    let z: Vec<f64> = idx.iter().map(|&i| r[i].claim_amount).collect();
    let w: Vec<f64> = idx.iter().map(|&i| r[i].salary_mass).collect();
    Ok(SplitScore {
        gini: gini_index(&p, &z, &w).0,
        loss_ratio: loss_ratio(&p, &z, &w)?,
        records: idx.len(),
    })
}

/// Fits, calibrates and scores a solution on the training and test parts.
pub fn evaluate(portfolio: &Portfolio, solution: &ClusteringSolution) -> Result<(EvaluationReport, Vec<f64>), Error> {
    let mut model = fit_evaluation_model(portfolio, solution)?;
    calibrate(&mut model, portfolio);
    let preds = model.predictions(portfolio);
    let train: Vec<usize> = portfolio.train_indices().collect();
    let test: Vec<usize> = portfolio.test_indices().collect();
    let train_score = score(portfolio, &preds, &train)?;
    let test_score = if test.is_empty() {
        None
    } else {
        Some(score(portfolio, &preds, &test)?)
    };
    let report = EvaluationReport {
        method: solution.method.clone(),
        level1_groups: solution.levels[0].n_groups,
        last_level_groups: solution.levels.last().map_or(0, |l| l.n_groups),
        train: train_score,
        test: test_score,
    };
    Ok((report, preds))
}

/// Mass-weighted damage rate and claim frequency of one category.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CategoryStat {
    pub mass: f64,
    pub claims: f64,
    pub count: f64,
    pub damage_rate: f64,
    pub frequency: f64,
}

/// Per-category statistics over the training records; empty categories get NaN rates.
pub fn category_stats(portfolio: &Portfolio, grouping: &Grouping) -> Vec<CategoryStat> {
    let mut acc = vec![(0.0, 0.0, 0.0); grouping.count];
    for i in portfolio.train_indices() {
        let r = &portfolio.records()[i];
        let a = &mut acc[grouping.ids[i]];
        a.0 += r.salary_mass;
        a.1 += r.claim_amount;
        a.2 += r.claim_count as f64;
    }
    acc.into_iter()
        .map(|(w, z, n)| CategoryStat {
            mass: w,
            claims: z,
            count: n,
            damage_rate: if w > 0.0 { z / w } else { f64::NAN },
            frequency: if w > 0.0 { n / w } else { f64::NAN },
        })
        .collect()
}

fn quantile7(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// `log(v + 1e-4)` clamped to the quartile fences `[Q1 - 1.5 IQR, Q3 + 1.5 IQR]`.
pub fn display_transform(values: &[f64]) -> Vec<f64> {
    let logs: Vec<f64> = values.iter().map(|v| (v + 1e-4).ln()).collect();
    let mut sorted: Vec<f64> = logs.iter().copied().filter(|v| v.is_finite()).collect();
    if sorted.is_empty() {
        return logs;
    }
    sorted.sort_by(f64::total_cmp);
    let q1 = quantile7(&sorted, 0.25);
    let q3 = quantile7(&sorted, 0.75);
    let iqr = q3 - q1;
    let (lo, hi) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
    logs.into_iter().map(|v| if v.is_nan() { v } else { v.clamp(lo, hi) }).collect()
}
