//! Weighted nested random-intercept LMM on per-cell sufficient statistics.
//!
//! Model: `y = mu + u[outer] + v[cell] + e` with `Var(e) = sigma2 / w`.
//! Every cell belongs to exactly one outer category. A one-level model is
//! the same computation with the inner variance pinned to 0.

use crate::error::FitError;

/// Sufficient statistics of one inner cell.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CellStats {
    pub outer: usize,
    /// Sum of weights.
    pub weight: f64,
    /// Weighted sum of responses.
    pub sum: f64,
    /// Weighted sum of squared responses.
    pub sum_sq: f64,
    pub n: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmmOptions {
    pub tolerance: f64,
    pub max_iter: usize,
    pub floor: f64,
    /// Keep the residual variance at this value instead of estimating it.
    pub fixed_residual: Option<f64>,
    /// Keep the inner variance at this value instead of estimating it.
    pub fixed_inner: Option<f64>,
}

impl Default for LmmOptions {
    fn default() -> Self {
        LmmOptions {
            tolerance: 1e-8,
            max_iter: 500,
            floor: 1e-12,
            fixed_residual: None,
            fixed_inner: None,
        }
    }
}

/// Variance components: outer, inner, residual.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Variances {
    pub outer: f64,
    pub inner: f64,
    pub residual: f64,
}

/// BLUPs and prediction-error variances at fixed variance components.
#[derive(Debug, Clone, PartialEq)]
pub struct Blup {
    pub mu: f64,
    pub outer: Vec<f64>,
    pub inner: Vec<f64>,
    pub outer_pev: Vec<f64>,
    pub inner_pev: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LmmSolution {
    pub blup: Blup,
    pub variances: Variances,
    pub converged: bool,
    pub iterations: usize,
    pub floor_hit: bool,
}

/// Closed-form BLUP for the nested model at given variance components.
pub fn blup(cells: &[CellStats], n_outer: usize, v: Variances) -> Result<Blup, FitError> {
    let s2 = v.residual;
    let (tu, tv) = (v.outer / s2, v.inner / s2);
    let mut a = vec![0.0; n_outer];
    let mut b = vec![0.0; n_outer];
    for c in cells.iter().filter(|c| c.weight > 0.0) {
        let denom = 1.0 + c.weight * tv;
        a[c.outer] += c.weight / denom;
        b[c.outer] += c.sum / denom;
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for g in 0..n_outer {
        num += b[g] / (1.0 + a[g] * tu);
        den += a[g] / (1.0 + a[g] * tu);
    }
    if !(den > 0.0) || !den.is_finite() {
        return Err(FitError::SingularSystem("no positive weight".into()));
    }
    let mu = num / den;
    let var_mu = s2 / den;
    let mut outer = vec![0.0; n_outer];
    let mut outer_pev = vec![v.outer; n_outer];
    // Var(mu + u_g | data) per outer category, reused for the inner PEV.
    let mut var_level = vec![0.0; n_outer];
    for g in 0..n_outer {
        let k = tu * a[g] / (1.0 + a[g] * tu);
        let cond = s2 * tu / (1.0 + a[g] * tu);
        outer[g] = tu * (b[g] - a[g] * mu) / (1.0 + a[g] * tu);
        outer_pev[g] = cond + k * k * var_mu;
        var_level[g] = cond + (1.0 - k) * (1.0 - k) * var_mu;
    }
    let mut inner = vec![0.0; cells.len()];
    let mut inner_pev = vec![v.inner; cells.len()];
    for (h, c) in cells.iter().enumerate() {
        let g = c.outer;
        let k = tv * c.weight / (1.0 + c.weight * tv);
        inner[h] = tv * (c.sum - c.weight * (mu + outer[g])) / (1.0 + c.weight * tv);
        inner_pev[h] = s2 * tv / (1.0 + c.weight * tv) + k * k * var_level[g];
    }
    Ok(Blup {
        mu,
        outer,
        inner,
        outer_pev,
        inner_pev,
    })
}

fn validate(cells: &[CellStats], n_outer: usize) -> Result<(), FitError> {
    if cells.iter().all(|c| c.weight <= 0.0) {
        return Err(FitError::NoData);
    }
    if let Some(h) = cells.iter().position(|c| c.outer >= n_outer) {
        return Err(FitError::SingularSystem(format!(
            "cell {h} refers to a missing outer category"
        )));
    }
    Ok(())
}

fn initial(cells: &[CellStats], n_outer: usize, opts: &LmmOptions) -> Variances {
    let w: f64 = cells.iter().map(|c| c.weight).sum();
    let s: f64 = cells.iter().map(|c| c.sum).sum();
    let q: f64 = cells.iter().map(|c| c.sum_sq).sum();
    let n: usize = cells.iter().map(|c| c.n).sum();
    let mean = s / w;
    let total = if n > 1 {
        ((q - s * mean) / (n - 1) as f64).max(0.0)
    } else {
        0.0
    };
    let residual = opts.fixed_residual.unwrap_or(total.max(opts.floor * 1e3));
    // Spread of raw outer means gives a scale for the between variance.
    let mut ow = vec![0.0; n_outer];
    let mut os = vec![0.0; n_outer];
    for c in cells {
        ow[c.outer] += c.weight;
        os[c.outer] += c.sum;
    }
    let means: Vec<f64> = (0..n_outer).filter(|&g| ow[g] > 0.0).map(|g| os[g] / ow[g]).collect();
    let m = means.iter().sum::<f64>() / means.len() as f64;
    let spread = means.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / means.len() as f64;
    let outer = spread.max(1e-4 * residual / (w / means.len() as f64)).max(opts.floor);
    Variances {
        outer,
        inner: opts.fixed_inner.unwrap_or(outer * 0.5),
        residual,
    }
}

/// Fits the nested model, estimating variances by EM-REML iterations.
///
/// `warm` seeds the variance components (used by the PQL loop).
pub fn fit_cells(
    cells: &[CellStats],
    n_outer: usize,
    opts: &LmmOptions,
    warm: Option<Variances>,
) -> Result<LmmSolution, FitError> {
    validate(cells, n_outer)?;
    let mut v = warm.unwrap_or_else(|| initial(cells, n_outer, opts));
    if let Some(r) = opts.fixed_residual {
        v.residual = r;
    }
    if let Some(i) = opts.fixed_inner {
        v.inner = i;
    }
    let mut outer_seen = vec![false; n_outer];
    let mut outer_s = vec![0.0; n_outer];
    for c in cells.iter().filter(|c| c.weight > 0.0) {
        outer_seen[c.outer] = true;
        outer_s[c.outer] += c.sum;
    }
    let g_count = outer_seen.iter().filter(|&&s| s).count();
    let h_count = cells.iter().filter(|c| c.weight > 0.0).count();
    let n: usize = cells.iter().map(|c| c.n).sum();
    let q: f64 = cells.iter().map(|c| c.sum_sq).sum();
    let total_s: f64 = cells.iter().map(|c| c.sum).sum();
    if opts.fixed_residual.is_none() && n < 2 {
        return Err(FitError::SingularSystem("residual variance needs two observations".into()));
    }
    let mut floor_hit = false;
    let mut converged = false;
    let mut iterations = 0;
    let mut sol = blup(cells, n_outer, v)?;
    while iterations < opts.max_iter {
        iterations += 1;
        let mut next = v;
        let outer_acc: f64 = (0..n_outer)
            .filter(|&g| outer_seen[g])
            .map(|g| sol.outer[g] * sol.outer[g] + sol.outer_pev[g])
            .sum();
        next.outer = outer_acc / g_count as f64;
        if opts.fixed_inner.is_none() {
            let acc: f64 = cells
                .iter()
                .enumerate()
                .filter(|(_, c)| c.weight > 0.0)
                .map(|(h, _)| sol.inner[h] * sol.inner[h] + sol.inner_pev[h])
                .sum();
            next.inner = acc / h_count as f64;
        }
        if opts.fixed_residual.is_none() {
            let fitted: f64 = sol.mu * total_s
                + (0..n_outer).map(|g| sol.outer[g] * outer_s[g]).sum::<f64>()
                + cells.iter().zip(&sol.inner).map(|(c, v)| v * c.sum).sum::<f64>();
            next.residual = (q - fitted) / (n - 1) as f64;
        }
        for (x, fixed) in [
            (&mut next.outer, false),
            (&mut next.inner, opts.fixed_inner.is_some()),
            (&mut next.residual, opts.fixed_residual.is_some()),
        ] {
            if !fixed && !(*x >= opts.floor) {
                *x = opts.floor;
                floor_hit = true;
            }
        }
        let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(opts.floor);
        let change = rel(next.outer, v.outer)
            .max(rel(next.inner, v.inner))
            .max(rel(next.residual, v.residual));
        v = next;
        sol = blup(cells, n_outer, v)?;
        if change < opts.tolerance {
            converged = true;
            break;
        }
    }
    // A component resting on the floor at the end is what gets reported.
    floor_hit = floor_hit
        && (v.outer <= opts.floor
            || (opts.fixed_inner.is_none() && v.inner <= opts.floor)
            || (opts.fixed_residual.is_none() && v.residual <= opts.floor));
    Ok(LmmSolution {
        blup: sol,
        variances: v,
        converged,
        iterations,
        floor_hit,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};

    /// Henderson's equations built densely from per-record data.
    fn dense(
        recs: &[(usize, usize, f64, f64)],
        n_outer: usize,
        n_inner: usize,
        v: Variances,
    ) -> (DVector<f64>, DMatrix<f64>) {
        let p = 1 + n_outer + n_inner;
        let mut c = DMatrix::zeros(p, p);
        let mut rhs = DVector::zeros(p);
        for &(g, h, w, y) in recs {
            let cols = [0, 1 + g, 1 + n_outer + h];
            let r = w / v.residual;
            for &i in &cols {
                rhs[i] += r * y;
                for &j in &cols {
                    c[(i, j)] += r;
                }
            }
        }
        for g in 0..n_outer {
            c[(1 + g, 1 + g)] += 1.0 / v.outer;
        }
        for h in 0..n_inner {
            c[(1 + n_outer + h, 1 + n_outer + h)] += 1.0 / v.inner;
        }
        let inv = c.clone().try_inverse().unwrap();
        (&inv * rhs, inv)
    }

    fn cells_of(recs: &[(usize, usize, f64, f64)], n_inner: usize, outer_of: &[usize]) -> Vec<CellStats> {
        let mut cells: Vec<CellStats> = (0..n_inner)
            .map(|h| CellStats {
                outer: outer_of[h],
                ..Default::default()
            })
            .collect();
        for &(_, h, w, y) in recs {
            cells[h].weight += w;
            cells[h].sum += w * y;
            cells[h].sum_sq += w * y * y;
            cells[h].n += 1;
        }
        cells
    }

    #[test]
    fn matches_dense_equations() {
        let outer_of = [0, 0, 1, 1, 1, 2];
        let mut recs = Vec::new();
        for (h, &g) in outer_of.iter().enumerate() {
            for r in 0..(2 + h % 3) {
                let w = 0.5 + ((h * 7 + r * 3) % 5) as f64;
                let y = (h as f64 * 0.37).sin() + 0.1 * r as f64;
                recs.push((g, h, w, y));
            }
        }
        let cells = cells_of(&recs, 6, &outer_of);
        let v = Variances {
            outer: 0.3,
            inner: 0.1,
            residual: 0.7,
        };
        let b = blup(&cells, 3, v).unwrap();
        let (sol, inv) = dense(&recs, 3, 6, v);
        assert!((b.mu - sol[0]).abs() < 1e-10);
        for g in 0..3 {
            assert!((b.outer[g] - sol[1 + g]).abs() < 1e-10);
            assert!((b.outer_pev[g] - inv[(1 + g, 1 + g)]).abs() < 1e-10);
        }
        for h in 0..6 {
            assert!((b.inner[h] - sol[4 + h]).abs() < 1e-10);
            assert!((b.inner_pev[h] - inv[(4 + h, 4 + h)]).abs() < 1e-10);
        }
    }

    #[test]
    fn em_fixed_point() {
        let outer_of = [0, 1, 2, 3, 4];
        let mut recs = Vec::new();
        for h in 0..5 {
            for r in 0..6 {
                let y = [0.2, -0.4, 0.9, 0.0, -0.6][h] + 0.3 * ((r * 5 + h) % 4) as f64 - 0.45;
                recs.push((h, h, 1.0 + r as f64, y));
            }
        }
        let cells = cells_of(&recs, 5, &outer_of);
        let opts = LmmOptions {
            fixed_inner: Some(0.0),
            ..Default::default()
        };
        let s = fit_cells(&cells, 5, &opts, None).unwrap();
        assert!(s.converged);
        let b = &s.blup;
        let next: f64 = (0..5).map(|g| b.outer[g] * b.outer[g] + b.outer_pev[g]).sum::<f64>() / 5.0;
        assert!((next - s.variances.outer).abs() < 1e-6 * s.variances.outer);
    }

    #[test]
    fn identical_rates_give_zero_effect() {
        let cells = vec![CellStats {
            outer: 0,
            weight: 6.0,
            sum: 6.0 * 0.25,
            sum_sq: 6.0 * 0.0625,
            n: 3,
        }];
        let s = fit_cells(&cells, 1, &LmmOptions { fixed_inner: Some(0.0), ..Default::default() }, None).unwrap();
        assert!((s.blup.mu - 0.25).abs() < 1e-12);
        assert!(s.blup.outer[0].abs() < 1e-12);
    }

    #[test]
    fn no_data() {
        let cells = vec![CellStats::default()];
        assert_eq!(fit_cells(&cells, 1, &LmmOptions::default(), None), Err(FitError::NoData));
    }
}
