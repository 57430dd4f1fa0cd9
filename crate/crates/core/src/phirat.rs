//! Top-down partitioning of a hierarchical risk factor.
//!
//! Level 1 categories are clustered on their feature rows; each deeper level
//! is clustered separately within every grouped parent, so the grouped
//! hierarchy nests exactly like the original one.

use std::io::{Read, Write};

use crate::clustering::{hca, kmeans, kmedoids, spectral, Algorithm, ClusterAssignment};
use crate::embeddings::EmbeddingTable;
use crate::error::{ClusterError, DataError, Error};
use crate::features::{
    build_feature_matrix, fit_damage_rate_lmm, fit_frequency_poisson, EffectLevel, FeatureMatrix, Grouping,
};
use crate::model::{HierarchySpec, Portfolio};
use crate::proximity::{pairwise, Diagonal, Metric};
use crate::rng::derive_seed;
use crate::validation::{evaluate_index, Degeneracy, Direction, IndexName, IndexValue, Variant};

const KMEANS_MAX_ITER: usize = 300;

/// How a single clustering run is carried out.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusterSettings {
    pub algorithm: Algorithm,
    /// Restarts for plain k-means.
    pub kmeans_restarts: usize,
    /// Restarts of the k-means step inside spectral clustering.
    pub spectral_restarts: usize,
}

impl ClusterSettings {
    pub fn new(algorithm: Algorithm) -> Self {
        ClusterSettings {
            algorithm,
            kmeans_restarts: 10,
            spectral_restarts: 100,
        }
    }
}

/// Clusters feature rows. Medoid and hierarchical clustering work on angular
/// distances, spectral clustering on angular similarities with a zero
/// diagonal, and k-means on the raw rows.
pub fn cluster_rows(
    keys: &[String],
    rows: &[Vec<f64>],
    settings: &ClusterSettings,
    k: usize,
    seed: u64,
) -> Result<ClusterAssignment, ClusterError> {
    if rows.is_empty() {
        return Err(ClusterError::EmptyInput);
    }
    if k == 1 {
        return Ok(ClusterAssignment::new(keys.to_vec(), &vec![0; rows.len()], 0.0, seed, 0));
    }
    match settings.algorithm {
        Algorithm::KMeans => {
            let mut a = kmeans(rows, k, seed, settings.kmeans_restarts, KMEANS_MAX_ITER)?;
            a.keys = keys.to_vec();
            Ok(a)
        }
        Algorithm::KMedoids => {
            let d = pairwise(keys.to_vec(), rows, Metric::AngularDistance, Diagonal::Natural)?;
            kmedoids(&d, k, seed)
        }
        Algorithm::Spectral => {
            let s = pairwise(keys.to_vec(), rows, Metric::AngularSimilarity, Diagonal::Zero)?;
            spectral(&s, k, seed, settings.spectral_restarts)
        }
        Algorithm::Hca(linkage) => {
            let d = pairwise(keys.to_vec(), rows, Metric::AngularDistance, Diagonal::Natural)?;
            hca(&d, k, linkage)
        }
    }
}

/// One (encoder, K) cell of a grid search.
#[derive(Debug, Clone, PartialEq)]
pub struct GridCell {
    pub encoder: usize,
    pub k: usize,
    pub value: Option<IndexValue>,
    pub error: Option<String>,
    pub chosen: bool,
}

impl GridCell {
    /// Whether the cell competes for selection.
    pub fn is_eligible(&self) -> bool {
        match &self.value {
            Some(v) => match v.degenerate {
                None => v.value.is_finite(),
                Some(Degeneracy::PerfectlyCompact) => v.value == f64::INFINITY,
                Some(_) => false,
            },
            None => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridOutcome {
    pub encoder: usize,
    pub k: usize,
    pub assignment: ClusterAssignment,
    pub cells: Vec<GridCell>,
    /// No cell produced a usable index value; the smallest K was taken.
    pub all_degenerate: bool,
}

fn better(a: f64, b: f64, dir: Direction) -> bool {
    match dir {
        Direction::Maximize => a > b,
        Direction::Minimize => a < b,
    }
}

/// Clusters every (encoder, K) combination and keeps the best index value.
///
/// Ties go to the smaller K, then to the earlier encoder. Cell seeds are
/// derived from `seed`, the encoder position and K.
pub fn grid_search_level(
    matrices: &[FeatureMatrix],
    settings: &ClusterSettings,
    index: IndexName,
    variant: Variant,
    k_candidates: &[usize],
    seed: u64,
) -> Result<GridOutcome, Error> {
    if matrices.is_empty() || k_candidates.is_empty() {
        return Err(ClusterError::EmptyInput.into());
    }
    let mut ks = k_candidates.to_vec();
    ks.sort_unstable();
    ks.dedup();
    let mut cells = Vec::new();
    let mut assignments = Vec::new();
    let mut first_error: Option<Error> = None;
    for &k in &ks {
        for (e, m) in matrices.iter().enumerate() {
            let cell_seed = derive_seed(seed, &[e as u64, k as u64]);
            let mut cell = GridCell {
                encoder: e,
                k,
                value: None,
                error: None,
                chosen: false,
            };
            match cluster_rows(&m.keys, &m.rows, settings, k, cell_seed) {
                Ok(a) => {
                    match evaluate_index(index, &m.rows, &a, variant) {
                        Ok(v) => cell.value = Some(v),
                        Err(err) => cell.error = Some(err.to_string()),
                    }
                    assignments.push(Some(a));
                }
                Err(err) => {
                    cell.error = Some(err.to_string());
                    first_error.get_or_insert(err.into());
                    assignments.push(None);
                }
            }
            cells.push(cell);
        }
    }
    let dir = index.direction();
    let mut best: Option<usize> = None;
    for (i, c) in cells.iter().enumerate().filter(|(_, c)| c.is_eligible()) {
        let v = c.value.expect("eligible").value;
        if best.is_none_or(|b| better(v, cells[b].value.expect("eligible").value, dir)) {
            best = Some(i);
        }
    }
    let all_degenerate = best.is_none();
    let pick = match best {
        Some(b) => b,
        None => match assignments.iter().position(Option::is_some) {
            Some(p) => p,
            None => return Err(first_error.expect("every cell failed")),
        },
    };
    cells[pick].chosen = true;
    Ok(GridOutcome {
        encoder: cells[pick].encoder,
        k: cells[pick].k,
        assignment: assignments[pick].take().expect("chosen cell has an assignment"),
        cells,
        all_degenerate,
    })
}

/// Merges groups whose mass is below `min_mass` into a neighbour.
///
/// Groups are ordered by their representative (smallest member code). The
/// lightest deficient group joins the adjacent group with the closest
/// representative code, the lower code on a tie. Returns canonical labels
/// and whether even a single group stays below `min_mass`.
pub fn enforce_mass_constraint(
    labels: &[usize],
    masses: &[f64],
    codes: &[u64],
    min_mass: f64,
) -> (Vec<usize>, bool) {
    let k = labels.iter().max().map_or(0, |m| m + 1);
    // (representative code, mass, members)
    let mut groups: Vec<(u64, f64, Vec<usize>)> = (0..k)
        .map(|g| {
            let members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == g).collect();
            let rep = members.iter().map(|&i| codes[i]).min().unwrap_or(u64::MAX);
            let mass = members.iter().map(|&i| masses[i]).sum();
            (rep, mass, members)
        })
        .filter(|g| !g.2.is_empty())
        .collect();
    groups.sort_by_key(|g| g.0);
    while groups.len() > 1 {
        let Some(i) = (0..groups.len())
            .filter(|&i| groups[i].1 < min_mass)
            .min_by(|&a, &b| groups[a].1.total_cmp(&groups[b].1).then(groups[a].0.cmp(&groups[b].0)))
        else {
            break;
        };
        let j = match (i.checked_sub(1), (i + 1 < groups.len()).then_some(i + 1)) {
            (Some(l), Some(r)) => {
                let dl = groups[i].0.abs_diff(groups[l].0);
                let dr = groups[r].0.abs_diff(groups[i].0);
                if dr < dl {
                    r
                } else {
                    l
                }
            }
            (Some(l), None) => l,
            (None, Some(r)) => r,
            (None, None) => unreachable!(),
        };
        let (lo, hi) = (i.min(j), i.max(j));
        let absorbed = groups.remove(hi);
        let keep = &mut groups[lo];
        keep.0 = keep.0.min(absorbed.0);
        keep.1 += absorbed.1;
        keep.2.extend(absorbed.2);
    }
    let flagged = groups.len() == 1 && groups[0].1 < min_mass;
    let mut out = vec![0; labels.len()];
    for (g, grp) in groups.iter().enumerate() {
        for &i in &grp.2 {
            out[i] = g;
        }
    }
    (crate::clustering::canonicalize(&out).0, flagged)
}

/// Greedy left-to-right blocks of consecutive categories with mass at least
/// `min_mass`. A deficient trailing block joins the block before it.
pub fn merge_consecutive(masses: &[f64], min_mass: f64) -> Vec<usize> {
    let mut out = Vec::with_capacity(masses.len());
    let mut block = 0;
    let mut acc = 0.0;
    for &m in masses {
        out.push(block);
        acc += m;
        if acc >= min_mass {
            block += 1;
            acc = 0.0;
        }
    }
    let open_block_deficient = out.last().is_some_and(|&b| b == block);
    if open_block_deficient && block > 0 {
        out.iter_mut().filter(|b| **b == block).for_each(|b| *b -= 1);
    }
    out
}

/// Grouping of one hierarchy level.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelSolution {
    /// Grouped id (0-based, contiguous) of every original node at this level.
    pub group_of: Vec<usize>,
    pub n_groups: usize,
    /// Grouped id one level up for every group here; empty at level 1.
    pub parent_of_group: Vec<usize>,
    /// Every grouped parent kept a single child group, so this level adds nothing.
    pub dropped: bool,
}

/// Chosen grid cell for one level and parent.
#[derive(Debug, Clone, PartialEq)]
pub struct GridChoice {
    pub level: usize,
    pub parent: String,
    pub encoder: String,
    pub k: usize,
    pub all_degenerate: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridLogRow {
    pub level: usize,
    pub parent: String,
    pub encoder: String,
    pub k: usize,
    pub index_name: String,
    pub index_value: Option<f64>,
    pub chosen: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusteringSolution {
    pub method: String,
    pub levels: Vec<LevelSolution>,
    pub choices: Vec<GridChoice>,
    pub grid_log: Vec<GridLogRow>,
    pub notices: Vec<String>,
}

impl ClusteringSolution {
    pub fn grouped_counts(&self) -> Vec<usize> {
        self.levels.iter().map(|l| l.n_groups).collect()
    }

    pub fn total_groups(&self) -> usize {
        self.levels.iter().map(|l| l.n_groups).sum()
    }

    /// Grouped id of every record at `level`.
    pub fn grouping(&self, portfolio: &Portfolio, level: usize) -> Grouping {
        Grouping::level(portfolio, level).relabel(&self.levels[level].group_of, self.levels[level].n_groups)
    }

    /// Checks that every child's group sits under its parent's group.
    pub fn check_nesting(&self, hierarchy: &HierarchySpec) -> Result<(), DataError> {
        if self.levels.len() != hierarchy.level_count() {
            return Err(DataError::InvalidHierarchy("solution depth differs from hierarchy".into()));
        }
        for (l, lvl) in self.levels.iter().enumerate() {
            let nodes = hierarchy.level(l);
            if lvl.group_of.len() != nodes.len() {
                return Err(DataError::InvalidHierarchy(format!("level {} is not fully mapped", l + 1)));
            }
            let mut used = vec![false; lvl.n_groups];
            for &g in &lvl.group_of {
                *used.get_mut(g).ok_or_else(|| {
                    DataError::InvalidHierarchy(format!("level {} group id out of range", l + 1))
                })? = true;
            }
            if used.contains(&false) {
                return Err(DataError::InvalidHierarchy(format!("level {} ids are not contiguous", l + 1)));
            }
            if l == 0 {
                continue;
            }
            let up = &self.levels[l - 1];
            for (c, node) in nodes.iter().enumerate() {
                let p = node.parent.expect("non-root node has a parent");
                if lvl.parent_of_group.get(lvl.group_of[c]) != Some(&up.group_of[p]) {
                    return Err(DataError::InvalidHierarchy(format!(
                        "category {} breaks nesting",
                        node.code
                    )));
                }
            }
        }
        Ok(())
    }

    /// `level,original_code,grouped_id` with 1-based levels and ids.
    pub fn write_csv<W: Write>(&self, hierarchy: &HierarchySpec, writer: W) -> Result<(), DataError> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["level", "original_code", "grouped_id"])?;
        for (l, lvl) in self.levels.iter().enumerate() {
            for (node, g) in hierarchy.level(l).iter().zip(&lvl.group_of) {
                wtr.write_record([(l + 1).to_string(), node.code.clone(), (g + 1).to_string()])?;
            }
        }
        wtr.flush()?;
        Ok(())
    }

    /// Reads a solution file; metadata other than the mapping is not stored there.
    pub fn read_csv<R: Read>(reader: R, hierarchy: &HierarchySpec, method: &str) -> Result<Self, DataError> {
        let mut rdr = csv::Reader::from_reader(reader);
        let depth = hierarchy.level_count();
        let mut maps: Vec<Vec<Option<usize>>> = (0..depth).map(|l| vec![None; hierarchy.level(l).len()]).collect();
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let bad = |reason: &str| DataError::MalformedRow {
                row: row + 1,
                reason: reason.to_string(),
            };
            if rec.len() != 3 {
                return Err(bad("expected 3 columns"));
            }
            let level: usize = rec[0].trim().parse().map_err(|_| bad("bad level"))?;
            let gid: usize = rec[2].trim().parse().map_err(|_| bad("bad grouped id"))?;
            if level == 0 || level > depth || gid == 0 {
                return Err(bad("level or grouped id out of range"));
            }
            let idx = hierarchy.find(level - 1, rec[1].trim()).ok_or_else(|| DataError::UnknownCategory {
                row: row + 1,
                path: rec[1].to_string(),
            })?;
            maps[level - 1][idx] = Some(gid - 1);
        }
        let mut group_maps = Vec::with_capacity(depth);
        for (l, map) in maps.into_iter().enumerate() {
            let group_of: Vec<usize> = map
                .into_iter()
                .enumerate()
                .map(|(i, g)| {
                    g.ok_or_else(|| DataError::MalformedRow {
                        row: 0,
                        reason: format!("category {} missing", hierarchy.node(l, i).code),
                    })
                })
                .collect::<Result<_, _>>()?;
            group_maps.push(group_of);
        }
        Self::from_group_maps(method, hierarchy, group_maps)
    }

    /// Builds a solution from a grouped id per original node at every level.
    /// Fails if the ids are not contiguous or the maps do not nest.
    pub fn from_group_maps(
        method: &str,
        hierarchy: &HierarchySpec,
        maps: Vec<Vec<usize>>,
    ) -> Result<Self, DataError> {
        if maps.len() != hierarchy.level_count() {
            return Err(DataError::InvalidHierarchy("solution depth differs from hierarchy".into()));
        }
        let mut levels: Vec<LevelSolution> = Vec::with_capacity(maps.len());
        for (l, group_of) in maps.into_iter().enumerate() {
            if group_of.len() != hierarchy.level(l).len() {
                return Err(DataError::InvalidHierarchy(format!("level {} is not fully mapped", l + 1)));
            }
            let n_groups = group_of.iter().max().map_or(0, |m| m + 1);
            let parent_of_group = if l == 0 {
                Vec::new()
            } else {
                let up = &levels[l - 1];
                let mut p = vec![0; n_groups];
                for (c, &g) in group_of.iter().enumerate() {
                    let parent = hierarchy.node(l, c).parent.expect("child has parent");
                    p[g] = up.group_of[parent];
                }
                p
            };
            let dropped = l > 0 && n_groups == levels[l - 1].n_groups;
            levels.push(LevelSolution {
                group_of,
                n_groups,
                parent_of_group,
                dropped,
            });
        }
        let sol = ClusteringSolution {
            method: method.to_string(),
            levels,
            choices: Vec::new(),
            grid_log: Vec::new(),
            notices: Vec::new(),
        };
        sol.check_nesting(hierarchy)?;
        Ok(sol)
    }

    /// `level,parent,encoder,k,index_name,index_value,chosen`.
    pub fn write_grid_log<W: Write>(&self, writer: W) -> Result<(), DataError> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["level", "parent", "encoder", "k", "index_name", "index_value", "chosen"])?;
        for r in &self.grid_log {
            wtr.write_record([
                r.level.to_string(),
                r.parent.clone(),
                r.encoder.clone(),
                r.k.to_string(),
                r.index_name.clone(),
                r.index_value.map_or(String::new(), |v| v.to_string()),
                r.chosen.to_string(),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhiratConfig {
    pub settings: ClusterSettings,
    pub index: IndexName,
    pub variant: Variant,
    /// Candidate cluster counts per level; deeper levels reuse the last entry.
    pub grids: Vec<Vec<usize>>,
    pub min_mass: f64,
    pub seed: u64,
}

impl PhiratConfig {
    fn grid(&self, level: usize) -> &[usize] {
        let i = level.min(self.grids.len().saturating_sub(1));
        self.grids.get(i).map_or(&[], Vec::as_slice)
    }
}

fn matrices_for(
    dr: &crate::features::RandomEffectsFit,
    cf: &crate::features::RandomEffectsFit,
    level: EffectLevel,
    cats: &[(String, usize)],
    tables: &[EmbeddingTable],
) -> Result<Vec<FeatureMatrix>, DataError> {
    tables
        .iter()
        .map(|t| build_feature_matrix(dr, cf, level, cats, t))
        .collect()
}

fn log_rows(level: usize, parent: &str, index: IndexName, names: &[&str], out: &GridOutcome) -> Vec<GridLogRow> {
    out.cells
        .iter()
        .map(|c| GridLogRow {
            level: level + 1,
            parent: parent.to_string(),
            encoder: names[c.encoder].to_string(),
            k: c.k,
            index_name: index.name().to_string(),
            index_value: c.value.map(|v| v.value),
            chosen: c.chosen,
        })
        .collect()
}

/// Runs the full top-down procedure on the training part of `portfolio`.
///
/// `encoders` holds one embedding table per encoder, keyed by category code
/// and covering every level.
pub fn run_phirat(
    portfolio: &Portfolio,
    encoders: &[EmbeddingTable],
    config: &PhiratConfig,
) -> Result<ClusteringSolution, Error> {
    if encoders.is_empty() {
        return Err(ClusterError::EmptyInput.into());
    }
    if !(config.min_mass > 0.0) {
        return Err(DataError::MalformedRow {
            row: 0,
            reason: "min_mass must be positive".into(),
        }
        .into());
    }
    let h = portfolio.hierarchy();
    let names: Vec<&str> = encoders.iter().map(|t| t.encoder_name()).collect();
    let mut sol = ClusteringSolution {
        method: format!(
            "{}/{}/{}",
            config.settings.algorithm.name(),
            config.index.short(),
            config.variant.name()
        ),
        levels: Vec::new(),
        choices: Vec::new(),
        grid_log: Vec::new(),
        notices: Vec::new(),
    };

    // Level 1.
    let g0 = Grouping::level(portfolio, 0);
    let wrap0 = |e: Error| e.at_level(1, "all");
    let dr = fit_damage_rate_lmm(portfolio, &g0, None).map_err(|e| wrap0(e.into()))?;
    let cf = fit_frequency_poisson(portfolio, &g0, None).map_err(|e| wrap0(e.into()))?;
    let cats: Vec<(String, usize)> = h.level(0).iter().enumerate().map(|(i, n)| (n.code.clone(), i)).collect();
    let mats = matrices_for(&dr, &cf, EffectLevel::Outer, &cats, encoders).map_err(|e| wrap0(e.into()))?;
    let grid = truncate_grid(config.grid(0), cats.len());
    let mass0 = portfolio.train_mass(0);
    let codes0: Vec<u64> = h.level(0).iter().map(|n| n.numeric_code()).collect();
    let labels = if grid.is_empty() {
        sol.notices.push("level 1: no grid value fits; categories kept as they are".into());
        (0..cats.len()).collect()
    } else {
        if grid.len() < config.grid(0).len() {
            sol.notices.push(format!("level 1: grid truncated to {} categories", cats.len()));
        }
        let out = grid_search_level(
            &mats,
            &config.settings,
            config.index,
            config.variant,
            &grid,
            derive_seed(config.seed, &[0, 0]),
        )
        .map_err(wrap0)?;
        sol.grid_log.extend(log_rows(0, "all", config.index, &names, &out));
        sol.choices.push(GridChoice {
            level: 1,
            parent: "all".into(),
            encoder: names[out.encoder].to_string(),
            k: out.k,
            all_degenerate: out.all_degenerate,
        });
        out.assignment.labels
    };
    let (group_of, short) = enforce_mass_constraint(&labels, &mass0, &codes0, config.min_mass);
    if short {
        sol.notices.push("level 1: total mass below min_mass; single group".into());
    }
    let n_groups = group_of.iter().max().map_or(0, |m| m + 1);
    sol.levels.push(LevelSolution {
        group_of,
        n_groups,
        parent_of_group: Vec::new(),
        dropped: false,
    });

    for l in 1..h.level_count() {
        let level = run_child_level(portfolio, encoders, config, &names, l, &mut sol)?;
        sol.levels.push(level);
    }
    sol.check_nesting(h)?;
    Ok(sol)
}

fn truncate_grid(grid: &[usize], available: usize) -> Vec<usize> {
    grid.iter().copied().filter(|&k| k >= 1 && k <= available).collect()
}

fn run_child_level(
    portfolio: &Portfolio,
    encoders: &[EmbeddingTable],
    config: &PhiratConfig,
    names: &[&str],
    l: usize,
    sol: &mut ClusteringSolution,
) -> Result<LevelSolution, Error> {
    let h = portfolio.hierarchy();
    let up = sol.levels[l - 1].clone();
    let nodes = h.level(l);
    let masses = portfolio.train_mass(l);
    let parent_group: Vec<usize> = nodes
        .iter()
        .map(|n| up.group_of[n.parent.expect("child has parent")])
        .collect();

    // Pre-merge consecutive children inside every grouped parent.
    let mut block_of = vec![0; nodes.len()];
    let mut blocks: Vec<Vec<usize>> = Vec::new();
    let mut block_parent: Vec<usize> = Vec::new();
    for p in 0..up.n_groups {
        let children: Vec<usize> = (0..nodes.len()).filter(|&c| parent_group[c] == p).collect();
        let m: Vec<f64> = children.iter().map(|&c| masses[c]).collect();
        let local = merge_consecutive(&m, config.min_mass);
        let base = blocks.len();
        for (&c, &b) in children.iter().zip(&local) {
            if base + b == blocks.len() {
                blocks.push(Vec::new());
                block_parent.push(p);
            }
            blocks[base + b].push(c);
            block_of[c] = base + b;
        }
    }

    let outer = Grouping::level(portfolio, l - 1).relabel(&up.group_of, up.n_groups);
    let inner = Grouping::level(portfolio, l).relabel(&block_of, blocks.len());
    let wrap = |e: Error| e.at_level(l + 1, "all");
    let dr = fit_damage_rate_lmm(portfolio, &outer, Some(&inner)).map_err(|e| wrap(e.into()))?;
    let cf = fit_frequency_poisson(portfolio, &outer, Some(&inner)).map_err(|e| wrap(e.into()))?;

    // Block keys and block embeddings (mean of the children's vectors).
    let block_keys: Vec<String> = blocks
        .iter()
        .map(|b| b.iter().map(|&c| nodes[c].code.as_str()).collect::<Vec<_>>().join("+"))
        .collect();
    let mut block_tables = Vec::with_capacity(encoders.len());
    for t in encoders {
        let mut bt = EmbeddingTable::new(t.encoder_name(), t.dimension());
        for (b, members) in blocks.iter().enumerate() {
            let mut v = vec![0.0; t.dimension()];
            for &c in members {
                let e = t
                    .get(&nodes[c].code)
                    .ok_or_else(|| wrap(DataError::MissingEmbedding(nodes[c].code.clone()).into()))?;
                v.iter_mut().zip(e).for_each(|(a, x)| *a += x / members.len() as f64);
            }
            bt.insert(block_keys[b].clone(), v).map_err(|e| wrap(e.into()))?;
        }
        block_tables.push(bt);
    }

    let mut group_of = vec![0; nodes.len()];
    let mut parent_of_group = Vec::new();
    let mut all_single = true;
    for p in 0..up.n_groups {
        let units: Vec<usize> = (0..blocks.len()).filter(|&b| block_parent[b] == p).collect();
        if units.is_empty() {
            continue;
        }
        let parent_name = format!("g{}", p + 1);
        let wrap_p = |e: Error| e.at_level(l + 1, parent_name.clone());
        let full = config.grid(l);
        let grid = truncate_grid(full, units.len());
        let labels: Vec<usize> = if units.len() == 1 {
            vec![0]
        } else if grid.is_empty() {
            sol.notices.push(format!(
                "level {}, parent {parent_name}: no grid value fits {} units; units kept as they are",
                l + 1,
                units.len()
            ));
            (0..units.len()).collect()
        } else {
            if grid.len() < full.len() {
                sol.notices.push(format!(
                    "level {}, parent {parent_name}: grid truncated to {} units",
                    l + 1,
                    units.len()
                ));
            }
            let cats: Vec<(String, usize)> = units.iter().map(|&b| (block_keys[b].clone(), b)).collect();
            let mats: Vec<FeatureMatrix> = block_tables
                .iter()
                .map(|t| build_feature_matrix(&dr, &cf, EffectLevel::Inner, &cats, t))
                .collect::<Result<_, _>>()
                .map_err(|e| wrap_p(e.into()))?;
            let out = grid_search_level(
                &mats,
                &config.settings,
                config.index,
                config.variant,
                &grid,
                derive_seed(config.seed, &[l as u64, p as u64]),
            )
            .map_err(wrap_p)?;
            sol.grid_log.extend(log_rows(l, &parent_name, config.index, names, &out));
            sol.choices.push(GridChoice {
                level: l + 1,
                parent: parent_name.clone(),
                encoder: names[out.encoder].to_string(),
                k: out.k,
                all_degenerate: out.all_degenerate,
            });
            out.assignment.labels
        };
        let k = labels.iter().max().map_or(0, |m| m + 1);
        if k > 1 {
            all_single = false;
        }
        let base = parent_of_group.len();
        parent_of_group.extend(std::iter::repeat_n(p, k));
        for (&b, &lab) in units.iter().zip(&labels) {
            for &c in &blocks[b] {
                group_of[c] = base + lab;
            }
        }
    }
    if all_single {
        sol.notices.push(format!(
            "level {} collapses onto level {} and is dropped",
            l + 1,
            l
        ));
    }
    Ok(LevelSolution {
        n_groups: parent_of_group.len(),
        group_of,
        parent_of_group,
        dropped: all_single,
    })
}

/// Consecutive-code merging at every level, without looking at risk.
pub fn build_benchmark(portfolio: &Portfolio, min_mass: f64) -> ClusteringSolution {
    let h = portfolio.hierarchy();
    let mut levels: Vec<LevelSolution> = Vec::new();
    for l in 0..h.level_count() {
        let masses = portfolio.train_mass(l);
        let nodes = h.level(l);
        let mut group_of = vec![0; nodes.len()];
        let mut parent_of_group = Vec::new();
        let parents: Vec<Option<usize>> = match levels.last() {
            None => vec![None],
            Some(up) => (0..up.n_groups).map(Some).collect(),
        };
        for p in parents {
            let children: Vec<usize> = (0..nodes.len())
                .filter(|&c| match p {
                    None => true,
                    Some(p) => levels[l - 1].group_of[nodes[c].parent.expect("child has parent")] == p,
                })
                .collect();
            let m: Vec<f64> = children.iter().map(|&c| masses[c]).collect();
            let local = merge_consecutive(&m, min_mass);
            let base = parent_of_group.len();
            let k = local.iter().max().map_or(0, |m| m + 1);
            parent_of_group.extend(std::iter::repeat_n(p.unwrap_or(0), k));
            for (&c, &b) in children.iter().zip(&local) {
                group_of[c] = base + b;
            }
        }
        let n_groups = parent_of_group.len();
        let dropped = l > 0 && n_groups == levels[l - 1].n_groups;
        levels.push(LevelSolution {
            group_of,
            n_groups,
            parent_of_group: if l == 0 { Vec::new() } else { parent_of_group },
            dropped,
        });
    }
    ClusteringSolution {
        method: "benchmark".into(),
        levels,
        choices: Vec::new(),
        grid_log: Vec::new(),
        notices: Vec::new(),
    }
}
