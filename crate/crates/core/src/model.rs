//! Portfolio and hierarchy types, plus their CSV formats.
//!
//! Portfolio CSV: `company_id,year,<level_1>,...,<level_L>,claim_amount,claim_count,salary_mass`.
//! Hierarchy CSV: one row per leaf, `<level_1>,...,<level_L>,<level_1>_label,...,<level_L>_label`.

use std::collections::HashMap;
use std::io::{Read, Write};

use crate::error::DataError;

/// One category code per hierarchy level, top level first.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CategoryPath {
    pub codes: Vec<String>,
}

impl CategoryPath {
    pub fn new<S: Into<String>>(codes: impl IntoIterator<Item = S>) -> Self {
        CategoryPath {
            codes: codes.into_iter().map(Into::into).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }
}

impl std::fmt::Display for CategoryPath {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.codes.join("/"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CategoryNode {
    pub code: String,
    pub label: String,
    pub parent: Option<usize>,
    pub children: Vec<usize>,
    numeric: u64,
}

impl CategoryNode {
    /// Numeric value of the code, used for consecutive-code ordering.
    pub fn numeric_code(&self) -> u64 {
        self.numeric
    }
}

/// The category tree, stored level by level.
///
/// Nodes within a level are sorted by numeric code, so a node's index is also
/// its rank in code order. Codes are unique within a level.
#[derive(Debug, Clone, PartialEq)]
pub struct HierarchySpec {
    level_names: Vec<String>,
    levels: Vec<Vec<CategoryNode>>,
    index: Vec<HashMap<String, usize>>,
}

pub(crate) fn parse_code(code: &str) -> Option<u64> {
    if code.is_empty() || !code.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    code.parse().ok()
}

impl HierarchySpec {
    /// Builds the tree from leaf rows of `(codes, labels)`, one entry per level.
    pub fn from_leaves(
        level_names: Vec<String>,
        leaves: &[(Vec<String>, Vec<String>)],
    ) -> Result<Self, DataError> {
        let depth = level_names.len();
        if depth == 0 {
            return Err(DataError::InvalidHierarchy("no levels".into()));
        }
        if leaves.is_empty() {
            return Err(DataError::InvalidHierarchy("no categories".into()));
        }
        // code -> (label, parent code)
        let mut seen: Vec<HashMap<String, (String, Option<String>)>> = vec![HashMap::new(); depth];
        for (row, (codes, labels)) in leaves.iter().enumerate() {
            if codes.len() != depth || labels.len() != depth {
                return Err(DataError::MalformedRow {
                    row: row + 1,
                    reason: format!("expected {depth} codes and {depth} labels"),
                });
            }
            for l in 0..depth {
                let code = &codes[l];
                if parse_code(code).is_none() {
                    return Err(DataError::InvalidHierarchy(format!(
                        "code {code:?} at level {} is not numeric",
                        l + 1
                    )));
                }
                let label = labels[l].trim();
                if label.is_empty() {
                    return Err(DataError::InvalidHierarchy(format!(
                        "category {code:?} has an empty label"
                    )));
                }
                let parent = (l > 0).then(|| codes[l - 1].clone());
                match seen[l].get(code) {
                    Some((old_label, old_parent)) => {
                        if old_parent != &parent {
                            return Err(DataError::InvalidHierarchy(format!(
                                "code {code:?} at level {} appears under two parents",
                                l + 1
                            )));
                        }
                        if old_label != label {
                            return Err(DataError::InvalidHierarchy(format!(
                                "code {code:?} has conflicting labels"
                            )));
                        }
                    }
                    None => {
                        seen[l].insert(code.clone(), (label.to_string(), parent));
                    }
                }
            }
        }

        let mut levels: Vec<Vec<CategoryNode>> = Vec::with_capacity(depth);
        let mut index: Vec<HashMap<String, usize>> = Vec::with_capacity(depth);
        for (l, entries) in seen.into_iter().enumerate() {
            let mut nodes: Vec<CategoryNode> = entries
                .into_iter()
                .map(|(code, (label, parent_code))| {
                    let parent = parent_code.map(|p| index[l - 1][&p]);
                    CategoryNode {
                        numeric: parse_code(&code).unwrap_or_default(),
                        code,
                        label,
                        parent,
                        children: Vec::new(),
                    }
                })
                .collect();
            nodes.sort_by(|a, b| a.numeric.cmp(&b.numeric).then_with(|| a.code.cmp(&b.code)));
            let idx: HashMap<String, usize> = nodes
                .iter()
                .enumerate()
                .map(|(i, n)| (n.code.clone(), i))
                .collect();
            if l > 0 {
                for (i, n) in nodes.iter().enumerate() {
                    let p = n.parent.expect("non-root has parent");
                    levels[l - 1][p].children.push(i);
                }
            }
            levels.push(nodes);
            index.push(idx);
        }
        Ok(HierarchySpec {
            level_names,
            levels,
            index,
        })
    }

    pub fn level_count(&self) -> usize {
        self.levels.len()
    }

    pub fn level_names(&self) -> &[String] {
        &self.level_names
    }

    pub fn level(&self, l: usize) -> &[CategoryNode] {
        &self.levels[l]
    }

    pub fn node(&self, level: usize, idx: usize) -> &CategoryNode {
        &self.levels[level][idx]
    }

    pub fn find(&self, level: usize, code: &str) -> Option<usize> {
        self.index.get(level)?.get(code).copied()
    }

    /// Resolves every prefix of `path` to node indices.
    pub fn resolve(&self, path: &CategoryPath) -> Option<Vec<usize>> {
        if path.len() != self.level_count() {
            return None;
        }
        let mut out = Vec::with_capacity(path.len());
        for (l, code) in path.codes.iter().enumerate() {
            let idx = self.find(l, code)?;
            if l > 0 && self.levels[l][idx].parent != Some(out[l - 1]) {
                return None;
            }
            out.push(idx);
        }
        Some(out)
    }

    /// Full path of a node, top level first.
    pub fn path_of(&self, level: usize, idx: usize) -> CategoryPath {
        let mut codes = vec![String::new(); level + 1];
        let mut cur = idx;
        for l in (0..=level).rev() {
            let node = &self.levels[l][cur];
            codes[l] = node.code.clone();
            if let Some(p) = node.parent {
                cur = p;
            }
        }
        CategoryPath { codes }
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self, DataError> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.len() < 2 || headers.len() % 2 != 0 {
            return Err(DataError::InvalidHierarchy(
                "header must hold one code and one label column per level".into(),
            ));
        }
        let depth = headers.len() / 2;
        let level_names: Vec<String> = headers.iter().take(depth).map(str::to_string).collect();
        let mut leaves = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            if rec.len() != 2 * depth {
                return Err(DataError::MalformedRow {
                    row: i + 1,
                    reason: format!("expected {} fields, found {}", 2 * depth, rec.len()),
                });
            }
            let codes = rec.iter().take(depth).map(|s| s.trim().to_string()).collect();
            let labels = rec.iter().skip(depth).map(|s| s.trim().to_string()).collect();
            leaves.push((codes, labels));
        }
        HierarchySpec::from_leaves(level_names, &leaves)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), DataError> {
        let mut wtr = csv::Writer::from_writer(writer);
        let mut header: Vec<String> = self.level_names.clone();
        header.extend(self.level_names.iter().map(|n| format!("{n}_label")));
        wtr.write_record(&header)?;
        let last = self.level_count() - 1;
        for idx in 0..self.levels[last].len() {
            let path = self.path_of(last, idx);
            let nodes = self.resolve(&path).expect("own path resolves");
            let mut row = path.codes.clone();
            row.extend(
                nodes
                    .iter()
                    .enumerate()
                    .map(|(l, &i)| self.levels[l][i].label.clone()),
            );
            wtr.write_record(&row)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// One company-year observation.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyRecord {
    pub company_id: String,
    pub year: i32,
    pub path: CategoryPath,
    /// Capped claim amount.
    pub claim_amount: f64,
    pub claim_count: u64,
    pub salary_mass: f64,
}

impl PolicyRecord {
    pub fn damage_rate(&self) -> f64 {
        damage_rate(self)
    }
}

/// Claim amount per unit of salary mass.
pub fn damage_rate(record: &PolicyRecord) -> f64 {
    record.claim_amount / record.salary_mass
}

fn validate_record(row: usize, r: &PolicyRecord) -> Result<(), DataError> {
    if !(r.salary_mass > 0.0) || !r.salary_mass.is_finite() {
        return Err(DataError::NonPositiveMass { row });
    }
    if !(r.claim_amount >= 0.0) || !r.claim_amount.is_finite() {
        return Err(DataError::NegativeAmount { row });
    }
    if r.claim_count == 0 && r.claim_amount != 0.0 {
        return Err(DataError::MalformedRow {
            row,
            reason: "positive claim amount with zero claims".into(),
        });
    }
    Ok(())
}

/// Validated records plus the hierarchy they are classified in.
#[derive(Debug, Clone)]
pub struct Portfolio {
    records: Vec<PolicyRecord>,
    nodes: Vec<Vec<usize>>,
    hierarchy: HierarchySpec,
    split_year: Option<i32>,
}

impl Portfolio {
    /// Validates records against the hierarchy and sorts them by `(company_id, year)`.
    pub fn new(
        hierarchy: HierarchySpec,
        records: Vec<PolicyRecord>,
        split_year: Option<i32>,
    ) -> Result<Self, DataError> {
        let mut resolved = Vec::with_capacity(records.len());
        for (i, r) in records.iter().enumerate() {
            let row = i + 1;
            let nodes = hierarchy
                .resolve(&r.path)
                .ok_or_else(|| DataError::UnknownCategory {
                    row,
                    path: r.path.to_string(),
                })?;
            validate_record(row, r)?;
            resolved.push(nodes);
        }
        let mut order: Vec<usize> = (0..records.len()).collect();
        order.sort_by(|&a, &b| {
            records[a]
                .company_id
                .cmp(&records[b].company_id)
                .then(records[a].year.cmp(&records[b].year))
        });
        let mut slots: Vec<Option<PolicyRecord>> = records.into_iter().map(Some).collect();
        let records: Vec<PolicyRecord> = order.iter().map(|&i| slots[i].take().unwrap()).collect();
        let nodes = order.iter().map(|&i| std::mem::take(&mut resolved[i])).collect();
        let p = Portfolio {
            records,
            nodes,
            hierarchy,
            split_year,
        };
        if p.train_indices().next().is_none() {
            return Err(DataError::EmptyTrainingSet);
        }
        Ok(p)
    }

    pub fn records(&self) -> &[PolicyRecord] {
        &self.records
    }

    pub fn hierarchy(&self) -> &HierarchySpec {
        &self.hierarchy
    }

    pub fn split_year(&self) -> Option<i32> {
        self.split_year
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Node index of record `i` at `level`.
    pub fn node_of(&self, i: usize, level: usize) -> usize {
        self.nodes[i][level]
    }

    pub fn is_train(&self, i: usize) -> bool {
        match self.split_year {
            Some(y) => self.records[i].year < y,
            None => true,
        }
    }

    pub fn train_indices(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.records.len()).filter(|&i| self.is_train(i))
    }

    pub fn test_indices(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.records.len()).filter(|&i| !self.is_train(i))
    }

    pub fn has_test(&self) -> bool {
        self.test_indices().next().is_some()
    }

    /// Training-record salary mass per node at `level`.
    pub fn train_mass(&self, level: usize) -> Vec<f64> {
        let mut mass = vec![0.0; self.hierarchy.level(level).len()];
        for i in self.train_indices() {
            mass[self.nodes[i][level]] += self.records[i].salary_mass;
        }
        mass
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), DataError> {
        let mut wtr = csv::Writer::from_writer(writer);
        let mut header = vec!["company_id".to_string(), "year".to_string()];
        header.extend(self.hierarchy.level_names().iter().cloned());
        header.extend(["claim_amount", "claim_count", "salary_mass"].map(String::from));
        wtr.write_record(&header)?;
        for r in &self.records {
            let mut row = vec![r.company_id.clone(), r.year.to_string()];
            row.extend(r.path.codes.iter().cloned());
            row.push(r.claim_amount.to_string());
            row.push(r.claim_count.to_string());
            row.push(r.salary_mass.to_string());
            wtr.write_record(&row)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Reads a portfolio CSV and validates it against `hierarchy`.
///
/// Level columns are matched by name against the hierarchy's level names.
/// Row numbers in errors count data rows from 1.
pub fn load_portfolio<R: Read>(
    reader: R,
    hierarchy: HierarchySpec,
    split_year: Option<i32>,
) -> Result<Portfolio, DataError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let missing = |name: &str| DataError::MalformedRow {
        row: 0,
        reason: format!("missing column {name:?}"),
    };
    let company = col("company_id").ok_or_else(|| missing("company_id"))?;
    let year = col("year").ok_or_else(|| missing("year"))?;
    let amount = col("claim_amount").ok_or_else(|| missing("claim_amount"))?;
    let count = col("claim_count").ok_or_else(|| missing("claim_count"))?;
    let mass = col("salary_mass").ok_or_else(|| missing("salary_mass"))?;
    let level_cols: Vec<usize> = hierarchy
        .level_names()
        .iter()
        .map(|n| col(n).ok_or_else(|| missing(n)))
        .collect::<Result<_, _>>()?;

    let mut records = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| DataError::MalformedRow {
            row,
            reason: e.to_string(),
        })?;
        let field = |c: usize| rec.get(c).unwrap_or("");
        let bad = |what: &str, v: &str| DataError::MalformedRow {
            row,
            reason: format!("cannot parse {what} from {v:?}"),
        };
        let year_v: i32 = field(year).parse().map_err(|_| bad("year", field(year)))?;
        let amount_v: f64 = field(amount)
            .parse()
            .map_err(|_| bad("claim_amount", field(amount)))?;
        let mass_v: f64 = field(mass)
            .parse()
            .map_err(|_| bad("salary_mass", field(mass)))?;
        let count_s = field(count);
        let count_v: u64 = match count_s.parse::<i64>() {
            Ok(c) if c >= 0 => c as u64,
            _ => return Err(bad("claim_count", count_s)),
        };
        let path = CategoryPath::new(level_cols.iter().map(|&c| field(c).to_string()));
        if hierarchy.resolve(&path).is_none() {
            return Err(DataError::UnknownCategory {
                row,
                path: path.to_string(),
            });
        }
        let r = PolicyRecord {
            company_id: field(company).to_string(),
            year: year_v,
            path,
            claim_amount: amount_v,
            claim_count: count_v,
            salary_mass: mass_v,
        };
        validate_record(row, &r)?;
        records.push(r);
    }
    Portfolio::new(hierarchy, records, split_year)
}
