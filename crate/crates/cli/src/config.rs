//! Flat `key = value` run configuration with flag overrides.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use phirat_core::clustering::{Algorithm, Linkage};
use phirat_core::phirat::{ClusterSettings, PhiratConfig};
use phirat_core::synth::GeneratorSpec;
use phirat_core::validation::{IndexName, Variant};

use crate::error::CliError;

/// Every recognised key with its default. Paths default to files inside `out`.
const DEFAULTS: &[(&str, &str)] = &[
    ("out", "phirat-out"),
    ("portfolio", ""),
    ("hierarchy", ""),
    ("embeddings", ""),
    ("solution", ""),
    ("algorithm", "kmedoids"),
    ("linkage", "complete"),
    ("index", "ch"),
    ("variant", "full_angular"),
    ("grids", "2-8;2-6"),
    ("min_mass", "2000"),
    ("seed", "20240501"),
    ("split_year", "auto"),
    ("kmeans_restarts", "10"),
    ("spectral_restarts", "100"),
    ("sweep_algorithms", "kmedoids,spectral,hca"),
    ("sim.level1_groups", "4"),
    ("sim.level1_per_group", "6"),
    ("sim.level2_groups", "3"),
    ("sim.level2_per_group", "2"),
    ("sim.damage_scale", "0.4"),
    ("sim.frequency_scale", "0.4"),
    ("sim.child_effect_ratio", "1"),
    ("sim.companies", "8"),
    ("sim.years", "8"),
    ("sim.first_year", "2015"),
    ("sim.test_years", "3"),
    ("sim.mass_log_mean", "4.605170185988092"),
    ("sim.mass_log_sd", "0.7"),
    ("sim.base_frequency", "0.002"),
    ("sim.mean_severity", "1"),
    ("sim.embedding_dim", "16"),
    ("sim.encoder_noise", "0.25,0.5"),
];

/// Raw key-value pairs after merging defaults, file and overrides.
#[derive(Debug, Clone, PartialEq)]
pub struct RawConfig {
    values: BTreeMap<String, String>,
}

impl RawConfig {
    pub fn defaults() -> Self {
        RawConfig {
            values: DEFAULTS.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
        }
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        if !self.values.contains_key(key) {
            return Err(CliError::Config(format!("unknown key `{key}`")));
        }
        self.values.insert(key.to_string(), value.trim().to_string());
        Ok(())
    }

    /// Applies `key = value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<(), CliError> {
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("line {}: expected key = value", n + 1)))?;
            self.set(k.trim(), v)?;
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).unwrap_or("")
    }

    /// Canonical text: sorted `key = value` lines. Hashed into the manifest.
    pub fn canonical(&self) -> String {
        self.values.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub raw: RawConfig,
    pub out: PathBuf,
    pub portfolio: PathBuf,
    pub hierarchy: PathBuf,
    pub embeddings: Vec<PathBuf>,
    pub solution: PathBuf,
    pub phirat: PhiratConfig,
    pub split_year: Option<i32>,
    pub generator: GeneratorSpec,
    pub sweep_algorithms: Vec<Algorithm>,
}

fn parse<T: std::str::FromStr>(raw: &RawConfig, key: &str) -> Result<T, CliError> {
    raw.get(key)
        .parse()
        .map_err(|_| CliError::Config(format!("`{key}` has invalid value `{}`", raw.get(key))))
}

fn parse_list<T: std::str::FromStr>(raw: &RawConfig, key: &str) -> Result<Vec<T>, CliError> {
    raw.get(key)
        .split(',')
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|_| CliError::Config(format!("`{key}` has invalid entry `{s}`")))
        })
        .collect()
}

/// `2-8;2-6` or `2,3,5;4` into one candidate list per level.
pub fn parse_grids(text: &str) -> Result<Vec<Vec<usize>>, CliError> {
    let bad = || CliError::Config(format!("invalid grids `{text}`"));
    let mut grids = Vec::new();
    for level in text.split(';') {
        let mut ks = Vec::new();
        for part in level.split(',') {
            let part = part.trim();
            if let Some((a, b)) = part.split_once('-') {
                let a: usize = a.trim().parse().map_err(|_| bad())?;
                let b: usize = b.trim().parse().map_err(|_| bad())?;
                if a > b {
                    return Err(bad());
                }
                ks.extend(a..=b);
            } else {
                ks.push(part.parse().map_err(|_| bad())?);
            }
        }
        if ks.is_empty() || ks.contains(&0) {
            return Err(bad());
        }
        grids.push(ks);
    }
    Ok(grids)
}

fn parse_algorithm(name: &str, linkage: Linkage) -> Result<Algorithm, CliError> {
    match Algorithm::from_name(name) {
        Some(Algorithm::Hca(_)) if name == "hca" => Ok(Algorithm::Hca(linkage)),
        Some(a) => Ok(a),
        None => Err(CliError::Config(format!("unknown algorithm `{name}`"))),
    }
}

fn path_or(raw: &RawConfig, key: &str, out: &Path, default: &str) -> PathBuf {
    match raw.get(key) {
        "" => out.join(default),
        p => PathBuf::from(p),
    }
}

impl RunConfig {
    pub fn resolve(raw: RawConfig) -> Result<Self, CliError> {
        let out = PathBuf::from(raw.get("out"));
        let linkage = Linkage::from_name(raw.get("linkage"))
            .ok_or_else(|| CliError::Config(format!("unknown linkage `{}`", raw.get("linkage"))))?;
        let algorithm = parse_algorithm(raw.get("algorithm"), linkage)?;
        let index = IndexName::from_name(raw.get("index"))
            .ok_or_else(|| CliError::Config(format!("unknown index `{}`", raw.get("index"))))?;
        let variant = Variant::from_name(raw.get("variant"))
            .ok_or_else(|| CliError::Config(format!("unknown variant `{}`", raw.get("variant"))))?;
        let min_mass: f64 = parse(&raw, "min_mass")?;
        if !(min_mass > 0.0 && min_mass.is_finite()) {
            return Err(CliError::Config("`min_mass` must be positive".into()));
        }
        let seed: u64 = parse(&raw, "seed")?;
        let generator = GeneratorSpec {
            seed,
            level1_groups: parse(&raw, "sim.level1_groups")?,
            level1_per_group: parse(&raw, "sim.level1_per_group")?,
            level2_groups: parse(&raw, "sim.level2_groups")?,
            level2_per_group: parse(&raw, "sim.level2_per_group")?,
            damage_scale: parse(&raw, "sim.damage_scale")?,
            frequency_scale: parse(&raw, "sim.frequency_scale")?,
            child_effect_ratio: parse(&raw, "sim.child_effect_ratio")?,
            companies_per_category: parse(&raw, "sim.companies")?,
            years: parse(&raw, "sim.years")?,
            first_year: parse(&raw, "sim.first_year")?,
            test_years: parse(&raw, "sim.test_years")?,
            mass_log_mean: parse(&raw, "sim.mass_log_mean")?,
            mass_log_sd: parse(&raw, "sim.mass_log_sd")?,
            base_frequency: parse(&raw, "sim.base_frequency")?,
            mean_severity: parse(&raw, "sim.mean_severity")?,
            embedding_dim: parse(&raw, "sim.embedding_dim")?,
            encoder_noise: parse_list(&raw, "sim.encoder_noise")?,
        };
        generator.validate().map_err(|e| CliError::Config(e.to_string()))?;
        let split_year = match raw.get("split_year") {
            "auto" => generator.split_year(),
            "none" => None,
            _ => Some(parse(&raw, "split_year")?),
        };
        let embeddings = match raw.get("embeddings") {
            "" => (1..=generator.encoder_noise.len())
                .map(|e| out.join(format!("embeddings_enc{e}.csv")))
                .collect(),
            list => list.split(',').map(|p| PathBuf::from(p.trim())).collect(),
        };
        let sweep_algorithms = raw
            .get("sweep_algorithms")
            .split(',')
            .map(|a| parse_algorithm(a.trim(), linkage))
            .collect::<Result<_, _>>()?;
        let phirat = PhiratConfig {
            settings: ClusterSettings {
                algorithm,
                kmeans_restarts: parse(&raw, "kmeans_restarts")?,
                spectral_restarts: parse(&raw, "spectral_restarts")?,
            },
            index,
            variant,
            grids: parse_grids(raw.get("grids"))?,
            min_mass,
            seed,
        };
        Ok(RunConfig {
            portfolio: path_or(&raw, "portfolio", &out, "portfolio.csv"),
            hierarchy: path_or(&raw, "hierarchy", &out, "hierarchy.csv"),
            solution: path_or(&raw, "solution", &out, "solution.csv"),
            embeddings,
            out,
            phirat,
            split_year,
            generator,
            sweep_algorithms,
            raw,
        })
    }
}

/// Encoder name from an embeddings path: the file stem without an `embeddings_` prefix.
pub fn encoder_name(path: &Path) -> String {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("encoder");
    stem.strip_prefix("embeddings_").unwrap_or(stem).to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grids_parse() {
        assert_eq!(parse_grids("2-4;3,5").unwrap(), vec![vec![2, 3, 4], vec![3, 5]]);
        assert!(parse_grids("4-2").is_err());
        assert!(parse_grids("0,1").is_err());
        assert!(parse_grids("a").is_err());
    }

    #[test]
    fn file_then_override() {
        let mut raw = RawConfig::defaults();
        raw.apply_text("# comment\nindex = db\nseed=5\n").unwrap();
        raw.set("seed", "9").unwrap();
        let cfg = RunConfig::resolve(raw).unwrap();
        assert_eq!(cfg.phirat.index, IndexName::DaviesBouldin);
        assert_eq!(cfg.phirat.seed, 9);
        assert_eq!(cfg.split_year, Some(2020));
        assert_eq!(cfg.embeddings.len(), 2);
    }

    #[test]
    fn rejects_unknown() {
        let mut raw = RawConfig::defaults();
        assert!(matches!(raw.set("colour", "red"), Err(CliError::Config(_))));
        raw.set("index", "gap").unwrap();
        assert!(matches!(RunConfig::resolve(raw), Err(CliError::Config(_))));
    }

    #[test]
    fn hca_takes_linkage() {
        let mut raw = RawConfig::defaults();
        raw.set("algorithm", "hca").unwrap();
        raw.set("linkage", "single").unwrap();
        let cfg = RunConfig::resolve(raw).unwrap();
        assert_eq!(cfg.phirat.settings.algorithm, Algorithm::Hca(Linkage::Single));
    }

    #[test]
    fn canonical_is_sorted() {
        let c = RawConfig::defaults().canonical();
        let keys: Vec<&str> = c.lines().map(|l| l.split(" = ").next().unwrap()).collect();
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(keys, sorted);
    }
}
