//! Experiment configuration: TOML file, `--set` overrides and defaults.

use std::path::{Path, PathBuf};

use ossl_core::adapt::AdaptConfig;
use ossl_core::datagen::DatasetSpec;
use ossl_core::eval::EvalOptions;
use ossl_core::model::SourceConfig;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Synthetic dataset used when no data files are given.
    pub dataset: DatasetSpec,
    /// Dataset files written by `gen-data`; override `dataset` when set.
    pub data: DataFiles,
    pub source: SourceConfig,
    pub adapt: AdaptConfig,
    pub eval: EvalOptions,
    /// Root under which run directories are created.
    pub output_root: PathBuf,
    /// Seeds iterated by `sweep` and `ablate`.
    pub seeds: Vec<u64>,
    pub sweep: SweepGrid,
    pub ablate: AblateGrid,
    /// Write an adapted checkpoint every this many epochs (0 = final only).
    pub checkpoint_every: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataFiles {
    pub train: Option<PathBuf>,
    pub test: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepGrid {
    pub mu: Vec<f64>,
    pub gamma: Vec<f64>,
}

impl Default for SweepGrid {
    fn default() -> Self {
        Self {
            mu: vec![0.3, 0.4, 0.5, 0.6, 0.7],
            gamma: vec![0.01, 0.02, 0.03, 0.04, 0.05],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblateGrid {
    /// Injection counts tried besides "no injection".
    pub injection: Vec<usize>,
}

impl Default for AblateGrid {
    fn default() -> Self {
        Self { injection: vec![16] }
    }
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetSpec::default(),
            data: DataFiles::default(),
            source: SourceConfig::default(),
            adapt: AdaptConfig::default(),
            eval: EvalOptions::default(),
            output_root: PathBuf::from("runs"),
            seeds: vec![0, 1, 2, 3, 4],
            sweep: SweepGrid::default(),
            ablate: AblateGrid::default(),
            checkpoint_every: 0,
        }
    }
}

impl ExperimentConfig {
    /// Reads `path` (if any), applies `key=value` overrides on dotted paths
    /// and fills everything else with defaults.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self, CliError> {
        let mut table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Config(format!("cannot read {}: {e}", p.display())))?;
                text.parse::<toml::Table>()
                    .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
            }
            None => toml::Table::new(),
        };
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let config: Self = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.dataset.validate()?;
        self.source.validate()?;
        self.adapt.validate()?;
        if !(self.eval.retention > 0.0 && self.eval.retention <= 1.0) {
            return Err(CliError::Config("invalid eval.retention: must lie in (0, 1]".into()));
        }
        if self.seeds.is_empty() {
            return Err(CliError::Config("invalid seeds: must not be empty".into()));
        }
        if self.sweep.mu.is_empty() || self.sweep.gamma.is_empty() {
            return Err(CliError::Config("invalid sweep: mu and gamma grids must not be empty".into()));
        }
        if self.data.train.is_some() != self.data.test.is_some() {
            return Err(CliError::Config("invalid data: give both train and test files or neither".into()));
        }
        Ok(())
    }

    /// Resolved configuration as TOML; loading it back yields `self`.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration is always representable")
    }

    /// Uses `seed` for data generation, source training and adaptation.
    pub fn with_seed(&self, seed: u64) -> Self {
        let mut c = self.clone();
        c.dataset.seed = seed;
        c.source.seed = seed;
        c.adapt.seed = seed;
        c
    }
}

/// Sets `a.b.c = value` in `table`. The value is parsed as TOML and taken as
/// a bare string if that fails.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<(), CliError> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override `{assignment}` is not key=value")))?;
    let key = key.trim();
    let raw = raw.trim();
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::Config(format!("override key `{key}` is malformed")));
    }
    let mut node = table;
    for part in &parts[..parts.len() - 1] {
        let entry = node
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        node = entry
            .as_table_mut()
            .ok_or_else(|| CliError::Config(format!("override key `{key}`: `{part}` is not a table")))?;
    }
    node.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn desk_profile_file_matches_core() {
        let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/desk.toml");
        let c = ExperimentConfig::load(Some(&path), &[]).unwrap();
        assert_eq!(c.adapt, AdaptConfig::desk());
    }

    #[test]
    fn defaults_round_trip_through_toml() {
        let c = ExperimentConfig::default();
        let back: ExperimentConfig = toml::from_str(&c.to_toml()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn overrides_reach_nested_fields() {
        let c = ExperimentConfig::load(None, &["adapt.mu=0.7".into(), "dataset.kind=\"concentric-rings\"".into()]).unwrap();
        assert_eq!(c.adapt.mu, 0.7);
        assert_eq!(c.dataset.kind, ossl_core::datagen::GeneratorKind::ConcentricRings);
        let c = ExperimentConfig::load(None, &["dataset.kind=held-out-split".into()]).unwrap();
        assert_eq!(c.dataset.kind, ossl_core::datagen::GeneratorKind::HeldOutSplit);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = ExperimentConfig::load(None, &["adapt.nonsense=1".into()]).unwrap_err();
        assert!(err.to_string().contains("nonsense"), "{err}");
    }

    #[test]
    fn invalid_values_name_the_field() {
        let err = ExperimentConfig::load(None, &["adapt.gamma=2.0".into()]).unwrap_err();
        assert!(err.to_string().contains("gamma"), "{err}");
        assert!(ExperimentConfig::load(None, &["noequals".into()]).is_err());
    }

    #[test]
    fn with_seed_sets_every_seed() {
        let c = ExperimentConfig::default().with_seed(9);
        assert_eq!((c.dataset.seed, c.source.seed, c.adapt.seed), (9, 9, 9));
    }
}
