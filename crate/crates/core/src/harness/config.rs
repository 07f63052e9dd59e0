use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::augment::AugmentStrategy;
use crate::calibration::ReportOptions;
use crate::data::{ClusterSpec, CorruptionFamily};
use crate::ensembles::EnsembleSpec;
use crate::error::{Error, Result};
use crate::netcore::TrainConfig;

/// Sizes of the validation and test sets built for every seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub val_fraction: f64,
    /// The test set is sampled afresh from the cluster distribution.
    pub test_samples_per_cluster: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self { val_fraction: 0.05, test_samples_per_cluster: 200 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub n_bins: usize,
    pub tace_threshold: f64,
    pub temperature: bool,
    pub corruption_families: Vec<CorruptionFamily>,
    /// Corruption intensities to evaluate; empty skips shift evaluation.
    pub intensities: Vec<usize>,
    pub save_models: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            n_bins: 15,
            tace_threshold: 0.01,
            temperature: true,
            corruption_families: CorruptionFamily::ALL.to_vec(),
            intensities: vec![1, 2, 3, 4, 5],
            save_models: false,
        }
    }
}

impl EvalConfig {
    pub fn report_options(&self) -> ReportOptions {
        ReportOptions { n_bins: self.n_bins, tace_threshold: self.tace_threshold }
    }
}

/// One row of the strategy grid; `label` defaults to the strategy name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(flatten)]
    pub strategy: AugmentStrategy,
}

impl StrategyEntry {
    pub fn new(strategy: AugmentStrategy) -> Self {
        Self { label: None, strategy }
    }

    pub fn labelled(label: &str, strategy: AugmentStrategy) -> Self {
        Self { label: Some(label.into()), strategy }
    }

    pub fn label(&self) -> &str {
        self.label.as_deref().unwrap_or(self.strategy.name())
    }
}

/// A full experiment: every ensemble spec crossed with every strategy, run for every seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub output_dir: PathBuf,
    pub seeds: Vec<u64>,
    /// `dataset.seed` is combined with each run seed.
    pub dataset: ClusterSpec,
    pub data: DataConfig,
    /// `train.seed` is combined with each run seed.
    pub train: TrainConfig,
    pub ensembles: Vec<EnsembleSpec>,
    pub strategies: Vec<StrategyEntry>,
    pub eval: EvalConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            name: "experiment".into(),
            output_dir: PathBuf::from("runs"),
            seeds: vec![0],
            dataset: ClusterSpec::default(),
            data: DataConfig::default(),
            train: TrainConfig::default(),
            ensembles: vec![EnsembleSpec::default()],
            strategies: vec![StrategyEntry::new(AugmentStrategy::None)],
            eval: EvalConfig::default(),
        }
    }
}

/// One grid cell: an ensemble spec with a strategy.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub name: String,
    pub ensemble: EnsembleSpec,
    pub strategy: StrategyEntry,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        Self::from_toml_with(text, &[])
    }

    /// Parses `text`, applying `key.path=value` overrides first. Values are
    /// read as TOML and fall back to plain strings.
    pub fn from_toml_with(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = toml::from_str(text)?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let config: Self = toml::Value::Table(table).try_into()?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        Self::from_toml_with(&std::fs::read_to_string(path)?, overrides)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        if self.ensembles.is_empty() || self.strategies.is_empty() {
            return Err(Error::Config("the grid needs at least one ensemble and one strategy".into()));
        }
        self.dataset.validate()?;
        self.train.validate()?;
        if !(self.data.val_fraction > 0.0 && self.data.val_fraction < 1.0) {
            return Err(Error::Config(format!("val_fraction {} not in (0, 1)", self.data.val_fraction)));
        }
        if self.data.test_samples_per_cluster == 0 {
            return Err(Error::Config("test set must be non-empty".into()));
        }
        for e in &self.ensembles {
            e.validate()?;
        }
        for s in &self.strategies {
            s.strategy.validate()?;
        }
        if self.eval.n_bins == 0 || !(0.0..1.0).contains(&self.eval.tace_threshold) {
            return Err(Error::Config("eval needs n_bins ≥ 1 and tace_threshold in [0, 1)".into()));
        }
        if let Some(i) = self.eval.intensities.iter().find(|&&i| !(1..=5).contains(&i)) {
            return Err(Error::Config(format!("corruption intensity {i} outside 1..=5")));
        }
        let mut names = BTreeSet::new();
        for c in self.cells() {
            if !names.insert(c.name.clone()) {
                return Err(Error::Config(format!("duplicate grid cell {:?}; give strategies distinct labels", c.name)));
            }
        }
        Ok(())
    }

    /// Grid cells in config order, ensembles outermost.
    pub fn cells(&self) -> Vec<Cell> {
        self.ensembles
            .iter()
            .flat_map(|e| {
                self.strategies.iter().map(move |s| Cell {
                    name: format!("{}-{}", e.mode.name(), s.label()),
                    ensemble: e.clone(),
                    strategy: s.clone(),
                })
            })
            .collect()
    }

    /// Hash of everything that affects results; the output directory and seed list are excluded.
    pub fn hash(&self) -> String {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Some(m) = v.as_object_mut() {
            m.remove("output_dir");
            m.remove("seeds");
        }
        sha256_hex(&canonical_json(&v))
    }

    /// Hash of one cell, shared by all its seeds.
    pub fn cell_hash(&self, cell: &Cell) -> String {
        let v = serde_json::json!({
            "dataset": self.dataset,
            "data": self.data,
            "train": self.train,
            "ensemble": cell.ensemble,
            "strategy": cell.strategy.strategy,
            "eval": self.eval,
        });
        sha256_hex(&canonical_json(&v))
    }

    /// Hash of the data-generating part of the config.
    pub fn dataset_hash(&self) -> String {
        let v = serde_json::json!({ "dataset": self.dataset, "data": self.data });
        sha256_hex(&canonical_json(&v))
    }
}

/// JSON with object keys sorted (serde_json's default map is ordered).
fn canonical_json(v: &serde_json::Value) -> String {
    serde_json::to_string(v).expect("value serializes")
}

pub(crate) fn sha256_hex(s: &str) -> String {
    Sha256::digest(s.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

fn apply_override(table: &mut toml::Table, spec: &str) -> Result<()> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override {spec:?} is not key=value")))?;
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let parts: Vec<&str> = key.trim().split('.').collect();
    let (last, path) = parts.split_last().expect("split yields one part");
    let mut cur = table;
    for p in path {
        cur = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override {key:?}: {p:?} is not a table")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}
