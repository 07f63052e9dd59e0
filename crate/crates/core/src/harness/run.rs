use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{Cell, ExperimentConfig};
use super::io::{write_csv, write_json};
use crate::calibration::{
    apply_temperature, bin_predictions, ece, log_scores, scaled_nll, temperature_fit, write_reliability_csv,
    CalibrationReport, Metrics,
};
use crate::data::{corrupt, make_clusters, split, ClusterSpec, CorruptionFamily, CorruptionSpec, LabeledDataset, Splits};
use crate::ensembles::{predict_ensemble, train_ensemble, EnsembleMode, EnsembleModel, TrainLog};
use crate::error::{Error, Result};
use crate::netcore::{PredictionBatch, TrainConfig};
use crate::rng::{derive_seed, stream, tags};

/// Environment variable holding the number of worker threads for `run`.
pub const WORKERS_ENV: &str = "CALLAB_WORKERS";

/// Worker count from [`WORKERS_ENV`], defaulting to the available parallelism.
pub fn worker_count() -> Result<usize> {
    match std::env::var(WORKERS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(n),
            _ => Err(Error::Config(format!("{WORKERS_ENV} must be a positive integer, got {v:?}"))),
        },
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum RunStatus {
    Ok,
    /// Non-finite training loss; `loss` is its textual form.
    Diverged { epoch: usize, loss: String },
    Failed { message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorruptedMetrics {
    pub family: CorruptionFamily,
    pub intensity: usize,
    pub accuracy: f64,
    pub ece: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TemperatureResult {
    pub temperature: f64,
    pub val_nll_at_one: f64,
    pub val_nll_fitted: f64,
    /// Test metrics after scaling.
    pub test: Metrics,
}

/// Results of one grid cell for one seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub cell: String,
    pub mode: EnsembleMode,
    pub strategy: String,
    pub seed: u64,
    pub config_hash: String,
    pub dataset_hash: String,
    pub status: RunStatus,
    pub clean: Option<Metrics>,
    pub temperature: Option<TemperatureResult>,
    pub corrupted: Vec<CorruptedMetrics>,
    /// Mean corrupted accuracy over every evaluated family and intensity.
    pub c_acc: Option<f64>,
    /// Mean corrupted ECE over every evaluated family and intensity.
    pub c_ece: Option<f64>,
}

impl RunRecord {
    pub fn is_ok(&self) -> bool {
        self.status == RunStatus::Ok
    }
}

/// Everything one cell produces for one seed, before it is written out.
#[derive(Debug, Clone, PartialEq)]
pub struct CellRun {
    pub record: RunRecord,
    pub report: Option<CalibrationReport>,
    pub log: TrainLog,
    pub model: Option<EnsembleModel>,
}

/// Data for one run seed: training/validation splits and an independent test set.
pub fn build_data(config: &ExperimentConfig, seed: u64) -> Result<(Splits, LabeledDataset)> {
    let data_seed = derive_seed(config.dataset.seed, seed);
    let ds = make_clusters(&ClusterSpec { seed: data_seed, ..config.dataset.clone() })?;
    let test = make_clusters(&ClusterSpec {
        seed: derive_seed(data_seed, tags::TEST),
        samples_per_cluster: config.data.test_samples_per_cluster,
        ..config.dataset.clone()
    })?;
    Ok((split(&ds, config.data.val_fraction, data_seed)?, test))
}

pub fn train_config_for(config: &ExperimentConfig, seed: u64) -> TrainConfig {
    TrainConfig { seed: derive_seed(config.train.seed, seed), ..config.train.clone() }
}

/// Trains and evaluates one cell for one seed, in memory.
pub fn execute(config: &ExperimentConfig, cell: &Cell, seed: u64) -> Result<CellRun> {
    let (splits, test) = build_data(config, seed)?;
    let train_cfg = train_config_for(config, seed);
    let mut record = RunRecord {
        cell: cell.name.clone(),
        mode: cell.ensemble.mode,
        strategy: cell.strategy.label().to_string(),
        seed,
        config_hash: config.cell_hash(cell),
        dataset_hash: config.dataset_hash(),
        status: RunStatus::Ok,
        clean: None,
        temperature: None,
        corrupted: Vec::new(),
        c_acc: None,
        c_ece: None,
    };
    let trained = match train_ensemble(&cell.ensemble, &splits, &train_cfg, &cell.strategy.strategy) {
        Ok(t) => t,
        Err(Error::Diverged { epoch, loss }) => {
            log::warn!("{} seed {seed}: diverged at epoch {epoch}", cell.name);
            record.status = RunStatus::Diverged { epoch, loss: loss.to_string() };
            return Ok(CellRun { record, report: None, log: TrainLog::default(), model: None });
        }
        Err(e) => return Err(e),
    };
    let model = &trained.model;
    let opts = config.eval.report_options();
    let predict = |x: &LabeledDataset, path: &[u64]| -> Result<PredictionBatch> {
        let mut full = vec![tags::EVAL];
        full.extend_from_slice(path);
        predict_ensemble(model, x.features.view(), &mut stream(train_cfg.seed, &full))
    };

    let test_labels = test.hard_labels();
    let test_preds = predict(&test, &[0])?;
    let mut report = CalibrationReport::compute(&test_preds, &test_labels, &opts)?;
    record.clean = Some(report.metrics);

    if config.eval.temperature {
        let val_labels = splits.val.hard_labels();
        let val_scores = log_scores(&predict(&splits.val, &[1])?);
        match temperature_fit(&val_scores, &val_labels) {
            Ok(t) => {
                let scaled = apply_temperature(&log_scores(&test_preds), t)?;
                let after = CalibrationReport::compute(&scaled, &test_labels, &opts)?;
                report.fitted_temperature = Some(t);
                record.temperature = Some(TemperatureResult {
                    temperature: t,
                    val_nll_at_one: scaled_nll(&val_scores, &val_labels, 1.0),
                    val_nll_fitted: scaled_nll(&val_scores, &val_labels, t),
                    test: after.metrics,
                });
            }
            Err(e) => log::warn!("{} seed {seed}: temperature scaling skipped: {e}", cell.name),
        }
    }

    for &family in &config.eval.corruption_families {
        for &intensity in &config.eval.intensities {
            let shifted = corrupt(&test, &CorruptionSpec { family, intensity }, derive_seed(config.dataset.seed, seed))?;
            let p = predict(&shifted, &[2, family as u64, intensity as u64])?;
            let bins = bin_predictions(&p, &test_labels, opts.n_bins)?;
            record.corrupted.push(CorruptedMetrics { family, intensity, accuracy: p.accuracy(&test_labels), ece: ece(&bins)? });
        }
    }
    if !record.corrupted.is_empty() {
        let n = record.corrupted.len() as f64;
        record.c_acc = Some(record.corrupted.iter().map(|c| c.accuracy).sum::<f64>() / n);
        record.c_ece = Some(record.corrupted.iter().map(|c| c.ece).sum::<f64>() / n);
    }
    Ok(CellRun {
        record,
        report: Some(report),
        log: trained.log,
        model: Some(trained.model),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub cell: String,
    pub mode: EnsembleMode,
    pub strategy: String,
    pub seed: u64,
    /// Relative to the manifest's directory.
    pub dir: PathBuf,
    pub status: RunStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub name: String,
    pub config_hash: String,
    pub dataset_hash: String,
    pub epochs: usize,
    pub records: Vec<ManifestEntry>,
}

pub const MANIFEST_FILE: &str = "manifest.json";
pub const RECORD_FILE: &str = "record.json";
pub const REPORT_FILE: &str = "report.json";

pub fn record_dir(cell: &str, seed: u64) -> PathBuf {
    PathBuf::from(cell).join(format!("seed-{seed}"))
}

/// Writes every artifact of `run` under `dir`.
pub fn write_cell_run(dir: &Path, run: &CellRun, save_model: bool) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_json(&dir.join(RECORD_FILE), &run.record)?;
    if let Some(report) = &run.report {
        fs::write(dir.join(REPORT_FILE), report.to_json()?)?;
        write_reliability_csv(&report.reliability(), fs::File::create(dir.join("reliability.csv"))?)?;
    }
    write_csv(&dir.join("train_log.csv"), &run.log.epochs)?;
    if !run.log.policy.is_empty() {
        write_csv(&dir.join("policy.csv"), &run.log.policy)?;
    }
    if !run.log.forgetting.is_empty() {
        write_csv(&dir.join("forgetting.csv"), &run.log.forgetting)?;
        write_csv(&dir.join("forgetting_epochs.csv"), &run.log.forgetting_epochs)?;
    }
    if let (true, Some(model)) = (save_model, &run.model) {
        model.save(&dir.join("model.json"))?;
    }
    Ok(())
}

#[derive(Serialize)]
struct Timing {
    wall_clock_secs: f64,
}

/// Runs every grid cell for every seed, in parallel up to [`worker_count`]
/// threads, and writes records plus a top-level manifest.
pub fn run(config: &ExperimentConfig) -> Result<Vec<RunRecord>> {
    config.validate()?;
    let out = &config.output_dir;
    fs::create_dir_all(out)?;
    fs::write(out.join("config.toml"), config.to_toml()?)?;
    let cells = config.cells();
    let jobs: Vec<(&Cell, u64)> = cells.iter().flat_map(|c| config.seeds.iter().map(move |&s| (c, s))).collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(worker_count()?)
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    let results: Vec<Result<RunRecord>> = pool.install(|| {
        jobs.par_iter()
            .map(|&(cell, seed)| {
                let start = Instant::now();
                let run = execute(config, cell, seed).unwrap_or_else(|e| {
                    log::error!("{} seed {seed}: {e}", cell.name);
                    failed_run(config, cell, seed, &e)
                });
                let dir = out.join(record_dir(&cell.name, seed));
                write_cell_run(&dir, &run, config.eval.save_models)?;
                write_json(&dir.join("timing.json"), &Timing { wall_clock_secs: start.elapsed().as_secs_f64() })?;
                log::info!("{} seed {seed}: {:?}", cell.name, run.record.status);
                Ok(run.record)
            })
            .collect()
    });
    let records = results.into_iter().collect::<Result<Vec<_>>>()?;
    let manifest = Manifest {
        name: config.name.clone(),
        config_hash: config.hash(),
        dataset_hash: config.dataset_hash(),
        epochs: config.train.epochs,
        records: records
            .iter()
            .map(|r| ManifestEntry {
                cell: r.cell.clone(),
                mode: r.mode,
                strategy: r.strategy.clone(),
                seed: r.seed,
                dir: record_dir(&r.cell, r.seed),
                status: r.status.clone(),
            })
            .collect(),
    };
    write_json(&out.join(MANIFEST_FILE), &manifest)?;
    Ok(records)
}

fn failed_run(config: &ExperimentConfig, cell: &Cell, seed: u64, e: &Error) -> CellRun {
    CellRun {
        record: RunRecord {
            cell: cell.name.clone(),
            mode: cell.ensemble.mode,
            strategy: cell.strategy.label().to_string(),
            seed,
            config_hash: config.cell_hash(cell),
            dataset_hash: config.dataset_hash(),
            status: RunStatus::Failed { message: e.to_string() },
            clean: None,
            temperature: None,
            corrupted: Vec::new(),
            c_acc: None,
            c_ece: None,
        },
        report: None,
        log: TrainLog::default(),
        model: None,
    }
}

pub fn load_manifest(dir: &Path) -> Result<Manifest> {
    Ok(serde_json::from_str(&fs::read_to_string(dir.join(MANIFEST_FILE))?)?)
}

/// Records listed in the manifest under `dir`, in manifest order.
pub fn load_records(dir: &Path) -> Result<Vec<RunRecord>> {
    load_manifest(dir)?
        .records
        .iter()
        .map(|e| Ok(serde_json::from_str(&fs::read_to_string(dir.join(&e.dir).join(RECORD_FILE))?)?))
        .collect()
}
