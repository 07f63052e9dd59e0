//! Experiment configs, grid runs, comparison tables and plot data.
//!
//! A run directory holds `manifest.json`, the resolved `config.toml`, and one
//! `<cell>/seed-<n>/` directory per record with `record.json`, `report.json`,
//! `reliability.csv`, `train_log.csv` and, when the strategy produces them,
//! `policy.csv`, `forgetting.csv` and `forgetting_epochs.csv`. Wall-clock time
//! goes to `timing.json` so the other files stay reproducible.

mod compare;
mod config;
mod io;
mod plot;
mod run;

pub use compare::{compare, compare_dirs, Stat, Summary, SummaryRow, METRICS};
pub use config::{Cell, DataConfig, EvalConfig, ExperimentConfig, StrategyEntry};
pub use io::{read_csv, read_json, write_csv, write_json};
pub use plot::{emit_plot_data, policy_counts, reliability_rows, shift_curve, PlotKind, PolicyCountRow, ReliabilityRow, ShiftPoint};
pub use run::{
    build_data, execute, load_manifest, load_records, record_dir, run, train_config_for, worker_count, write_cell_run,
    CellRun, CorruptedMetrics, Manifest, ManifestEntry, RunRecord, RunStatus, TemperatureResult, WORKERS_ENV,
};
