//! Calibration metrics, reliability statistics and temperature scaling.
//!
//! Confidence bins are right-closed, `((m−1)/M, m/M]`, with a confidence of
//! exactly zero placed in the first bin.

mod metrics;
mod report;
mod temperature;

pub use metrics::{
    ace, adaptive_bins, bin_index, bin_predictions, count_above, ece, nll, reliability_data, sce, sce_with, tace, Bin,
    BinStats, Binning, ReliabilityPoint,
};
pub use report::{read_reliability_csv, write_reliability_csv, CalibrationReport, ClassGap, Metrics, ReportOptions};
pub use temperature::{apply_temperature, log_scores, scaled_nll, temperature_fit};
