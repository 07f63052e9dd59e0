//! Temperature scaling of an under-confident Mixup ensemble, fitted on the
//! validation split and applied to the test split.

use callab::augment::AugmentStrategy;
use callab::calibration::{apply_temperature, log_scores, scaled_nll, temperature_fit, CalibrationReport, ReportOptions};
use callab::ensembles::{predict_ensemble, train_ensemble, EnsembleSpec};
use callab::harness::{build_data, ExperimentConfig};
use callab::netcore::TrainConfig;
use callab::rng::stream;

fn main() -> callab::Result<()> {
    let (splits, test) = build_data(&ExperimentConfig::default(), 1)?;
    let model = train_ensemble(&EnsembleSpec::default(), &splits, &TrainConfig::default(), &AugmentStrategy::Mixup { a: 1.0 })?.model;
    let val_labels = splits.val.hard_labels();
    let val = log_scores(&predict_ensemble(&model, splits.val.features.view(), &mut stream(0, &[1]))?);
    let t = temperature_fit(&val, &val_labels)?;
    println!("fitted T {t:.3}: val NLL {:.4} -> {:.4}", scaled_nll(&val, &val_labels, 1.0), scaled_nll(&val, &val_labels, t));

    let labels = test.hard_labels();
    let opts = ReportOptions::default();
    let raw = predict_ensemble(&model, test.features.view(), &mut stream(0, &[0]))?;
    let scaled = apply_temperature(&log_scores(&raw), t)?;
    for (name, p) in [("raw", &raw), ("scaled", &scaled)] {
        let m = CalibrationReport::compute(p, &labels, &opts)?.metrics;
        println!("{name:<7} acc {:.3}  conf {:.3}  ECE {:.4}  NLL {:.4}", m.accuracy, m.mean_confidence, m.ece, m.nll);
    }
    Ok(())
}
