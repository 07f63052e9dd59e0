//! Trains one network on the five-cluster task and reports its calibration.

use callab::augment::AugmentStrategy;
use callab::calibration::{CalibrationReport, ReportOptions};
use callab::ensembles::train_single;
use callab::harness::{build_data, ExperimentConfig};
use callab::netcore::{ForwardMode, TrainConfig};
use callab::rng::stream;

fn main() -> callab::Result<()> {
    let (splits, test) = build_data(&ExperimentConfig::default(), 0)?;
    let (net, log) = train_single(&[64, 64], &splits, &TrainConfig::default(), &AugmentStrategy::None)?;
    let first = log.epochs.first().map(|e| e.loss).unwrap_or(f64::NAN);
    let last = log.epochs.last().map(|e| e.loss).unwrap_or(f64::NAN);
    println!("{} parameters, train loss {first:.3} -> {last:.4}", net.n_params());

    let preds = net.forward(test.features.view(), ForwardMode::Eval, &mut stream(0, &[]))?;
    let report = CalibrationReport::compute(&preds, &test.hard_labels(), &ReportOptions::default())?;
    let m = report.metrics;
    println!("test acc {:.3}  conf {:.3}  ECE {:.4}  NLL {:.4}", m.accuracy, m.mean_confidence, m.ece, m.nll);
    Ok(())
}
