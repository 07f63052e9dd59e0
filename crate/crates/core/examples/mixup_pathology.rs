//! Mixup on top of an ensemble makes it under-confident: accuracy exceeds
//! confidence on every seed.

use callab::augment::AugmentStrategy;
use callab::calibration::{CalibrationReport, ReportOptions};
use callab::ensembles::{predict_ensemble, train_ensemble, EnsembleSpec};
use callab::harness::{build_data, ExperimentConfig};
use callab::netcore::TrainConfig;
use callab::rng::stream;

fn main() -> callab::Result<()> {
    println!("seed  strategy  acc    conf   acc-conf  ECE");
    for seed in 0..3 {
        let (splits, test) = build_data(&ExperimentConfig::default(), seed)?;
        for strategy in [AugmentStrategy::None, AugmentStrategy::Mixup { a: 1.0 }] {
            let config = TrainConfig { seed, ..TrainConfig::default() };
            let model = train_ensemble(&EnsembleSpec::default(), &splits, &config, &strategy)?.model;
            let p = predict_ensemble(&model, test.features.view(), &mut stream(seed, &[]))?;
            let m = CalibrationReport::compute(&p, &test.hard_labels(), &ReportOptions::default())?.metrics;
            println!(
                "{seed:<5} {:<9} {:.3}  {:.3}  {:+.4}   {:.4}",
                strategy.name(),
                m.accuracy,
                m.mean_confidence,
                m.accuracy - m.mean_confidence,
                m.ece
            );
        }
    }
    Ok(())
}
