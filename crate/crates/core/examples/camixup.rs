//! Confidence-adjusted Mixup: the per-class gate is refreshed from validation
//! predictions after every epoch. Prints how often each class was mixed.

use callab::augment::AugmentStrategy;
use callab::calibration::{CalibrationReport, ReportOptions};
use callab::ensembles::{predict_ensemble, train_ensemble, EnsembleSpec};
use callab::harness::{build_data, ExperimentConfig};
use callab::netcore::TrainConfig;
use callab::rng::stream;

fn main() -> callab::Result<()> {
    let (splits, test) = build_data(&ExperimentConfig::default(), 0)?;
    let config = TrainConfig::default();
    for strategy in [AugmentStrategy::Mixup { a: 1.0 }, AugmentStrategy::Camixup { a: 1.0, conf_reading: Default::default() }] {
        let trained = train_ensemble(&EnsembleSpec::default(), &splits, &config, &strategy)?;
        let p = predict_ensemble(&trained.model, test.features.view(), &mut stream(0, &[]))?;
        let m = CalibrationReport::compute(&p, &test.hard_labels(), &ReportOptions::default())?.metrics;
        println!("{:<8} acc {:.3}  acc-conf {:+.4}  ECE {:.4}", strategy.name(), m.accuracy, m.accuracy - m.mean_confidence, m.ece);
        if !trained.log.policy.is_empty() {
            for class in 0..test.n_classes {
                let on = trained.log.policy.iter().filter(|r| r.class == class && r.enabled).count();
                println!("  class {class}: mixed in {on}/{} epochs", config.epochs);
            }
        }
    }
    Ok(())
}
