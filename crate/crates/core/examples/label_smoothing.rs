//! Label smoothing on an ensemble: ECE grows with the smoothing coefficient.

use callab::augment::{label_smooth, AugmentStrategy};
use callab::calibration::{CalibrationReport, ReportOptions};
use callab::ensembles::{predict_ensemble, train_ensemble, EnsembleSpec};
use callab::harness::{build_data, ExperimentConfig};
use callab::netcore::TrainConfig;
use callab::rng::stream;

fn main() -> callab::Result<()> {
    println!("targets for label 2 of 5 at alpha 0.3: {}", label_smooth(&[2], 5, 0.3)?.as_array().row(0));
    let (splits, test) = build_data(&ExperimentConfig::default(), 0)?;
    for alpha in [0.0, 0.1, 0.2, 0.3] {
        let strategy = AugmentStrategy::LabelSmooth { alpha };
        let model = train_ensemble(&EnsembleSpec::default(), &splits, &TrainConfig::default(), &strategy)?.model;
        let p = predict_ensemble(&model, test.features.view(), &mut stream(0, &[]))?;
        let m = CalibrationReport::compute(&p, &test.hard_labels(), &ReportOptions::default())?.metrics;
        println!("alpha {alpha:.1}: acc {:.3}  conf {:.3}  ECE {:.4}", m.accuracy, m.mean_confidence, m.ece);
    }
    Ok(())
}
