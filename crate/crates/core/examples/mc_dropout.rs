//! MC-Dropout: a single dropout network averaged over sampled masks at test time.

use callab::augment::AugmentStrategy;
use callab::calibration::{CalibrationReport, ReportOptions};
use callab::ensembles::{predict_ensemble, train_ensemble, EnsembleMode, EnsembleSpec};
use callab::harness::{build_data, ExperimentConfig};
use callab::netcore::TrainConfig;
use callab::rng::stream;

fn main() -> callab::Result<()> {
    let (splits, test) = build_data(&ExperimentConfig::default(), 3)?;
    let spec = EnsembleSpec { mode: EnsembleMode::McDropout, k: 4, dropout_rate: 0.1, ..EnsembleSpec::default() };
    let mut model = train_ensemble(&spec, &splits, &TrainConfig::default(), &AugmentStrategy::None)?.model;
    for samples in [1, 4, 16, 64] {
        if let callab::ensembles::EnsembleModel::McDropout { samples: s, .. } = &mut model {
            *s = samples;
        }
        let p = predict_ensemble(&model, test.features.view(), &mut stream(0, &[]))?;
        let m = CalibrationReport::compute(&p, &test.hard_labels(), &ReportOptions::default())?.metrics;
        println!("{samples:>3} samples: acc {:.3}  ECE {:.4}  NLL {:.4}", m.accuracy, m.ece, m.nll);
    }
    Ok(())
}
