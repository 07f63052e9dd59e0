//! BatchEnsemble: one shared network with a rank-1 multiplicative factor per
//! member, against a deep ensemble of the same size.

use callab::augment::AugmentStrategy;
use callab::calibration::{CalibrationReport, ReportOptions};
use callab::ensembles::{predict_ensemble, train_ensemble, EnsembleMode, EnsembleSpec};
use callab::harness::{build_data, ExperimentConfig};
use callab::netcore::TrainConfig;
use callab::rng::stream;

fn main() -> callab::Result<()> {
    let (splits, test) = build_data(&ExperimentConfig::default(), 2)?;
    for mode in [EnsembleMode::Deep, EnsembleMode::BatchEnsemble] {
        let spec = EnsembleSpec { mode, k: 4, ..EnsembleSpec::default() };
        let t = std::time::Instant::now();
        let trained = train_ensemble(&spec, &splits, &TrainConfig::default(), &AugmentStrategy::None)?;
        let p = predict_ensemble(&trained.model, test.features.view(), &mut stream(0, &[]))?;
        let m = CalibrationReport::compute(&p, &test.hard_labels(), &ReportOptions::default())?.metrics;
        println!(
            "{:<15} params {:>6}  acc {:.3}  ECE {:.4}  ({:.1}s)",
            mode.name(),
            trained.model.n_params(),
            m.accuracy,
            m.ece,
            t.elapsed().as_secs_f64()
        );
    }
    Ok(())
}
