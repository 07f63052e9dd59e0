//! A deep ensemble of four independently initialized networks, compared with
//! its own members, then saved and reloaded.

use callab::augment::AugmentStrategy;
use callab::calibration::{CalibrationReport, ReportOptions};
use callab::ensembles::{aggregate, train_ensemble, EnsembleModel, EnsembleSpec};
use callab::harness::{build_data, ExperimentConfig};
use callab::netcore::TrainConfig;
use callab::rng::stream;

fn main() -> callab::Result<()> {
    let (splits, test) = build_data(&ExperimentConfig::default(), 1)?;
    let labels = test.hard_labels();
    let spec = EnsembleSpec::default();
    let trained = train_ensemble(&spec, &splits, &TrainConfig::default(), &AugmentStrategy::None)?;

    let members = trained.model.member_predictions(test.features.view(), &mut stream(0, &[]))?;
    let opts = ReportOptions::default();
    for (k, p) in members.iter().enumerate() {
        let m = CalibrationReport::compute(p, &labels, &opts)?.metrics;
        println!("member {k}: acc {:.3}  ECE {:.4}  NLL {:.4}", m.accuracy, m.ece, m.nll);
    }
    let m = CalibrationReport::compute(&aggregate(&members)?, &labels, &opts)?.metrics;
    println!("ensemble: acc {:.3}  ECE {:.4}  NLL {:.4}", m.accuracy, m.ece, m.nll);

    let path = std::env::temp_dir().join("callab-deep-ensemble.json");
    trained.model.save(&path)?;
    let reloaded = EnsembleModel::load(&path)?;
    println!("checkpoint {} reloads equal: {}", path.display(), reloaded == trained.model);
    Ok(())
}
