//! Accuracy and ECE of a deep ensemble across the corruption families and intensities.

use callab::augment::AugmentStrategy;
use callab::calibration::{bin_predictions, ece};
use callab::data::{corrupt, CorruptionFamily, CorruptionSpec};
use callab::ensembles::{predict_ensemble, train_ensemble, EnsembleSpec};
use callab::harness::{build_data, ExperimentConfig};
use callab::netcore::TrainConfig;
use callab::rng::stream;

fn main() -> callab::Result<()> {
    let (splits, test) = build_data(&ExperimentConfig::default(), 0)?;
    let model = train_ensemble(&EnsembleSpec::default(), &splits, &TrainConfig::default(), &AugmentStrategy::None)?.model;
    println!("{:<18} {}", "family", (0..=5).map(|i| format!("   int {i}     ")).collect::<String>());
    for family in CorruptionFamily::ALL {
        let mut row = format!("{:<18}", family.name());
        for intensity in 0..=5 {
            let data = corrupt(&test, &CorruptionSpec { family, intensity }, 0)?;
            let labels = data.hard_labels();
            let p = predict_ensemble(&model, data.features.view(), &mut stream(0, &[]))?;
            row += &format!(" {:.3}/{:.3}  ", p.accuracy(&labels), ece(&bin_predictions(&p, &labels, 15)?)?);
        }
        println!("{row}");
    }
    Ok(())
}
