//! AugMix on a single batch, then AugMix, AugMixup and AugCAMixup ensembles
//! evaluated on clean and corrupted test data.

use callab::augment::{augmix, AugMixParams, AugmentOpSet, AugmentStrategy};
use callab::calibration::ece;
use callab::calibration::bin_predictions;
use callab::data::{corrupt, CorruptionFamily, CorruptionSpec};
use callab::ensembles::{predict_ensemble, train_ensemble, EnsembleSpec};
use callab::harness::{build_data, ExperimentConfig};
use callab::netcore::TrainConfig;
use callab::rng::stream;
use ndarray::s;

fn main() -> callab::Result<()> {
    let (splits, test) = build_data(&ExperimentConfig::default(), 0)?;
    let x = splits.train.features.slice(s![0..3, ..]);
    let mixed = augmix(x, &AugmentOpSet::standard(1.0), &AugMixParams::default(), &mut stream(0, &[]), None)?;
    for (a, b) in x.outer_iter().zip(mixed.outer_iter()) {
        println!("{:>7.3} -> {:>7.3}", a, b);
    }

    let strategies = [
        AugmentStrategy::None,
        AugmentStrategy::Augmix { params: AugMixParams::default(), opset: AugmentOpSet::default() },
        AugmentStrategy::Augmixup { a: 1.0, params: AugMixParams::default(), opset: AugmentOpSet::default() },
        AugmentStrategy::Augcamixup {
            a: 1.0,
            params: AugMixParams::default(),
            opset: AugmentOpSet::default(),
            conf_reading: Default::default(),
        },
    ];
    let shifted = corrupt(&test, &CorruptionSpec { family: CorruptionFamily::Rotation, intensity: 4 }, 0)?;
    println!("strategy     clean acc/ECE    rotated acc/ECE");
    for strategy in strategies {
        let model = train_ensemble(&EnsembleSpec::default(), &splits, &TrainConfig::default(), &strategy)?.model;
        let mut row = format!("{:<12}", strategy.name());
        for data in [&test, &shifted] {
            let labels = data.hard_labels();
            let p = predict_ensemble(&model, data.features.view(), &mut stream(0, &[]))?;
            row += &format!(" {:.3}/{:.4}  ", p.accuracy(&labels), ece(&bin_predictions(&p, &labels, 15)?)?);
        }
        println!("{row}");
    }
    Ok(())
}
