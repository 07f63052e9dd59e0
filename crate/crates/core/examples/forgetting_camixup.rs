//! Forgetting-count Mixup: only examples forgotten more often than the median
//! are mixed. Prints the per-epoch number of enabled examples and the final
//! forgetting histogram.

use std::collections::BTreeMap;

use callab::augment::AugmentStrategy;
use callab::ensembles::{train_ensemble, EnsembleSpec};
use callab::harness::{build_data, ExperimentConfig};
use callab::netcore::TrainConfig;

fn main() -> callab::Result<()> {
    let (splits, _) = build_data(&ExperimentConfig::default(), 0)?;
    let spec = EnsembleSpec { k: 1, ..EnsembleSpec::default() };
    let log = train_ensemble(&spec, &splits, &TrainConfig::default(), &AugmentStrategy::ForgettingCamixup { a: 1.0 })?.log;
    for row in log.forgetting_epochs.iter().step_by(20) {
        println!("epoch {:>3}: {} of {} examples mixed", row.epoch, row.n_enabled, splits.train.len());
    }
    let mut hist: BTreeMap<u32, usize> = BTreeMap::new();
    for r in &log.forgetting {
        *hist.entry(r.forget_count).or_default() += 1;
    }
    for (count, n) in hist {
        println!("forgotten {count:>2} times: {n} examples");
    }
    Ok(())
}
