//! ECE, ACE, SCE, TACE and NLL on hand-made predictions, plus the reliability
//! diagram data as CSV.

use callab::calibration::{
    ace, bin_predictions, ece, nll, reliability_data, sce, tace, write_reliability_csv,
};
use callab::netcore::PredictionBatch;
use callab::rng::stream;
use ndarray::Array2;
use rand::Rng;

fn main() -> callab::Result<()> {
    // Predictions that claim 90% confidence but are right 70% of the time.
    let mut rng = stream(0, &[]);
    let n = 2000;
    let mut probs = Array2::from_elem((n, 4), 0.1 / 3.0);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let pred = rng.random_range(0..4);
        probs[[i, pred]] = 0.9;
        labels.push(if rng.random_bool(0.7) { pred } else { (pred + 1) % 4 });
    }
    let p = PredictionBatch::from_probs(probs)?;
    let bins = bin_predictions(&p, &labels, 15)?;
    println!("ECE  {:.4}", ece(&bins)?);
    println!("ACE  {:.4}", ace(&p, &labels, 15)?);
    println!("SCE  {:.4}", sce(&p, &labels, 15)?);
    println!("TACE {:.4}", tace(&p, &labels, 15, 0.01)?);
    println!("NLL  {:.4}", nll(&p, &labels)?);
    write_reliability_csv(&reliability_data(&bins), std::io::stdout())?;
    Ok(())
}
