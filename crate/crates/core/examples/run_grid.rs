//! A small grid run through the harness: writes a run directory, a comparison
//! table and plot data. Pass an output directory as the first argument.

use callab::harness::{compare_dirs, emit_plot_data, run, ExperimentConfig, PlotKind};

const CONFIG: &str = r#"
name = "example"
seeds = [0, 1]

[train]
epochs = 60
lr_decay_epochs = [30, 50]

[[ensembles]]
mode = "deep"
k = 4

[[ensembles]]
mode = "batch_ensemble"
k = 4

[[strategies]]
kind = "mixup"
a = 1.0

[[strategies]]
kind = "camixup"
a = 1.0

[eval]
intensities = [3, 5]
"#;

fn main() -> callab::Result<()> {
    let mut config = ExperimentConfig::from_toml(CONFIG)?;
    config.output_dir = std::env::args()
        .nth(1)
        .map(Into::into)
        .unwrap_or_else(|| std::env::temp_dir().join("callab-example-grid"));
    let records = run(&config)?;
    println!("{} records in {}", records.len(), config.output_dir.display());
    let (summary, txt, _) = compare_dirs(&[config.output_dir.clone()], "mixup")?;
    print!("{}", summary.to_text());
    println!("table: {}", txt.display());
    for kind in [PlotKind::Reliability, PlotKind::ShiftCurve, PlotKind::PolicyCounts] {
        println!("plot data: {}", emit_plot_data(&config.output_dir, kind)?.display());
    }
    Ok(())
}
