//! End-to-end generate, prepare and alpha sweep on a tiny configuration.
//!
//! cargo run --release --example alpha_sweep -- [out_dir]

use std::path::PathBuf;

use lupi::experiment::{self, ExperimentConfig};
use lupi::synth::SynthConfig;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("lupi_sweep"));
    std::fs::create_dir_all(&out)?;
    let mut cfg = ExperimentConfig::default();
    cfg.data.synth = Some(SynthConfig {
        num_images: 10,
        image_size: 96,
        num_classes: 3,
        ..SynthConfig::default()
    });
    cfg.data.resize = 32;
    cfg.model.input_size = 32;
    cfg.train.lr = 2e-3;
    cfg.train.max_epochs = 15;
    cfg.train.augment = true;
    cfg.sweep.alphas = vec![0.0, 0.5, 1.0];
    cfg.sweep.seeds = vec![1, 2];

    experiment::cmd_generate(&cfg, &out.join("source"))?;
    experiment::cmd_prepare(&cfg, &out.join("source"), &out.join("prepared"))?;
    let sweep = experiment::cmd_sweep(&cfg, &out.join("prepared"), &out.join("sweep"))?;
    print!("{}", experiment::summary_to_csv(&sweep.rows));
    for (alpha, m) in experiment::per_alpha_means(&sweep.rows) {
        println!("alpha {alpha}: mean test mAP@50 {:.4}", m[1]);
    }
    println!("chart: {}", out.join("sweep").join("alpha_sweep.svg").display());
    Ok(())
}
