//! Trains a baseline on one synthetic dataset and scores it on another one generated with
//! a different seed and no tiling. Teacher checkpoints are refused.
//!
//! Untiled images are resized whole to the model input, so objects come out three times
//! smaller than in training and the cross-dataset score drops sharply.

use lupi::experiment::{self, ExperimentConfig};
use lupi::synth::SynthConfig;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let root = dir.path();
    let synth = |seed| SynthConfig {
        num_images: 10,
        image_size: 96,
        num_classes: 3,
        seed,
        ..SynthConfig::default()
    };
    let mut cfg = ExperimentConfig::default();
    cfg.data.synth = Some(synth(1));
    cfg.data.resize = 32;
    cfg.model.input_size = 32;
    cfg.train.lr = 2e-3;
    cfg.train.max_epochs = 15;
    cfg.train.augment = true;
    experiment::cmd_generate(&cfg, &root.join("src"))?;
    experiment::cmd_prepare(&cfg, &root.join("src"), &root.join("prep"))?;
    let baseline = experiment::cmd_train_student(&cfg, &root.join("prep"), None, &root.join("baseline"))?;
    println!("in-domain test mAP@50 {:.4}", baseline.report.map50);

    let mut other = cfg.clone();
    other.data.synth = Some(synth(42));
    experiment::cmd_generate(&other, &root.join("other"))?;
    let ckpt = root.join("baseline").join("student.ckpt");
    let cross = experiment::cmd_cross_eval(&cfg, &ckpt, &root.join("other"), &root.join("cross"))?;
    println!("cross-dataset mAP@50 {:.4} over {} images", cross.map50, cross.num_images);

    experiment::cmd_train_teacher(&cfg, &root.join("prep"), &root.join("teacher"))?;
    match experiment::cmd_cross_eval(&cfg, &root.join("teacher").join("teacher.ckpt"), &root.join("other"), &root.join("x")) {
        Err(e) => println!("teacher refused: {e}"),
        Ok(_) => println!("teacher unexpectedly accepted"),
    }
    Ok(())
}
