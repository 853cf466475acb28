//! Trains the mask-reading teacher on a small synthetic set and prints its training log.

use lupi::distill::{train_teacher, DistillConfig};
use lupi::evaluate::{evaluate_model, EvalSettings};
use lupi::experiment::{self, ExperimentConfig, PreparedData};
use lupi::synth::SynthConfig;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let mut cfg = ExperimentConfig::default();
    cfg.data.synth = Some(SynthConfig {
        num_images: 10,
        image_size: 96,
        num_classes: 3,
        ..SynthConfig::default()
    });
    cfg.data.resize = 32;
    cfg.model.input_size = 32;
    experiment::cmd_generate(&cfg, &dir.path().join("src"))?;
    experiment::cmd_prepare(&cfg, &dir.path().join("src"), &dir.path().join("prep"))?;
    let data = PreparedData::load(&dir.path().join("prep"))?;

    let train = DistillConfig {
        lr: 2e-3,
        max_epochs: 15,
        augment: true,
        seed: 1,
        ..DistillConfig::default()
    };
    let eval = EvalSettings::default();
    let (teacher, log) = train_teacher(data.splits(), 32, &train, &eval)?;
    println!("epoch  train_loss  val_mAP@50");
    for r in &log.records {
        println!("{:5}  {:10.4}  {:10.4}", r.epoch, r.train_loss, r.val_map50);
    }
    let test = evaluate_model(&teacher, &data.test, &eval)?;
    println!("best epoch {}, test mAP@50 {:.4}, {} parameters", log.best_epoch, test.map50, teacher.param_count());
    Ok(())
}
