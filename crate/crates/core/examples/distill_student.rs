//! Teacher, then an RGB-only student distilled at alpha 0.5 next to the alpha 0 baseline.

use lupi::distill::{train_baseline, train_student, train_teacher, DistillConfig};
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

    let base_cfg = DistillConfig {
        lr: 2e-3,
        max_epochs: 12,
        augment: true,
        seed: 1,
        ..DistillConfig::default()
    };
    let eval = EvalSettings::default();
    let (teacher, _) = train_teacher(data.splits(), 32, &base_cfg, &eval)?;

    let student_cfg = DistillConfig { alpha: 0.5, ..base_cfg };
    let (student, log) = train_student(data.splits(), &teacher, &student_cfg, &eval)?;
    let (baseline, _) = train_baseline(data.splits(), 32, &base_cfg, &eval)?;

    println!("epoch  det_loss  cosine_to_teacher");
    for r in &log.records {
        println!("{:5}  {:8.4}  {:17.4}", r.epoch, r.det_term, r.distill_term.unwrap_or(f64::NAN));
    }
    for (name, model) in [("teacher", &teacher), ("student a=0.5", &student), ("baseline a=0", &baseline)] {
        let r = evaluate_model(model, &data.test, &eval)?;
        println!("{name:14} test mAP@50 {:.4}  params {}", r.map50, model.param_count());
    }
    Ok(())
}
