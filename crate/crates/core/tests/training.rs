use std::path::Path;

use lupi::detector::{DetectorConfig, DetectorModel, Role};
use lupi::distill::{train_baseline, train_student, train_teacher, DistillConfig, TrainSplits};
use lupi::evaluate::EvalSettings;
use lupi::experiment::{self, ExperimentConfig, PreparedData};
use lupi::synth::SynthConfig;
use lupi::{Dataset, Error, ImageSample};

const SIZE: usize = 32;

/// Six 96 px synthetic images with 3 classes, tiled 3x3 into 32 px samples.
fn tiny_data(dir: &Path) -> PreparedData {
    let mut cfg = ExperimentConfig::default();
    cfg.data.synth = Some(SynthConfig {
        num_images: 6,
        image_size: 96,
        num_classes: 3,
        seed: 5,
        ..SynthConfig::default()
    });
    cfg.data.resize = SIZE;
    cfg.model.input_size = SIZE;
    experiment::cmd_generate(&cfg, &dir.join("src")).unwrap();
    experiment::cmd_prepare(&cfg, &dir.join("src"), &dir.join("prep")).unwrap();
    PreparedData::load(&dir.join("prep")).unwrap()
}

fn quick(epochs: usize) -> DistillConfig {
    DistillConfig {
        lr: 1e-3,
        max_epochs: epochs,
        patience: epochs + 1,
        seed: 3,
        ..DistillConfig::default()
    }
}

fn strip(data: &Dataset, f: impl Fn(&ImageSample) -> ImageSample) -> Dataset {
    Dataset::new(data.samples().iter().map(f).collect(), data.categories().to_vec(), data.split()).unwrap()
}

#[test]
fn teacher_training_is_reproducible_and_learns() {
    let dir = tempfile::tempdir().unwrap();
    let data = tiny_data(dir.path());
    let eval = EvalSettings::default();
    let (a, log) = train_teacher(data.splits(), SIZE, &quick(6), &eval).unwrap();
    let (b, _) = train_teacher(data.splits(), SIZE, &quick(6), &eval).unwrap();
    assert_eq!(a, b);
    let first = log.records.first().unwrap().train_loss;
    let last = log.records.last().unwrap().train_loss;
    assert!(last < first, "train loss {first} -> {last}");
    let best = log.best().unwrap().val_map50;
    assert!(log.records.iter().all(|r| r.val_map50 <= best));
}

#[test]
fn augmented_training_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let data = tiny_data(dir.path());
    let cfg = DistillConfig { augment: true, ..quick(2) };
    let eval = EvalSettings::default();
    let (a, la) = train_baseline(data.splits(), SIZE, &cfg, &eval).unwrap();
    let (b, lb) = train_baseline(data.splits(), SIZE, &cfg, &eval).unwrap();
    assert_eq!((a, la), (b, lb));
}

#[test]
fn teacher_needs_masks() {
    let dir = tempfile::tempdir().unwrap();
    let data = tiny_data(dir.path());
    let bare = strip(&data.train, |s| ImageSample::new(s.id(), s.rgb().clone(), None, s.annotations().to_vec()).unwrap());
    let splits = TrainSplits {
        train: &bare,
        val: &data.val,
    };
    let err = train_teacher(splits, SIZE, &quick(1), &EvalSettings::default()).unwrap_err();
    assert!(matches!(err, Error::MissingPrivileged(_)), "{err}");
}

#[test]
fn student_rejects_bad_sources_and_alpha() {
    let dir = tempfile::tempdir().unwrap();
    let data = tiny_data(dir.path());
    let eval = EvalSettings::default();
    let not_teacher = DetectorModel::init(DetectorConfig::student(3, SIZE).unwrap(), Role::Student, 0).unwrap();
    assert!(train_student(data.splits(), &not_teacher, &quick(1), &eval).is_err());
    let teacher = DetectorModel::init(DetectorConfig::teacher(3, SIZE).unwrap(), Role::Teacher, 0).unwrap();
    let bad = DistillConfig { alpha: 1.5, ..quick(1) };
    assert!(train_student(data.splits(), &teacher, &bad, &eval).is_err());
}

#[test]
fn full_teacher_weight_ignores_detection_targets() {
    let dir = tempfile::tempdir().unwrap();
    let data = tiny_data(dir.path());
    let eval = EvalSettings::default();
    let (teacher, _) = train_teacher(data.splits(), SIZE, &quick(2), &eval).unwrap();
    let unlabeled = strip(&data.train, |s| {
        ImageSample::new(s.id(), s.rgb().clone(), s.privileged().cloned(), Vec::new()).unwrap()
    });
    let cfg = DistillConfig { alpha: 1.0, ..quick(3) };
    let (a, _) = train_student(data.splits(), &teacher, &cfg, &eval).unwrap();
    let splits = TrainSplits {
        train: &unlabeled,
        val: &data.val,
    };
    let (b, _) = train_student(splits, &teacher, &cfg, &eval).unwrap();
    assert_eq!(a.params(), b.params());
}

#[test]
fn distillation_pulls_embeddings_toward_teacher() {
    let dir = tempfile::tempdir().unwrap();
    let data = tiny_data(dir.path());
    let eval = EvalSettings::default();
    let (teacher, _) = train_teacher(data.splits(), SIZE, &quick(4), &eval).unwrap();
    let cfg = DistillConfig { alpha: 0.5, ..quick(8) };
    let (_, log) = train_student(data.splits(), &teacher, &cfg, &eval).unwrap();
    let start = log.records[0].distill_term.unwrap();
    let end = log.records.last().unwrap().distill_term.unwrap();
    assert!(end < start, "cosine distance {start} -> {end}");
}
