use std::fs;

use lupi::experiment::{self, ExperimentConfig, PreparedData};
use lupi::ingest;
use lupi::privileged::decode_shade;
use lupi::synth::{generate_dataset, write_dataset, SynthConfig};
use lupi::Split;

#[test]
fn synthetic_files_reingest_unchanged() {
    let cfg = SynthConfig::default();
    let out = generate_dataset(&cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_dataset(&out, dir.path(), true).unwrap();

    let manifest = ingest::read_manifest(&dir.path().join("annotations.json")).unwrap();
    assert_eq!(manifest, out.manifest);
    assert_eq!(manifest.images.len(), 20);
    for split in [Split::Train, Split::Val, Split::Test] {
        let disk = ingest::load_split(&manifest, &dir.path().join("images"), split).unwrap();
        assert_eq!(disk, out.split(split).unwrap(), "{split:?}");
    }
    let masks = fs::read_dir(dir.path().join("masks")).unwrap().count();
    assert_eq!(masks, 20);
}

#[test]
fn class_balance_over_many_objects() {
    let cfg = SynthConfig {
        num_images: 120,
        seed: 11,
        ..SynthConfig::default()
    };
    let out = generate_dataset(&cfg).unwrap();
    let n = out.manifest.annotations.len();
    assert!(n >= 200, "{n} objects");
    let uniform = n as f64 / cfg.num_classes as f64;
    for c in &out.manifest.categories {
        let count = out.manifest.annotations.iter().filter(|a| a.category_id == c.id).count() as f64;
        assert!((count - uniform).abs() <= 0.5 * uniform, "class {} has {count} of {n}", c.name);
    }
    let occluded = out.occluded.iter().filter(|&&o| o).count() as f64 / n as f64;
    assert!((0.1..0.3).contains(&occluded), "occlusion rate {occluded}");
}

#[test]
fn prepare_tiles_resizes_and_masks() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig::default();
    let (src, prep) = (dir.path().join("src"), dir.path().join("prep"));
    let source = experiment::cmd_generate(&cfg, &src).unwrap();
    let prepared = experiment::cmd_prepare(&cfg, &src, &prep).unwrap();

    assert_eq!(prepared.images.len(), 9 * source.images.len());
    assert!(prepared.images.iter().all(|im| im.width == 64 && im.height == 64));
    let by_image = prepared.annotations_by_image().unwrap();
    assert!(prepared.images.iter().any(|im| !by_image.contains_key(&im.id)), "negatives kept");

    let data = PreparedData::load(&prep).unwrap();
    assert_eq!(
        (data.train.len(), data.val.len(), data.test.len()),
        (9 * 14, 9 * 3, 9 * 3),
        "tiles inherit the source split"
    );
    for s in data.train.samples().iter().chain(data.val.samples()).chain(data.test.samples()) {
        let mask = s.privileged().expect("every tile has a mask");
        if s.annotations().is_empty() {
            assert!(mask.values().iter().all(|&v| v == 0.0), "{}", s.id());
        }
        for a in s.annotations() {
            let (cx, cy) = a.bbox.center();
            let v = mask.get(cx as usize, cy as usize);
            assert_eq!(decode_shade(v, 6), Some(a.class_id), "{} {:?}", s.id(), a.bbox);
        }
    }
}

#[test]
fn generate_is_deterministic_on_disk() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig::default();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    experiment::cmd_generate(&cfg, &a).unwrap();
    experiment::cmd_generate(&cfg, &b).unwrap();
    let read = |d: &std::path::Path, f: &str| fs::read(d.join(f)).unwrap();
    assert_eq!(read(&a, "annotations.json"), read(&b, "annotations.json"));
    for entry in fs::read_dir(a.join("images")).unwrap() {
        let name = entry.unwrap().file_name();
        let name = format!("images/{}", name.to_string_lossy());
        assert_eq!(read(&a, &name), read(&b, &name), "{name}");
    }
}
