//! Writes the default synthetic dataset and prints what ended up in each split.
//!
//! cargo run --example generate_synth -- [out_dir]

use std::path::PathBuf;

use lupi::synth::{generate_dataset, write_dataset, SynthConfig, SHAPE_NAMES};
use lupi::Split;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("synthlitter"));
    let cfg = SynthConfig::default();
    let data = generate_dataset(&cfg)?;
    std::fs::create_dir_all(&out)?;
    write_dataset(&data, &out, true)?;

    println!("wrote {} images to {}", data.manifest.images.len(), out.display());
    for split in [Split::Train, Split::Val, Split::Test] {
        let ds = data.split(split)?;
        let objects: usize = ds.samples().iter().map(|s| s.annotations().len()).sum();
        println!("  {:5} {:2} images, {:2} objects", split.as_str(), ds.len(), objects);
    }
    let occluded = data.occluded.iter().filter(|&&o| o).count();
    println!("  {occluded} of {} objects partly occluded", data.occluded.len());
    for (k, name) in SHAPE_NAMES.iter().enumerate().take(cfg.num_classes) {
        let n = data.manifest.annotations.iter().filter(|a| a.category_id == k as u64 + 1).count();
        println!("  class {k} ({name}): {n}");
    }
    Ok(())
}
