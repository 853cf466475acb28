//! Tiles one synthetic image 3x3 and renders the privileged mask for every tile.

use lupi::preprocess::{tile_image, TileSpec};
use lupi::privileged::{attach_privileged_channel, class_shade, decode_shade};
use lupi::synth::{generate_dataset, SynthConfig};
use lupi::{ClassId, Split};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = SynthConfig::default();
    let train = generate_dataset(&cfg)?.split(Split::Train)?;
    let image = &train.samples()[0];
    println!("{}: {}x{}, {} objects", image.id(), image.width(), image.height(), image.annotations().len());

    for k in 0..cfg.num_classes {
        println!("  class {k} shade {:.4}", class_shade(ClassId(k), cfg.num_classes)?);
    }
    for tile in tile_image(image, &TileSpec::default())? {
        let tile = attach_privileged_channel(tile, cfg.num_classes)?;
        let mask = tile.privileged().expect("attached");
        let covered = mask.values().iter().filter(|&&v| v > 0.0).count();
        let classes: Vec<usize> = tile
            .annotations()
            .iter()
            .map(|a| {
                let (cx, cy) = a.bbox.center();
                decode_shade(mask.get(cx as usize, cy as usize), cfg.num_classes).map_or(usize::MAX, |c| c.0)
            })
            .collect();
        println!("  {}: {} boxes, {covered} mask pixels, decoded classes {classes:?}", tile.id(), tile.annotations().len());
    }
    Ok(())
}
