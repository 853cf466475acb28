//! Dataset loading: COCO manifests plus PPM/PGM rasters, with per-plane min-max normalization.

mod coco;
pub mod pnm;

use std::collections::HashMap;
use std::fs;
use std::path::Path;

pub use coco::{parse_coco, CocoAnnotation, CocoCategory, CocoImage, CocoManifest};

use crate::error::{Error, Result};
use crate::sample::{Dataset, ImagePlane, ImageSample, Split};

/// File name of the persisted privileged mask for a sample.
pub fn mask_file_name(sample_id: &str) -> String {
    format!("{sample_id}_priv.pgm")
}

/// Min-max normalization of one plane to [0,1]. A constant plane maps to zeros.
pub fn normalize_image(plane: &ImagePlane) -> ImagePlane {
    let (min, max) = plane
        .values()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let range = max - min;
    let values = if range > 0.0 {
        plane.values().iter().map(|&v| (v - min) / range).collect()
    } else {
        vec![0.0; plane.values().len()]
    };
    ImagePlane::new(plane.width(), plane.height(), values).expect("same shape as input")
}

pub fn read_manifest(path: &Path) -> Result<CocoManifest> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_coco(&text)
}

fn load_image(image: &CocoImage, image_dir: &Path) -> Result<[ImagePlane; 3]> {
    let path = image_dir.join(&image.file_name);
    let raster = pnm::read(&path)?;
    rgb_from_raster(image, &raster).map_err(|msg| Error::Raster { path, msg })
}

/// Normalized RGB planes of an 8-bit raster that must match the manifest entry.
fn rgb_from_raster(image: &CocoImage, raster: &pnm::Raster) -> std::result::Result<[ImagePlane; 3], String> {
    if raster.width != image.width || raster.height != image.height {
        return Err(format!(
            "raster is {}x{} but manifest says {}x{}",
            raster.width, raster.height, image.width, image.height
        ));
    }
    if raster.channels != 3 {
        return Err("expected a 3-channel PPM".into());
    }
    let planes: Vec<ImagePlane> = raster
        .planes()
        .into_iter()
        .map(|p| {
            let plane = ImagePlane::new(raster.width, raster.height, p.into_iter().map(f64::from).collect())
                .map_err(|e| e.to_string())?;
            Ok(normalize_image(&plane))
        })
        .collect::<std::result::Result<_, String>>()?;
    Ok(planes.try_into().expect("three planes"))
}

fn sample_id(image: &CocoImage) -> String {
    Path::new(&image.file_name)
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| image.id.to_string())
}

fn load_images<'a>(
    manifest: &CocoManifest,
    images: impl Iterator<Item = &'a CocoImage>,
    mut fetch: impl FnMut(&CocoImage) -> Result<[ImagePlane; 3]>,
    split: Split,
) -> Result<Dataset> {
    let mut by_image = manifest.annotations_by_image()?;
    let samples = images
        .map(|im| {
            let rgb = fetch(im)?;
            let anns = by_image.remove(&im.id).unwrap_or_default();
            ImageSample::new(sample_id(im), rgb, None, anns)
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(samples, manifest.category_names(), split)
}

/// Loads every image of the manifest, in manifest order. The privileged plane is left absent.
///
/// Sample ids are the file stems. The returned dataset is tagged with the images' common
/// split, or `test` when the manifest mixes splits.
pub fn load_dataset(manifest: &CocoManifest, image_dir: &Path) -> Result<Dataset> {
    let splits: Vec<Split> = manifest.images.iter().map(CocoManifest::image_split).collect();
    let split = match splits.first() {
        Some(&first) if splits.iter().all(|&s| s == first) => first,
        _ => Split::Test,
    };
    load_images(manifest, manifest.images.iter(), |im| load_image(im, image_dir), split)
}

/// Loads only the images tagged with `split` (untagged images belong to `test`).
pub fn load_split(manifest: &CocoManifest, image_dir: &Path, split: Split) -> Result<Dataset> {
    let images = manifest
        .images
        .iter()
        .filter(|im| CocoManifest::image_split(im) == split);
    load_images(manifest, images, |im| load_image(im, image_dir), split)
}

/// Same as [`load_split`], but reads rasters from memory, keyed by file name.
pub fn split_from_rasters(
    manifest: &CocoManifest,
    rasters: &HashMap<String, pnm::Raster>,
    split: Split,
) -> Result<Dataset> {
    let images = manifest
        .images
        .iter()
        .filter(|im| CocoManifest::image_split(im) == split);
    let fetch = |im: &CocoImage| {
        let raster = rasters
            .get(&im.file_name)
            .ok_or_else(|| Error::invalid(format!("no raster named {}", im.file_name)))?;
        rgb_from_raster(im, raster).map_err(|msg| Error::Raster {
            path: im.file_name.clone().into(),
            msg,
        })
    };
    load_images(manifest, images, fetch, split)
}

/// Attaches `<id>_priv.pgm` from `mask_dir` to every sample. Mask bytes map to `v / 255`.
pub fn attach_mask_files(dataset: Dataset, mask_dir: &Path) -> Result<Dataset> {
    dataset.try_map(|s| {
        let path = mask_dir.join(mask_file_name(s.id()));
        let raster = pnm::read(&path)?;
        if raster.channels != 1 || raster.width != s.width() || raster.height != s.height() {
            return Err(Error::Raster {
                path,
                msg: format!("mask must be a {}x{} PGM", s.width(), s.height()),
            });
        }
        let plane = ImagePlane::new(
            raster.width,
            raster.height,
            raster.data.iter().map(|&b| f64::from(b) / 255.0).collect(),
        )?;
        let (id, rgb, prev, anns) = s.into_parts();
        if prev.is_some() {
            return Err(Error::PrivilegedPresent(id));
        }
        ImageSample::new(id, rgb, Some(plane), anns)
    })
}

/// Writes the RGB planes of a sample as an 8-bit PPM.
pub fn write_rgb(path: &Path, sample: &ImageSample) -> Result<()> {
    let [r, g, b] = sample.rgb();
    let data = r
        .values()
        .iter()
        .zip(g.values())
        .zip(b.values())
        .flat_map(|((&r, &g), &b)| [pnm::quantize(r), pnm::quantize(g), pnm::quantize(b)])
        .collect();
    pnm::write(
        path,
        &pnm::Raster {
            width: sample.width(),
            height: sample.height(),
            channels: 3,
            data,
        },
    )
}

/// Writes one plane as an 8-bit PGM.
pub fn write_plane(path: &Path, plane: &ImagePlane) -> Result<()> {
    pnm::write(
        path,
        &pnm::Raster {
            width: plane.width(),
            height: plane.height(),
            channels: 1,
            data: plane.values().iter().map(|&v| pnm::quantize(v)).collect(),
        },
    )
}
