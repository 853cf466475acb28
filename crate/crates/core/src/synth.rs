//! Deterministic synthetic detection dataset: shape "litter" on value-noise ground.
//!
//! Class `k` is drawn with shape archetype `k` (disc, square, triangle, ring, cross, bar)
//! in a class-dependent intensity. Some objects are partly painted over with background,
//! but keep their full box as ground truth.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BoundingBox;
use crate::ingest::pnm::{self, Raster};
use crate::ingest::{self, CocoAnnotation, CocoCategory, CocoImage, CocoManifest};
use crate::privileged::encode_mask;
use crate::sample::{Dataset, Split};

pub const SHAPE_NAMES: [&str; 6] = ["disc", "square", "triangle", "ring", "cross", "bar"];

/// Largest fraction of an object's box an occluding patch may cover.
pub const MAX_OCCLUSION: f64 = 0.4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub num_images: usize,
    pub image_size: usize,
    pub num_classes: usize,
    /// Inclusive range of objects per image.
    pub objects_per_image: [usize; 2],
    /// Inclusive range of object sides in pixels.
    pub object_side: [usize; 2],
    pub occlusion_rate: f64,
    /// Lattice spacing of the background value noise, in pixels.
    pub noise_scale: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            num_images: 20,
            image_size: 192,
            num_classes: 6,
            objects_per_image: [1, 4],
            object_side: [8, 24],
            occlusion_rate: 0.2,
            noise_scale: 24,
            seed: 1,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::invalid(format!("synth config: {m}")));
        if self.num_images == 0 {
            return bad("num_images must be >= 1");
        }
        if !(1..=SHAPE_NAMES.len()).contains(&self.num_classes) {
            return bad("num_classes must be in 1..=6");
        }
        let [lo, hi] = self.objects_per_image;
        if lo == 0 || lo > hi {
            return bad("objects_per_image must be a non-empty range starting at >= 1");
        }
        let [slo, shi] = self.object_side;
        if slo < 8 || slo > shi {
            return bad("object_side must be a non-empty range with minimum >= 8");
        }
        if 2 * shi >= self.image_size {
            return bad("object_side maximum must be below image_size / 2");
        }
        if !(0.0..=1.0).contains(&self.occlusion_rate) {
            return bad("occlusion_rate must be in [0, 1]");
        }
        if self.noise_scale == 0 {
            return bad("noise_scale must be >= 1");
        }
        Ok(())
    }
}

/// Generated dataset: manifest, encoded rasters, and the same data as in-memory samples.
#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub manifest: CocoManifest,
    /// `(file_name, raster)` in manifest order.
    pub rasters: Vec<(String, Raster)>,
    /// Per-object flag: whether an occluding patch was painted, in annotation order.
    pub occluded: Vec<bool>,
}

impl SynthOutput {
    /// Loads the given split into memory exactly as [`ingest::load_split`] would from disk.
    pub fn split(&self, split: Split) -> Result<Dataset> {
        let rasters = self.rasters.iter().cloned().collect();
        ingest::split_from_rasters(&self.manifest, &rasters, split)
    }
}

struct Rgb([f64; 3]);

fn smoothstep(t: f64) -> f64 {
    t * t * (3.0 - 2.0 * t)
}

/// Smooth value noise with a per-channel tint plus fine grain.
fn background(rng: &mut ChaCha8Rng, size: usize, scale: usize) -> Vec<Rgb> {
    let cells = size / scale + 2;
    let tint = [rng.gen_range(0.25..0.45), rng.gen_range(0.3..0.5), rng.gen_range(0.2..0.4)];
    let lattice: Vec<[f64; 3]> = (0..cells * cells)
        .map(|_| {
            let v = rng.gen_range(-0.2..0.2);
            [v + rng.gen_range(-0.05..0.05), v + rng.gen_range(-0.05..0.05), v + rng.gen_range(-0.05..0.05)]
        })
        .collect();
    let mut out = Vec::with_capacity(size * size);
    for y in 0..size {
        for x in 0..size {
            let (fx, fy) = (x as f64 / scale as f64, y as f64 / scale as f64);
            let (ix, iy) = (fx.floor() as usize, fy.floor() as usize);
            let (tx, ty) = (smoothstep(fx - ix as f64), smoothstep(fy - iy as f64));
            let at = |cx: usize, cy: usize| lattice[cy * cells + cx];
            let mut px = [0.0; 3];
            for (c, p) in px.iter_mut().enumerate() {
                let top = at(ix, iy)[c] * (1.0 - tx) + at(ix + 1, iy)[c] * tx;
                let bot = at(ix, iy + 1)[c] * (1.0 - tx) + at(ix + 1, iy + 1)[c] * tx;
                let grain = rng.gen_range(-0.04..0.04);
                *p = (tint[c] + top * (1.0 - ty) + bot * ty + grain).clamp(0.0, 1.0);
            }
            out.push(Rgb(px));
        }
    }
    out
}

/// Whether the pixel with normalized centre `(u, v)` in the object box belongs to shape `k`.
fn shape_covers(k: usize, u: f64, v: f64, w: usize) -> bool {
    let (du, dv) = (u - 0.5, v - 0.5);
    let r2 = du * du + dv * dv;
    match k {
        0 => r2 <= 0.25,
        1 | 5 => true,
        2 => du.abs() <= v / 2.0 + 0.5 / w as f64,
        3 => (0.09..=0.25).contains(&r2),
        4 => du.abs() <= 1.0 / 6.0 || dv.abs() <= 1.0 / 6.0,
        _ => unreachable!("at most six archetypes"),
    }
}

/// Base colour per class (distinct per-channel intensities); jittered per object.
fn class_color(k: usize) -> [f64; 3] {
    const PALETTE: [[f64; 3]; 6] = [
        [0.95, 0.25, 0.20],
        [0.20, 0.85, 0.30],
        [0.25, 0.35, 0.95],
        [0.95, 0.90, 0.20],
        [0.90, 0.30, 0.90],
        [0.25, 0.90, 0.95],
    ];
    PALETTE[k]
}

fn overlaps(a: &[usize; 4], b: &[usize; 4]) -> bool {
    a[0] < b[2] && b[0] < a[2] && a[1] < b[3] && b[1] < a[3]
}

/// Generates images, annotations and the split assignment.
pub fn generate_dataset(cfg: &SynthConfig) -> Result<SynthOutput> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let size = cfg.image_size;
    let mut images = Vec::with_capacity(cfg.num_images);
    let mut annotations = Vec::new();
    let mut rasters = Vec::with_capacity(cfg.num_images);
    let mut occluded_flags = Vec::new();

    for i in 0..cfg.num_images {
        let bg = background(&mut rng, size, cfg.noise_scale);
        let mut px: Vec<[f64; 3]> = bg.iter().map(|p| p.0).collect();
        let n_obj = rng.gen_range(cfg.objects_per_image[0]..=cfg.objects_per_image[1]);
        let mut placed: Vec<[usize; 4]> = Vec::new();
        for _ in 0..n_obj {
            let k = rng.gen_range(0..cfg.num_classes);
            let side = rng.gen_range(cfg.object_side[0]..=cfg.object_side[1]);
            let (w, h) = if k == 5 {
                let long = side.max(2 * cfg.object_side[0]).min(cfg.object_side[1].max(2 * cfg.object_side[0]));
                let short = cfg.object_side[0];
                if rng.gen_bool(0.5) { (long, short) } else { (short, long) }
            } else {
                (side, side)
            };
            let mut slot = None;
            for _ in 0..50 {
                let x0 = rng.gen_range(0..=size - w);
                let y0 = rng.gen_range(0..=size - h);
                let cand = [x0, y0, x0 + w, y0 + h];
                if !placed.iter().any(|p| overlaps(p, &cand)) {
                    slot = Some(cand);
                    break;
                }
            }
            let Some(b) = slot else { continue };
            placed.push(b);
            let jitter = rng.gen_range(-0.08..0.08);
            let base = class_color(k);
            for y in b[1]..b[3] {
                for x in b[0]..b[2] {
                    let u = (x - b[0]) as f64 / w as f64 + 0.5 / w as f64;
                    let v = (y - b[1]) as f64 / h as f64 + 0.5 / h as f64;
                    if shape_covers(k, u, v, w) {
                        let grain = rng.gen_range(-0.03..0.03);
                        for c in 0..3 {
                            px[y * size + x][c] = (base[c] + jitter + grain).clamp(0.0, 1.0);
                        }
                    }
                }
            }
            let occlude = rng.gen_bool(cfg.occlusion_rate);
            if occlude {
                let a = rng.gen_range(0.3..0.6);
                let bfrac = MAX_OCCLUSION / a * rng.gen_range(0.5..1.0);
                let pw = ((w as f64 * a).floor() as usize).max(1);
                let ph = ((h as f64 * bfrac).floor() as usize).clamp(1, h);
                let ox = b[0] + rng.gen_range(0..=w - pw);
                let oy = b[1] + rng.gen_range(0..=h - ph);
                for y in oy..oy + ph {
                    for x in ox..ox + pw {
                        px[y * size + x] = bg[y * size + x].0;
                    }
                }
            }
            occluded_flags.push(occlude);
            annotations.push(CocoAnnotation {
                id: annotations.len() as u64 + 1,
                image_id: i as u64 + 1,
                category_id: k as u64 + 1,
                bbox: [b[0] as f64, b[1] as f64, w as f64, h as f64],
            });
        }
        let file_name = format!("synth_{i:04}.ppm");
        let data = px
            .iter()
            .flat_map(|p| [pnm::quantize(p[0]), pnm::quantize(p[1]), pnm::quantize(p[2])])
            .collect();
        rasters.push((
            file_name.clone(),
            Raster {
                width: size,
                height: size,
                channels: 3,
                data,
            },
        ));
        images.push(CocoImage {
            id: i as u64 + 1,
            file_name,
            width: size,
            height: size,
            split: None,
        });
    }

    let mut split_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    split_rng.set_stream(2);
    let mut order: Vec<usize> = (0..cfg.num_images).collect();
    order.shuffle(&mut split_rng);
    let n = cfg.num_images;
    let n_train = (70 * n + 50) / 100;
    let n_val = ((15 * n + 50) / 100).min(n - n_train);
    for (rank, &idx) in order.iter().enumerate() {
        images[idx].split = Some(if rank < n_train {
            Split::Train
        } else if rank < n_train + n_val {
            Split::Val
        } else {
            Split::Test
        });
    }

    let categories = (0..cfg.num_classes)
        .map(|k| CocoCategory {
            id: k as u64 + 1,
            name: SHAPE_NAMES[k].to_string(),
        })
        .collect();
    let manifest = CocoManifest {
        images,
        annotations,
        categories,
    };
    manifest.validate()?;
    Ok(SynthOutput {
        manifest,
        rasters,
        occluded: occluded_flags,
    })
}

/// Writes `<out>/images/*.ppm`, `<out>/annotations.json`, and with `with_masks` also
/// `<out>/masks/<id>_priv.pgm`.
pub fn write_dataset(out: &SynthOutput, dir: &Path, with_masks: bool) -> Result<()> {
    let images = dir.join("images");
    fs::create_dir_all(&images).map_err(|e| Error::io(&images, e))?;
    for (name, raster) in &out.rasters {
        pnm::write(&images.join(name), raster)?;
    }
    let manifest_path = dir.join("annotations.json");
    fs::write(&manifest_path, out.manifest.to_json()?).map_err(|e| Error::io(&manifest_path, e))?;
    if with_masks {
        let masks = dir.join("masks");
        fs::create_dir_all(&masks).map_err(|e| Error::io(&masks, e))?;
        let by_image = out.manifest.annotations_by_image()?;
        let num_classes = out.manifest.categories.len();
        for im in &out.manifest.images {
            let anns = by_image.get(&im.id).cloned().unwrap_or_default();
            let mask = encode_mask(&anns, im.width, im.height, num_classes)?;
            let stem = Path::new(&im.file_name)
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            ingest::write_plane(&masks.join(ingest::mask_file_name(&stem)), &mask)?;
        }
    }
    Ok(())
}

/// Exact pixel extent of a box drawn at integer coordinates.
pub fn box_of(a: &CocoAnnotation) -> Result<BoundingBox> {
    let [x, y, w, h] = a.bbox;
    BoundingBox::from_xywh(x, y, w, h)
}
