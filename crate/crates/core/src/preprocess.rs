//! Grid tiling with annotation clipping, and bilinear resizing.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{box_area, clip_box, BoundingBox};
use crate::sample::{Annotation, ImagePlane, ImageSample};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TileSpec {
    /// Tiles per side.
    pub grid: usize,
    /// Minimum fraction of a box's area that must survive clipping.
    pub min_visibility: f64,
    /// Minimum side of a clipped box, in pixels.
    pub min_side_px: f64,
}

impl Default for TileSpec {
    fn default() -> Self {
        Self {
            grid: 3,
            min_visibility: 0.25,
            min_side_px: 2.0,
        }
    }
}

impl TileSpec {
    pub fn validate(&self) -> Result<()> {
        if self.grid == 0 {
            return Err(Error::invalid("tile grid must be >= 1"));
        }
        if !(self.min_visibility > 0.0 && self.min_visibility <= 1.0) {
            return Err(Error::invalid("min_visibility must be in (0, 1]"));
        }
        if !(self.min_side_px > 0.0) {
            return Err(Error::invalid("min_side_px must be positive"));
        }
        Ok(())
    }
}

/// Pixel spans `[start, end)` for a floor partition; the last span absorbs the remainder.
fn spans(len: usize, k: usize) -> Vec<(usize, usize)> {
    let base = len / k;
    (0..k)
        .map(|i| (i * base, if i + 1 == k { len } else { (i + 1) * base }))
        .collect()
}

/// Splits a sample into `grid x grid` tiles in row-major order, ids suffixed `_r{row}_c{col}`.
///
/// Boxes cut by a tile border are kept when at least `min_visibility` of their area and
/// `min_side_px` on both sides survive. Unclipped boxes are always kept.
pub fn tile_image(s: &ImageSample, spec: &TileSpec) -> Result<Vec<ImageSample>> {
    spec.validate()?;
    let k = spec.grid;
    if s.width() < k || s.height() < k {
        return Err(Error::invalid(format!(
            "image {} ({}x{}) is smaller than a {k}x{k} grid",
            s.id(),
            s.width(),
            s.height()
        )));
    }
    if s.privileged().is_some() {
        return Err(Error::PrivilegedPresent(s.id().to_string()));
    }
    let cols = spans(s.width(), k);
    let rows = spans(s.height(), k);
    let mut tiles = Vec::with_capacity(k * k);
    for (r, &(y0, y1)) in rows.iter().enumerate() {
        for (c, &(x0, x1)) in cols.iter().enumerate() {
            let region = BoundingBox::new(x0 as f64, y0 as f64, x1 as f64, y1 as f64)?;
            let annotations = s
                .annotations()
                .iter()
                .filter_map(|a| {
                    let clipped = clip_box(&a.bbox, &region)?;
                    if clipped != a.bbox {
                        let visible = box_area(&clipped) / box_area(&a.bbox);
                        if visible < spec.min_visibility
                            || clipped.width() < spec.min_side_px
                            || clipped.height() < spec.min_side_px
                        {
                            return None;
                        }
                    }
                    Some(Annotation::new(
                        clipped.translate(x0 as f64, y0 as f64),
                        a.class_id,
                    ))
                })
                .collect();
            let rgb = s.rgb().clone().map(|p| p.crop(x0, y0, x1, y1));
            tiles.push(ImageSample::new(
                format!("{}_r{r}_c{c}", s.id()),
                rgb,
                None,
                annotations,
            )?);
        }
    }
    Ok(tiles)
}

fn resize_plane(p: &ImagePlane, out_w: usize, out_h: usize) -> ImagePlane {
    let (in_w, in_h) = (p.width(), p.height());
    // half-pixel-centre convention
    let axis = |out: usize, inp: usize| -> Vec<(usize, usize, f64)> {
        let scale = inp as f64 / out as f64;
        (0..out)
            .map(|o| {
                let src = ((o as f64 + 0.5) * scale - 0.5).clamp(0.0, (inp - 1) as f64);
                let i0 = src.floor() as usize;
                let i1 = (i0 + 1).min(inp - 1);
                (i0, i1, src - i0 as f64)
            })
            .collect()
    };
    let xs = axis(out_w, in_w);
    let ys = axis(out_h, in_h);
    let mut values = Vec::with_capacity(out_w * out_h);
    for &(y0, y1, fy) in &ys {
        for &(x0, x1, fx) in &xs {
            let top = p.get(x0, y0) * (1.0 - fx) + p.get(x1, y0) * fx;
            let bottom = p.get(x0, y1) * (1.0 - fx) + p.get(x1, y1) * fx;
            values.push(top * (1.0 - fy) + bottom * fy);
        }
    }
    ImagePlane::new(out_w, out_h, values).expect("shape by construction")
}

/// Bilinear resize of every plane; boxes scale with the image and are dropped below 1 px.
pub fn resize_sample(s: &ImageSample, out_w: usize, out_h: usize) -> Result<ImageSample> {
    if out_w == 0 || out_h == 0 {
        return Err(Error::invalid("resize target must be at least 1x1"));
    }
    if out_w == s.width() && out_h == s.height() {
        return Ok(s.clone());
    }
    let sx = out_w as f64 / s.width() as f64;
    let sy = out_h as f64 / s.height() as f64;
    let annotations = s
        .annotations()
        .iter()
        .filter_map(|a| {
            let b = a.bbox.scale(sx, sy).ok()?;
            (b.width() >= 1.0 && b.height() >= 1.0).then(|| Annotation::new(b, a.class_id))
        })
        .collect();
    let rgb = s.rgb().clone().map(|p| resize_plane(&p, out_w, out_h));
    let privileged = s.privileged().map(|p| resize_plane(p, out_w, out_h));
    ImageSample::new(s.id(), rgb, privileged, annotations)
}

/// Number of distinct flip/rotation transforms of a rectangle.
pub const DIHEDRAL_COUNT: usize = 8;

/// Pixel-exact flip/rotation: transform `k` mirrors horizontally when `k >= 4`, then rotates
/// clockwise by `90 * (k % 4)` degrees. Boxes follow the pixels; `k = 0` is the identity.
pub fn dihedral(s: &ImageSample, k: usize) -> Result<ImageSample> {
    if k >= DIHEDRAL_COUNT {
        return Err(Error::invalid(format!("dihedral index {k} out of range")));
    }
    if k == 0 {
        return Ok(s.clone());
    }
    let (w, h) = (s.width(), s.height());
    let flip = k >= 4;
    let turns = k % 4;
    let (ow, oh) = if turns % 2 == 1 { (h, w) } else { (w, h) };
    // maps an output pixel back to its source pixel
    let src = |x: usize, y: usize| -> (usize, usize) {
        let (mut sx, sy) = match turns {
            0 => (x, y),
            1 => (y, h - 1 - x),
            2 => (w - 1 - x, h - 1 - y),
            _ => (w - 1 - y, x),
        };
        if flip {
            sx = w - 1 - sx;
        }
        (sx, sy)
    };
    let map_plane = |p: &ImagePlane| {
        let values = (0..oh)
            .flat_map(|y| (0..ow).map(move |x| (x, y)))
            .map(|(x, y)| {
                let (sx, sy) = src(x, y);
                p.get(sx, sy)
            })
            .collect();
        ImagePlane::new(ow, oh, values).expect("shape by construction")
    };
    let (fw, fh) = (w as f64, h as f64);
    let annotations = s
        .annotations()
        .iter()
        .map(|a| {
            let b = &a.bbox;
            let (mut x0, y0, mut x1, y1) = (b.x_min(), b.y_min(), b.x_max(), b.y_max());
            if flip {
                (x0, x1) = (fw - x1, fw - x0);
            }
            let c = match turns {
                0 => [x0, y0, x1, y1],
                1 => [fh - y1, x0, fh - y0, x1],
                2 => [fw - x1, fh - y1, fw - x0, fh - y0],
                _ => [y0, fw - x1, y1, fw - x0],
            };
            Ok(Annotation::new(BoundingBox::new(c[0], c[1], c[2], c[3])?, a.class_id))
        })
        .collect::<Result<Vec<_>>>()?;
    let rgb = s.rgb().clone().map(|p| map_plane(&p));
    let privileged = s.privileged().map(map_plane);
    ImageSample::new(s.id(), rgb, privileged, annotations)
}
