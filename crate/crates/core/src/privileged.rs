//! Ground-truth boxes rendered as a grayscale mask plane, one shade per class.

use crate::error::{Error, Result};
use crate::sample::{Annotation, ClassId, ImagePlane, ImageSample};

/// Largest class count whose shades stay distinct after 8-bit quantization.
pub const MAX_MASK_CLASSES: usize = 255;

/// Shade of class `k`: `(k+1)/num_classes`, snapped to the 8-bit grid.
pub fn class_shade(k: ClassId, num_classes: usize) -> Result<f64> {
    if num_classes == 0 || num_classes > MAX_MASK_CLASSES {
        return Err(Error::invalid(format!(
            "num_classes {num_classes} outside 1..={MAX_MASK_CLASSES}"
        )));
    }
    if k.0 >= num_classes {
        return Err(Error::invalid(format!(
            "class {k} out of range for {num_classes} classes"
        )));
    }
    let shade = (k.0 + 1) as f64 / num_classes as f64;
    Ok((255.0 * shade).round() / 255.0)
}

/// Class whose shade is `value`; `None` for background.
pub fn decode_shade(value: f64, num_classes: usize) -> Option<ClassId> {
    if value <= 0.0 {
        return None;
    }
    let k = (value * num_classes as f64).round() as usize;
    (k >= 1).then(|| ClassId(k - 1))
}

/// Renders the mask: each pixel takes the maximum shade among boxes covering its centre.
pub fn encode_mask(
    annotations: &[Annotation],
    width: usize,
    height: usize,
    num_classes: usize,
) -> Result<ImagePlane> {
    let mut values = vec![0.0f64; width * height];
    for a in annotations {
        let shade = class_shade(a.class_id, num_classes)?;
        let b = a.bbox;
        // pixel px is covered when x_min <= px + 0.5 < x_max
        let first = |lo: f64| (lo - 0.5).ceil().max(0.0) as usize;
        let end = |hi: f64, n: usize| ((hi - 0.5).ceil().max(0.0) as usize).min(n);
        let (x0, x1) = (first(b.x_min()), end(b.x_max(), width));
        let (y0, y1) = (first(b.y_min()), end(b.y_max(), height));
        for y in y0..y1 {
            for v in &mut values[y * width + x0.min(x1)..y * width + x1] {
                *v = v.max(shade);
            }
        }
    }
    ImagePlane::new(width, height, values)
}

/// Returns `s` with its privileged plane rendered from its own annotations.
pub fn attach_privileged_channel(s: ImageSample, num_classes: usize) -> Result<ImageSample> {
    if s.privileged().is_some() {
        return Err(Error::PrivilegedPresent(s.id().to_string()));
    }
    let mask = encode_mask(s.annotations(), s.width(), s.height(), num_classes)?;
    let (id, rgb, _, anns) = s.into_parts();
    ImageSample::new(id, rgb, Some(mask), anns)
}
