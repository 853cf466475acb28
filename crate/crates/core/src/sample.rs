//! Annotations, detections, raster planes and the dataset container.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BoundingBox;

/// Dense 0-based index into a dataset's category table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClassId(pub usize);

impl fmt::Display for ClassId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub bbox: BoundingBox,
    pub class_id: ClassId,
}

impl Annotation {
    pub fn new(bbox: BoundingBox, class_id: ClassId) -> Self {
        Self { bbox, class_id }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub bbox: BoundingBox,
    pub class_id: ClassId,
    pub score: f64,
}

impl Detection {
    pub fn new(bbox: BoundingBox, class_id: ClassId, score: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&score) {
            return Err(Error::invalid(format!("detection score {score} outside [0,1]")));
        }
        Ok(Self {
            bbox,
            class_id,
            score,
        })
    }
}

/// Single-channel raster, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ImagePlane {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl ImagePlane {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Shape(format!("empty plane {width}x{height}")));
        }
        if values.len() != width * height {
            return Err(Error::Shape(format!(
                "plane {width}x{height} needs {} values, got {}",
                width * height,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite pixel value"));
        }
        Ok(Self {
            width,
            height,
            values,
        })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            values: vec![0.0; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }
    pub fn height(&self) -> usize {
        self.height
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }
    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Exact crop of the half-open pixel rectangle `[x0, x1) x [y0, y1)`.
    pub fn crop(&self, x0: usize, y0: usize, x1: usize, y1: usize) -> Self {
        let mut values = Vec::with_capacity((x1 - x0) * (y1 - y0));
        for y in y0..y1 {
            values.extend_from_slice(&self.values[y * self.width + x0..y * self.width + x1]);
        }
        Self {
            width: x1 - x0,
            height: y1 - y0,
            values,
        }
    }
}

/// One training triplet: RGB planes, the optional privileged plane, and ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageSample {
    id: String,
    rgb: [ImagePlane; 3],
    privileged: Option<ImagePlane>,
    annotations: Vec<Annotation>,
}

impl ImageSample {
    pub fn new(
        id: impl Into<String>,
        rgb: [ImagePlane; 3],
        privileged: Option<ImagePlane>,
        annotations: Vec<Annotation>,
    ) -> Result<Self> {
        let id = id.into();
        let (w, h) = (rgb[0].width, rgb[0].height);
        let same = |p: &ImagePlane| p.width == w && p.height == h;
        if !rgb.iter().all(same) {
            return Err(Error::Shape(format!("sample {id}: rgb planes differ in size")));
        }
        if let Some(p) = &privileged {
            if !same(p) {
                return Err(Error::Shape(format!(
                    "sample {id}: privileged plane differs in size"
                )));
            }
            if p.values.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::invalid(format!(
                    "sample {id}: privileged values outside [0,1]"
                )));
            }
        }
        let bounds = BoundingBox::new(0.0, 0.0, w as f64, h as f64)?;
        if let Some(a) = annotations.iter().find(|a| !bounds.contains(&a.bbox)) {
            return Err(Error::invalid(format!(
                "sample {id}: annotation {:?} outside {w}x{h}",
                a.bbox.to_array()
            )));
        }
        Ok(Self {
            id,
            rgb,
            privileged,
            annotations,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }
    pub fn width(&self) -> usize {
        self.rgb[0].width
    }
    pub fn height(&self) -> usize {
        self.rgb[0].height
    }
    pub fn rgb(&self) -> &[ImagePlane; 3] {
        &self.rgb
    }
    pub fn privileged(&self) -> Option<&ImagePlane> {
        self.privileged.as_ref()
    }
    pub fn annotations(&self) -> &[Annotation] {
        &self.annotations
    }

    /// RGB planes only (student / baseline input).
    pub fn student_planes(&self) -> Vec<&ImagePlane> {
        self.rgb.iter().collect()
    }

    /// RGB followed by the privileged plane (teacher input).
    pub fn teacher_planes(&self) -> Result<Vec<&ImagePlane>> {
        let p = self
            .privileged
            .as_ref()
            .ok_or_else(|| Error::MissingPrivileged(self.id.clone()))?;
        Ok(self.rgb.iter().chain(std::iter::once(p)).collect())
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    pub(crate) fn into_parts(self) -> (String, [ImagePlane; 3], Option<ImagePlane>, Vec<Annotation>) {
        (self.id, self.rgb, self.privileged, self.annotations)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn as_str(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    samples: Vec<ImageSample>,
    categories: Vec<String>,
    split: Split,
}

impl Dataset {
    pub fn new(samples: Vec<ImageSample>, categories: Vec<String>, split: Split) -> Result<Self> {
        if categories.is_empty() {
            return Err(Error::invalid("dataset needs at least one category"));
        }
        let mut seen = HashSet::new();
        for s in &samples {
            if !seen.insert(s.id.as_str()) {
                return Err(Error::Integrity(format!("duplicate sample id {}", s.id)));
            }
            if let Some(a) = s.annotations.iter().find(|a| a.class_id.0 >= categories.len()) {
                return Err(Error::Integrity(format!(
                    "sample {}: class id {} >= {} categories",
                    s.id,
                    a.class_id,
                    categories.len()
                )));
            }
        }
        Ok(Self {
            samples,
            categories,
            split,
        })
    }

    pub fn samples(&self) -> &[ImageSample] {
        &self.samples
    }
    pub fn categories(&self) -> &[String] {
        &self.categories
    }
    pub fn num_classes(&self) -> usize {
        self.categories.len()
    }
    pub fn split(&self) -> Split {
        self.split
    }
    pub fn len(&self) -> usize {
        self.samples.len()
    }
    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
    pub fn into_samples(self) -> Vec<ImageSample> {
        self.samples
    }

    /// Applies `f` to every sample, keeping categories and split.
    pub fn try_map<F>(self, f: F) -> Result<Self>
    where
        F: FnMut(ImageSample) -> Result<ImageSample>,
    {
        let samples = self.samples.into_iter().map(f).collect::<Result<Vec<_>>>()?;
        Self::new(samples, self.categories, self.split)
    }

    /// Like [`Dataset::try_map`] but each sample may expand into several.
    pub fn try_flat_map<F>(self, mut f: F) -> Result<Self>
    where
        F: FnMut(ImageSample) -> Result<Vec<ImageSample>>,
    {
        let mut samples = Vec::new();
        for s in self.samples {
            samples.extend(f(s)?);
        }
        Self::new(samples, self.categories, self.split)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plane(w: usize, h: usize) -> ImagePlane {
        ImagePlane::zeros(w, h)
    }

    #[test]
    fn sample_rejects_out_of_bounds_box() {
        let b = BoundingBox::new(0.0, 0.0, 5.0, 5.0).unwrap();
        let rgb = [plane(4, 4), plane(4, 4), plane(4, 4)];
        let err = ImageSample::new("a", rgb, None, vec![Annotation::new(b, ClassId(0))]);
        assert!(err.is_err());
    }

    #[test]
    fn sample_rejects_mismatched_planes() {
        let rgb = [plane(4, 4), plane(4, 5), plane(4, 4)];
        assert!(ImageSample::new("a", rgb, None, vec![]).is_err());
    }

    #[test]
    fn dataset_rejects_duplicate_ids_and_bad_classes() {
        let mk = |id: &str, c: usize| {
            let b = BoundingBox::new(0.0, 0.0, 2.0, 2.0).unwrap();
            ImageSample::new(
                id,
                [plane(4, 4), plane(4, 4), plane(4, 4)],
                None,
                vec![Annotation::new(b, ClassId(c))],
            )
            .unwrap()
        };
        let cats = vec!["a".to_string()];
        assert!(Dataset::new(vec![mk("x", 0), mk("x", 0)], cats.clone(), Split::Train).is_err());
        assert!(Dataset::new(vec![mk("x", 1)], cats.clone(), Split::Train).is_err());
        assert!(Dataset::new(vec![mk("x", 0), mk("y", 0)], cats, Split::Train).is_ok());
    }

    #[test]
    fn crop_is_exact() {
        let p = ImagePlane::new(3, 2, vec![0., 1., 2., 3., 4., 5.]).unwrap();
        let c = p.crop(1, 0, 3, 2);
        assert_eq!(c.values(), &[1., 2., 4., 5.]);
    }

    #[test]
    fn detection_score_range() {
        let b = BoundingBox::new(0.0, 0.0, 2.0, 2.0).unwrap();
        assert!(Detection::new(b, ClassId(0), 1.5).is_err());
        assert!(Detection::new(b, ClassId(0), 1.0).is_ok());
    }
}
