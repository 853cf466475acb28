//! COCO-style detection manifests.

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BoundingBox;
use crate::sample::{Annotation, ClassId, Split};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CocoImage {
    pub id: u64,
    pub file_name: String,
    pub width: usize,
    pub height: usize,
    /// Non-standard: which split this image belongs to. Untagged images count as test.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<Split>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CocoAnnotation {
    pub id: u64,
    pub image_id: u64,
    pub category_id: u64,
    pub bbox: [f64; 4],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CocoCategory {
    pub id: u64,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CocoManifest {
    pub images: Vec<CocoImage>,
    pub annotations: Vec<CocoAnnotation>,
    pub categories: Vec<CocoCategory>,
}

impl CocoManifest {
    pub fn validate(&self) -> Result<()> {
        let mut image_ids = HashSet::new();
        for im in &self.images {
            if !image_ids.insert(im.id) {
                return Err(Error::Integrity(format!("duplicate image id {}", im.id)));
            }
            if im.width == 0 || im.height == 0 {
                return Err(Error::invalid(format!("image {} has zero size", im.id)));
            }
        }
        let mut cat_ids = HashSet::new();
        for c in &self.categories {
            if !cat_ids.insert(c.id) {
                return Err(Error::Integrity(format!("duplicate category id {}", c.id)));
            }
        }
        for a in &self.annotations {
            if !image_ids.contains(&a.image_id) {
                return Err(Error::Integrity(format!(
                    "annotation {} references missing image {}",
                    a.id, a.image_id
                )));
            }
            if !cat_ids.contains(&a.category_id) {
                return Err(Error::Integrity(format!(
                    "annotation {} references missing category {}",
                    a.id, a.category_id
                )));
            }
            let [x, y, w, h] = a.bbox;
            if !(w > 0.0 && h > 0.0) || !(x.is_finite() && y.is_finite()) {
                return Err(Error::invalid(format!(
                    "annotation {} has non-positive bbox {:?}",
                    a.id, a.bbox
                )));
            }
        }
        Ok(())
    }

    /// Original category id → dense class id, in ascending original-id order.
    pub fn class_map(&self) -> BTreeMap<u64, ClassId> {
        let mut ids: Vec<u64> = self.categories.iter().map(|c| c.id).collect();
        ids.sort_unstable();
        ids.into_iter()
            .enumerate()
            .map(|(dense, id)| (id, ClassId(dense)))
            .collect()
    }

    /// Category names ordered by dense class id.
    pub fn category_names(&self) -> Vec<String> {
        let mut cats: Vec<&CocoCategory> = self.categories.iter().collect();
        cats.sort_by_key(|c| c.id);
        cats.into_iter().map(|c| c.name.clone()).collect()
    }

    /// Annotations per image id, converted to corner form with dense class ids.
    pub fn annotations_by_image(&self) -> Result<HashMap<u64, Vec<Annotation>>> {
        let classes = self.class_map();
        let mut out: HashMap<u64, Vec<Annotation>> = HashMap::new();
        for a in &self.annotations {
            let [x, y, w, h] = a.bbox;
            let bbox = BoundingBox::from_xywh(x, y, w, h)?;
            out.entry(a.image_id)
                .or_default()
                .push(Annotation::new(bbox, classes[&a.category_id]));
        }
        Ok(out)
    }

    pub fn image_split(im: &CocoImage) -> Split {
        im.split.unwrap_or(Split::Test)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Parses and validates a COCO manifest.
pub fn parse_coco(json_text: &str) -> Result<CocoManifest> {
    let manifest: CocoManifest = serde_json::from_str(json_text)?;
    manifest.validate()?;
    Ok(manifest)
}
