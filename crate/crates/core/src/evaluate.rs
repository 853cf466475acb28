//! Inference plus scoring of a model over a dataset.

use serde::{Deserialize, Serialize};

use crate::detector::{decode, DetectorModel, Role};
use crate::error::Result;
use crate::metrics::{coco_map, coco_thresholds, nms, EvalReport, OperatingPoint};
use crate::sample::{Dataset, Detection, ImageSample};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalSettings {
    /// Decode threshold; low so that the AP curve sees the full ranking.
    pub score_threshold: f64,
    pub nms_iou: f64,
    pub thresholds: Vec<f64>,
    pub operating_point: OperatingPoint,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self {
            score_threshold: 0.01,
            nms_iou: 0.5,
            thresholds: coco_thresholds(),
            operating_point: OperatingPoint::default(),
        }
    }
}

/// Post-NMS detections for one sample. Teachers read the privileged plane, everything else
/// sees RGB only.
pub fn predict(model: &DetectorModel, sample: &ImageSample, settings: &EvalSettings) -> Result<Vec<Detection>> {
    let planes = if model.role() == Role::Teacher {
        sample.teacher_planes()?
    } else {
        sample.student_planes()
    };
    let (pred, _) = model.forward(&planes)?;
    let dets = decode(&pred, model.config(), settings.score_threshold);
    Ok(nms(&dets, settings.nms_iou))
}

pub fn predict_dataset(model: &DetectorModel, data: &Dataset, settings: &EvalSettings) -> Result<Vec<Vec<Detection>>> {
    data.samples().iter().map(|s| predict(model, s, settings)).collect()
}

pub fn evaluate_model(model: &DetectorModel, data: &Dataset, settings: &EvalSettings) -> Result<EvalReport> {
    let dets = predict_dataset(model, data, settings)?;
    let gts: Vec<_> = data.samples().iter().map(|s| s.annotations().to_vec()).collect();
    coco_map(
        &dets,
        &gts,
        model.config().num_classes,
        &settings.thresholds,
        settings.operating_point,
    )
}
