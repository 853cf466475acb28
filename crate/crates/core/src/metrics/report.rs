//! Serialized forms of evaluation results and predictions.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::EvalReport;
use crate::error::Result;
use crate::geometry::BoundingBox;
use crate::sample::{ClassId, Detection};

/// One row of the prediction interchange file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub image_id: String,
    pub class_id: usize,
    /// `[x, y, width, height]` in pixels.
    pub bbox: [f64; 4],
    pub score: f64,
}

impl PredictionRecord {
    pub fn new(image_id: &str, d: &Detection) -> Self {
        Self {
            image_id: image_id.to_string(),
            class_id: d.class_id.0,
            bbox: d.bbox.to_xywh(),
            score: d.score,
        }
    }

    pub fn to_detection(&self) -> Result<Detection> {
        let [x, y, w, h] = self.bbox;
        Detection::new(BoundingBox::from_xywh(x, y, w, h)?, ClassId(self.class_id), self.score)
    }
}

pub fn predictions_to_json(records: &[PredictionRecord]) -> Result<String> {
    Ok(serde_json::to_string_pretty(records)?)
}

pub fn predictions_from_json(text: &str) -> Result<Vec<PredictionRecord>> {
    Ok(serde_json::from_str(text)?)
}

pub fn report_to_json(report: &EvalReport) -> Result<String> {
    Ok(serde_json::to_string_pretty(report)?)
}

/// Flat `metric,value` CSV followed by per-class AP rows `ap@<iou>,<class>,<value>`.
pub fn report_to_csv(report: &EvalReport) -> String {
    let mut out = String::from("metric,class,value\n");
    let scalars = [
        ("map50", report.map50),
        ("map75", report.map75),
        ("map5095", report.map5095),
        ("precision", report.precision),
        ("recall", report.recall),
        ("f1", report.f1),
    ];
    for (name, v) in scalars {
        let _ = writeln!(out, "{name},,{v}");
    }
    for (name, v) in [("tp", report.tp), ("fp", report.fp), ("fn", report.fn_count)] {
        let _ = writeln!(out, "{name},,{v}");
    }
    for (t, row) in report.thresholds.iter().zip(&report.per_class_ap) {
        for (c, ap) in row.iter().enumerate() {
            if let Some(ap) = ap {
                let _ = writeln!(out, "ap@{t:.2},{c},{ap}");
            }
        }
    }
    out
}
