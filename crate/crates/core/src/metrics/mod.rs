//! Post-processing and COCO-style evaluation.

mod eval;
mod nms;
pub mod report;

pub use eval::{
    average_precision, coco_map, coco_thresholds, f1_score, match_detections, prf1, EvalReport,
    MatchResult, OperatingPoint, RECALL_POINTS,
};
pub use nms::{detection_order, nms, sort_detections};
