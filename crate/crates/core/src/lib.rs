//! Learning using privileged information for small-object detection.
//!
//! A teacher detector sees RGB plus a class-shaded box mask; a student sees RGB only and is
//! trained on `(1 - alpha) * detection + alpha * cosine(teacher, student)` on the pooled
//! backbone embedding. Everything (data, model, optimizer, metrics) is deterministic CPU code.

pub mod detector;
pub mod distill;
pub mod error;
pub mod evaluate;
pub mod experiment;
pub mod geometry;
pub mod ingest;
pub mod metrics;
pub mod preprocess;
pub mod privileged;
pub mod sample;
pub mod synth;

pub use error::{Error, Result};
pub use geometry::{box_area, clip_box, iou, BoundingBox};
pub use sample::{Annotation, ClassId, Dataset, Detection, ImagePlane, ImageSample, Split};
