//! Target assignment, detection loss and decoding for the dense grid head.

use super::{DetectorConfig, RawPrediction};
use crate::error::{Error, Result};
use crate::geometry::{box_area, BoundingBox};
use crate::sample::{Annotation, ClassId, Detection};

pub const LAMBDA_OBJ: f64 = 1.0;
pub const LAMBDA_NOOBJ: f64 = 0.5;
pub const LAMBDA_BOX: f64 = 5.0;
pub const LAMBDA_CLS: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellTarget {
    /// Centre offset within the cell, in [0, 1).
    pub tx: f64,
    pub ty: f64,
    /// Box side over image side, in (0, 1].
    pub tw: f64,
    pub th: f64,
    pub class_id: ClassId,
}

/// One optional target per grid cell, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Targets {
    grid: usize,
    cells: Vec<Option<CellTarget>>,
}

impl Targets {
    pub fn grid(&self) -> usize {
        self.grid
    }
    pub fn cell(&self, row: usize, col: usize) -> Option<&CellTarget> {
        self.cells[row * self.grid + col].as_ref()
    }
    pub fn cells(&self) -> &[Option<CellTarget>] {
        &self.cells
    }
    pub fn num_positive(&self) -> usize {
        self.cells.iter().filter(|c| c.is_some()).count()
    }
}

/// Assigns each box to the cell containing its centre. When several boxes land in one
/// cell the largest wins, then the lower class id, then the earlier annotation.
pub fn assign_targets(annotations: &[Annotation], config: &DetectorConfig) -> Targets {
    let grid = config.grid();
    let side = config.input_size as f64;
    let cell = side / grid as f64;
    let mut best: Vec<Option<(f64, ClassId, CellTarget)>> = vec![None; grid * grid];
    for a in annotations {
        let (cx, cy) = a.bbox.center();
        let col = ((cx / cell).floor().max(0.0) as usize).min(grid - 1);
        let row = ((cy / cell).floor().max(0.0) as usize).min(grid - 1);
        let target = CellTarget {
            tx: (cx / cell - col as f64).clamp(0.0, 1.0),
            ty: (cy / cell - row as f64).clamp(0.0, 1.0),
            tw: (a.bbox.width() / side).min(1.0),
            th: (a.bbox.height() / side).min(1.0),
            class_id: a.class_id,
        };
        let area = box_area(&a.bbox);
        let slot = &mut best[row * grid + col];
        let replace = match slot {
            None => true,
            Some((a0, c0, _)) => area > *a0 || (area == *a0 && a.class_id < *c0),
        };
        if replace {
            *slot = Some((area, a.class_id, target));
        }
    }
    Targets {
        grid,
        cells: best.into_iter().map(|s| s.map(|(_, _, t)| t)).collect(),
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)`, stable for large |x|.
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn smooth_l1(d: f64) -> (f64, f64) {
    if d.abs() < 1.0 {
        (0.5 * d * d, d)
    } else {
        (d.abs() - 0.5, d.signum())
    }
}

/// Softmax probabilities and log-sum-exp of `z`.
fn softmax(z: &[f64]) -> (Vec<f64>, f64) {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let sum: f64 = exps.iter().sum();
    (exps.iter().map(|e| e / sum).collect(), m + sum.ln())
}

/// The four weighted loss terms; `total()` is their sum.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossTerms {
    pub noobj: f64,
    pub obj: f64,
    pub bbox: f64,
    pub cls: f64,
}

impl LossTerms {
    pub fn total(&self) -> f64 {
        self.noobj + self.obj + self.bbox + self.cls
    }
}

fn check_shapes(pred: &RawPrediction, targets: &Targets) -> Result<usize> {
    if pred.grid() != targets.grid {
        return Err(Error::Shape(format!(
            "prediction grid {} vs target grid {}",
            pred.grid(),
            targets.grid
        )));
    }
    if pred.channels() < 6 {
        return Err(Error::Shape("prediction needs at least one class logit".into()));
    }
    let num_classes = pred.channels() - 5;
    if let Some(t) = targets.cells.iter().flatten().find(|t| t.class_id.0 >= num_classes) {
        return Err(Error::Shape(format!(
            "target class {} but prediction has {num_classes} classes",
            t.class_id
        )));
    }
    Ok(num_classes)
}

/// Detection loss and its gradient with respect to every raw prediction value.
///
/// Each term is averaged over the cells that contribute to it (negatives for the
/// no-object term, positives for the rest) and skipped when there are none.
pub fn detection_loss_with_grad(pred: &RawPrediction, targets: &Targets) -> Result<(LossTerms, Vec<f64>)> {
    check_shapes(pred, targets)?;
    let k = pred.channels();
    let n_pos = targets.num_positive();
    let n_neg = targets.cells.len() - n_pos;
    let mut terms = LossTerms::default();
    let mut grad = vec![0.0; pred.values().len()];
    for (i, target) in targets.cells.iter().enumerate() {
        let out = &pred.values()[i * k..][..k];
        let g = &mut grad[i * k..][..k];
        let obj = out[0];
        match target {
            None => {
                let w = LAMBDA_NOOBJ / n_neg as f64;
                terms.noobj += w * softplus(obj);
                g[0] = w * sigmoid(obj);
            }
            Some(t) => {
                let w = 1.0 / n_pos as f64;
                terms.obj += LAMBDA_OBJ * w * softplus(-obj);
                g[0] = LAMBDA_OBJ * w * (sigmoid(obj) - 1.0);
                for (j, want) in [t.tx, t.ty, t.tw, t.th].into_iter().enumerate() {
                    let s = sigmoid(out[1 + j]);
                    let (l, dl) = smooth_l1(s - want);
                    terms.bbox += LAMBDA_BOX * w * l;
                    g[1 + j] = LAMBDA_BOX * w * dl * s * (1.0 - s);
                }
                let (probs, lse) = softmax(&out[5..]);
                terms.cls += LAMBDA_CLS * w * (lse - out[5 + t.class_id.0]);
                for (c, p) in probs.iter().enumerate() {
                    let onehot = if c == t.class_id.0 { 1.0 } else { 0.0 };
                    g[5 + c] = LAMBDA_CLS * w * (p - onehot);
                }
            }
        }
    }
    Ok((terms, grad))
}

pub fn detection_loss(pred: &RawPrediction, targets: &Targets) -> Result<f64> {
    Ok(detection_loss_with_grad(pred, targets)?.0.total())
}

/// Turns the dense output into detections with `score >= score_threshold`.
///
/// Score is `sigmoid(objectness) * max softmax`; boxes are clipped to the image and
/// dropped when nothing remains.
pub fn decode(pred: &RawPrediction, config: &DetectorConfig, score_threshold: f64) -> Vec<Detection> {
    let grid = pred.grid();
    let side = config.input_size as f64;
    let cell = side / grid as f64;
    let image = BoundingBox::new(0.0, 0.0, side, side).expect("positive input size");
    let mut dets = Vec::new();
    for row in 0..grid {
        for col in 0..grid {
            let out = pred.cell(row, col);
            let (probs, _) = softmax(&out[5..]);
            let (class, p) = probs
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (c, &p)| if p > best.1 { (c, p) } else { best });
            let score = (sigmoid(out[0]) * p).clamp(0.0, 1.0);
            if score < score_threshold {
                continue;
            }
            let cx = (col as f64 + sigmoid(out[1])) * cell;
            let cy = (row as f64 + sigmoid(out[2])) * cell;
            let w = sigmoid(out[3]) * side;
            let h = sigmoid(out[4]) * side;
            let Ok(b) = BoundingBox::new(cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h) else {
                continue;
            };
            if let Some(b) = crate::geometry::clip_box(&b, &image) {
                dets.push(Detection {
                    bbox: b,
                    class_id: ClassId(class),
                    score,
                });
            }
        }
    }
    dets
}
