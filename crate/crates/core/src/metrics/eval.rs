use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::nms::detection_order;
use crate::error::{Error, Result};
use crate::geometry::{box_area, iou};
use crate::sample::{Annotation, Detection};

/// The ten IoU thresholds 0.50, 0.55, ..., 0.95.
pub fn coco_thresholds() -> Vec<f64> {
    (0..10).map(|i| (50 + 5 * i) as f64 / 100.0).collect()
}

/// Number of recall sample points in the interpolated AP.
pub const RECALL_POINTS: usize = 101;

/// Where single precision/recall/F1 numbers are read off.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    pub score_threshold: f64,
    pub iou_threshold: f64,
}

impl Default for OperatingPoint {
    fn default() -> Self {
        Self {
            score_threshold: 0.5,
            iou_threshold: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatchResult {
    pub tp: Vec<bool>,
    pub fp: Vec<bool>,
    pub fn_count: usize,
}

/// Greedy matching of score-sorted detections to ground truth, class by class.
///
/// Each detection takes the unmatched same-class ground truth with the highest IoU at or
/// above `iou_threshold` (lowest index on ties).
pub fn match_detections(dets: &[Detection], gts: &[Annotation], iou_threshold: f64) -> MatchResult {
    let mut used = vec![false; gts.len()];
    let mut tp = vec![false; dets.len()];
    for (i, d) in dets.iter().enumerate() {
        let mut best: Option<(usize, f64)> = None;
        for (j, g) in gts.iter().enumerate() {
            if used[j] || g.class_id != d.class_id {
                continue;
            }
            let o = iou(&d.bbox, &g.bbox);
            if o >= iou_threshold && best.map_or(true, |(_, b)| o > b) {
                best = Some((j, o));
            }
        }
        if let Some((j, _)) = best {
            used[j] = true;
            tp[i] = true;
        }
    }
    let fp = tp.iter().map(|t| !t).collect();
    MatchResult {
        tp,
        fp,
        fn_count: used.iter().filter(|u| !**u).count(),
    }
}

/// 101-point interpolated AP of a score-sorted TP/FP sequence.
///
/// The precision envelope is made non-increasing; recall point `r` takes the envelope at
/// the first rank whose recall reaches `r`, or 0 if none does. Returns 0 when `num_gt == 0`.
pub fn average_precision(tp: &[bool], num_gt: usize) -> f64 {
    if num_gt == 0 || tp.is_empty() {
        return 0.0;
    }
    let mut cum_tp = Vec::with_capacity(tp.len());
    let mut precision = Vec::with_capacity(tp.len());
    let mut hits = 0usize;
    for (i, &t) in tp.iter().enumerate() {
        hits += usize::from(t);
        cum_tp.push(hits);
        precision.push(hits as f64 / (i + 1) as f64);
    }
    for i in (0..precision.len().saturating_sub(1)).rev() {
        precision[i] = precision[i].max(precision[i + 1]);
    }
    let mut sum = 0.0;
    let mut rank = 0;
    for r in 0..RECALL_POINTS {
        // recall >= r/100  <=>  100 * tp >= r * num_gt, evaluated exactly in integers
        while rank < cum_tp.len() && 100 * cum_tp[rank] < r * num_gt {
            rank += 1;
        }
        if rank == cum_tp.len() {
            break;
        }
        sum += precision[rank];
    }
    sum / RECALL_POINTS as f64
}

/// `(precision, recall, f1)` from pooled counts; each ratio is 0 when undefined.
pub fn prf1(tp: usize, fp: usize, fn_count: usize) -> (f64, f64, f64) {
    let ratio = |n: usize, d: usize| if d == 0 { 0.0 } else { n as f64 / d as f64 };
    let p = ratio(tp, tp + fp);
    let r = ratio(tp, tp + fn_count);
    (p, r, f1_score(p, r))
}

pub fn f1_score(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub thresholds: Vec<f64>,
    /// `per_class_ap[t][c]`; `None` for classes without ground truth.
    pub per_class_ap: Vec<Vec<Option<f64>>>,
    pub map50: f64,
    pub map75: f64,
    pub map5095: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_count: usize,
    pub num_images: usize,
}

impl EvalReport {
    /// Mean over evaluated classes of the AP at threshold row `t`.
    pub fn class_mean(&self, t: usize) -> f64 {
        class_mean(&self.per_class_ap[t])
    }
}

fn class_mean(row: &[Option<f64>]) -> f64 {
    let vals: Vec<f64> = row.iter().flatten().copied().collect();
    if vals.is_empty() {
        0.0
    } else {
        vals.iter().sum::<f64>() / vals.len() as f64
    }
}

fn threshold_row(thresholds: &[f64], want: f64) -> Result<usize> {
    thresholds
        .iter()
        .position(|&t| (t - want).abs() < 1e-9)
        .ok_or_else(|| Error::invalid(format!("IoU threshold {want} missing from evaluation grid")))
}

struct Scored {
    score: f64,
    area: f64,
    image: usize,
    rank: usize,
    tp: bool,
}

fn scored_order(a: &Scored, b: &Scored) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then_with(|| b.area.total_cmp(&a.area))
        .then_with(|| a.image.cmp(&b.image))
        .then_with(|| a.rank.cmp(&b.rank))
}

/// COCO-style evaluation over index-aligned per-image detections and ground truth.
///
/// Detections are expected to be post-NMS. For every threshold and class, images are
/// matched independently and the TP/FP flags pooled in global score order. Classes with no
/// ground truth in any image are left out of the class means. Precision, recall and F1 come
/// from pooled counts at `operating`.
pub fn coco_map(
    dets_by_image: &[Vec<Detection>],
    gts_by_image: &[Vec<Annotation>],
    num_classes: usize,
    thresholds: &[f64],
    operating: OperatingPoint,
) -> Result<EvalReport> {
    if dets_by_image.len() != gts_by_image.len() {
        return Err(Error::Shape(format!(
            "{} detection lists vs {} ground-truth lists",
            dets_by_image.len(),
            gts_by_image.len()
        )));
    }
    for d in dets_by_image.iter().flatten() {
        if d.class_id.0 >= num_classes {
            return Err(Error::invalid(format!(
                "detection class {} outside {num_classes} classes",
                d.class_id
            )));
        }
    }
    let row50 = threshold_row(thresholds, 0.5)?;
    let row75 = threshold_row(thresholds, 0.75)?;

    let mut gt_count = vec![0usize; num_classes];
    for g in gts_by_image.iter().flatten() {
        if g.class_id.0 >= num_classes {
            return Err(Error::invalid(format!("ground-truth class {} outside {num_classes}", g.class_id)));
        }
        gt_count[g.class_id.0] += 1;
    }

    let sorted: Vec<Vec<Detection>> = dets_by_image
        .iter()
        .map(|d| {
            let mut d = d.clone();
            d.sort_by(detection_order);
            d
        })
        .collect();

    let mut per_class_ap = Vec::with_capacity(thresholds.len());
    for &thr in thresholds {
        let mut pooled: Vec<Vec<Scored>> = (0..num_classes).map(|_| Vec::new()).collect();
        for (image, (dets, gts)) in sorted.iter().zip(gts_by_image).enumerate() {
            let m = match_detections(dets, gts, thr);
            for (rank, (d, &tp)) in dets.iter().zip(&m.tp).enumerate() {
                pooled[d.class_id.0].push(Scored {
                    score: d.score,
                    area: box_area(&d.bbox),
                    image,
                    rank,
                    tp,
                });
            }
        }
        let row = pooled
            .into_iter()
            .enumerate()
            .map(|(c, mut seq)| {
                (gt_count[c] > 0).then(|| {
                    seq.sort_by(scored_order);
                    let flags: Vec<bool> = seq.iter().map(|s| s.tp).collect();
                    average_precision(&flags, gt_count[c])
                })
            })
            .collect::<Vec<_>>();
        per_class_ap.push(row);
    }

    let means: Vec<f64> = per_class_ap.iter().map(|r| class_mean(r)).collect();
    let map5095 = if means.is_empty() {
        0.0
    } else {
        means.iter().sum::<f64>() / means.len() as f64
    };

    let (mut tp, mut fp, mut fn_count) = (0, 0, 0);
    for (dets, gts) in sorted.iter().zip(gts_by_image) {
        let kept: Vec<Detection> = dets
            .iter()
            .filter(|d| d.score >= operating.score_threshold)
            .copied()
            .collect();
        let m = match_detections(&kept, gts, operating.iou_threshold);
        tp += m.tp.iter().filter(|t| **t).count();
        fp += m.fp.iter().filter(|t| **t).count();
        fn_count += m.fn_count;
    }
    let (precision, recall, f1) = prf1(tp, fp, fn_count);

    Ok(EvalReport {
        thresholds: thresholds.to_vec(),
        map50: means[row50],
        map75: means[row75],
        map5095,
        per_class_ap,
        precision,
        recall,
        f1,
        tp,
        fp,
        fn_count,
        num_images: gts_by_image.len(),
    })
}
