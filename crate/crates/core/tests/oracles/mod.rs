//! Brute-force reference implementations, used only by tests.
//!
//! Nothing here calls production NMS, matching, AP or gradient code; the only shared pieces
//! are the plain data types.

#![allow(dead_code)]

use lupi::{Annotation, BoundingBox, Detection};

pub const NMS_CAP: usize = 15;
pub const AP_CAP: usize = 50;

fn area(b: &BoundingBox) -> f64 {
    (b.x_max() - b.x_min()) * (b.y_max() - b.y_min())
}

pub fn oracle_iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let w = a.x_max().min(b.x_max()) - a.x_min().max(b.x_min());
    let h = a.y_max().min(b.y_max()) - a.y_min().max(b.y_min());
    if w <= 0.0 || h <= 0.0 {
        return 0.0;
    }
    let inter = w * h;
    let union = area(a) + area(b) - inter;
    if a == b {
        1.0
    } else {
        (inter / union).min(1.0)
    }
}

/// Whether `a` comes before `b`: higher score, then larger area, then earlier input index.
fn precedes(a: (usize, &Detection), b: (usize, &Detection)) -> bool {
    if a.1.score != b.1.score {
        return a.1.score > b.1.score;
    }
    if area(&a.1.bbox) != area(&b.1.bbox) {
        return area(&a.1.bbox) > area(&b.1.bbox);
    }
    a.0 < b.0
}

/// Greedy NMS by literal double loop: repeatedly take the best remaining detection, keep it
/// unless a kept same-class box overlaps it at or above the threshold.
pub fn oracle_nms(dets: &[Detection], threshold: f64) -> Result<Vec<Detection>, String> {
    if dets.len() > NMS_CAP {
        return Err(format!("oracle_nms handles at most {NMS_CAP} boxes, got {}", dets.len()));
    }
    let mut remaining: Vec<usize> = (0..dets.len()).collect();
    let mut kept: Vec<Detection> = Vec::new();
    while !remaining.is_empty() {
        let mut best = 0;
        for i in 1..remaining.len() {
            if precedes((remaining[i], &dets[remaining[i]]), (remaining[best], &dets[remaining[best]])) {
                best = i;
            }
        }
        let d = dets[remaining.remove(best)];
        let mut suppressed = false;
        for k in &kept {
            if k.class_id == d.class_id && oracle_iou(&k.bbox, &d.bbox) >= threshold {
                suppressed = true;
            }
        }
        if !suppressed {
            kept.push(d);
        }
    }
    Ok(kept)
}

/// 101-point AP from the full precision/recall staircase: for each recall level, the
/// maximum precision over every rank whose recall reaches it.
pub fn oracle_ap(matches: &[bool], num_gt: usize) -> Result<f64, String> {
    if matches.len() > AP_CAP {
        return Err(format!("oracle_ap handles at most {AP_CAP} detections"));
    }
    if num_gt == 0 {
        return Ok(0.0);
    }
    // (tp count, precision) after each rank
    let mut table = Vec::new();
    let mut tp = 0usize;
    for (i, &m) in matches.iter().enumerate() {
        if m {
            tp += 1;
        }
        table.push((tp, tp as f64 / (i + 1) as f64));
    }
    let mut total = 0.0;
    for r in 0..=100usize {
        let mut best = 0.0f64;
        for &(t, p) in &table {
            if t * 100 >= r * num_gt && p > best {
                best = p;
            }
        }
        total += best;
    }
    Ok(total / 101.0)
}

/// Per-threshold, per-class AP of index-aligned detections and ground truth, scored by
/// exhaustive greedy matching per image and pooled ranking. `None` marks classes without
/// ground truth.
pub fn oracle_coco(
    dets: &[Vec<Detection>],
    gts: &[Vec<Annotation>],
    num_classes: usize,
    thresholds: &[f64],
) -> Vec<Vec<Option<f64>>> {
    let mut out = Vec::new();
    for &thr in thresholds {
        let mut row = Vec::new();
        for c in 0..num_classes {
            let num_gt: usize = gts.iter().flatten().filter(|g| g.class_id.0 == c).count();
            if num_gt == 0 {
                row.push(None);
                continue;
            }
            // (score, area, image, rank, is_tp)
            let mut pooled: Vec<(f64, f64, usize, usize, bool)> = Vec::new();
            for (img, (ds, gs)) in dets.iter().zip(gts).enumerate() {
                let mut order: Vec<usize> = (0..ds.len()).collect();
                // bubble sort into score order, same tie rules as NMS
                for i in 0..order.len() {
                    for j in 0..order.len() - 1 - i {
                        if precedes((order[j + 1], &ds[order[j + 1]]), (order[j], &ds[order[j]])) {
                            order.swap(j, j + 1);
                        }
                    }
                }
                let mut used = vec![false; gs.len()];
                for (rank, &di) in order.iter().enumerate() {
                    let d = &ds[di];
                    let mut best: Option<usize> = None;
                    let mut best_iou = 0.0;
                    for (gi, g) in gs.iter().enumerate() {
                        if used[gi] || g.class_id != d.class_id {
                            continue;
                        }
                        let o = oracle_iou(&d.bbox, &g.bbox);
                        if o >= thr && (best.is_none() || o > best_iou) {
                            best = Some(gi);
                            best_iou = o;
                        }
                    }
                    if let Some(gi) = best {
                        used[gi] = true;
                    }
                    if d.class_id.0 == c {
                        pooled.push((d.score, area(&d.bbox), img, rank, best.is_some()));
                    }
                }
            }
            pooled.sort_by(|a, b| {
                b.0.partial_cmp(&a.0)
                    .unwrap()
                    .then(b.1.partial_cmp(&a.1).unwrap())
                    .then(a.2.cmp(&b.2))
                    .then(a.3.cmp(&b.3))
            });
            let flags: Vec<bool> = pooled.iter().map(|p| p.4).collect();
            row.push(Some(oracle_ap(&flags, num_gt).expect("fixture is small")));
        }
        out.push(row);
    }
    out
}

/// Central differences `(f(p + h e_i) - f(p - h e_i)) / 2h` for the listed coordinates.
pub fn finite_diff_grad(
    mut loss: impl FnMut(&[f64]) -> f64,
    params: &[f64],
    indices: &[usize],
    step: f64,
) -> Vec<f64> {
    assert!(step > 0.0);
    let mut p = params.to_vec();
    indices
        .iter()
        .map(|&i| {
            let orig = p[i];
            p[i] = orig + step;
            let up = loss(&p);
            p[i] = orig - step;
            let down = loss(&p);
            p[i] = orig;
            (up - down) / (2.0 * step)
        })
        .collect()
}

/// Relative error with a small absolute floor so that two near-zero values compare equal.
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

fn det(b: [f64; 4], c: usize, s: f64) -> Detection {
    Detection::new(BoundingBox::try_from(b).unwrap(), lupi::ClassId(c), s).unwrap()
}

fn gt(b: [f64; 4], c: usize) -> Annotation {
    Annotation::new(BoundingBox::try_from(b).unwrap(), lupi::ClassId(c))
}

/// Three hand-built images over 3 classes: a perfect hit, a near miss that only matches
/// at low IoU, a duplicate, a wrong-class box, a missed object and an empty image with a
/// false positive. Class 2 has no ground truth.
pub fn toy_fixture() -> (Vec<Vec<Detection>>, Vec<Vec<Annotation>>) {
    let gts = vec![
        vec![gt([0.0, 0.0, 20.0, 20.0], 0), gt([30.0, 30.0, 50.0, 40.0], 1)],
        vec![gt([10.0, 10.0, 30.0, 30.0], 0), gt([40.0, 0.0, 60.0, 12.0], 0)],
        vec![],
    ];
    let dets = vec![
        vec![
            det([0.0, 0.0, 20.0, 20.0], 0, 0.95),
            det([1.0, 1.0, 21.0, 21.0], 0, 0.60),
            det([30.0, 30.0, 46.0, 40.0], 1, 0.80),
            det([30.0, 30.0, 50.0, 40.0], 2, 0.70),
        ],
        vec![
            det([14.0, 14.0, 34.0, 34.0], 0, 0.90),
            det([44.0, 2.0, 60.0, 14.0], 0, 0.50),
        ],
        vec![det([5.0, 5.0, 15.0, 15.0], 1, 0.85), det([0.0, 40.0, 8.0, 48.0], 0, 0.60)],
    ];
    (dets, gts)
}

pub mod gradcheck;
