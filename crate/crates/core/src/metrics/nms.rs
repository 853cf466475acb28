use std::cmp::Ordering;

use crate::geometry::{box_area, iou};
use crate::sample::Detection;

/// Descending score, then larger area, then original position.
pub fn detection_order(a: &Detection, b: &Detection) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then_with(|| box_area(&b.bbox).total_cmp(&box_area(&a.bbox)))
}

/// Stable sort by [`detection_order`].
pub fn sort_detections(dets: &mut [Detection]) {
    dets.sort_by(detection_order);
}

/// Class-wise greedy non-maximum suppression.
///
/// A detection survives iff its IoU with every already-kept detection of the same class is
/// below `iou_threshold`. Output is in descending score order.
pub fn nms(dets: &[Detection], iou_threshold: f64) -> Vec<Detection> {
    let mut sorted = dets.to_vec();
    sort_detections(&mut sorted);
    let mut kept: Vec<Detection> = Vec::with_capacity(sorted.len());
    for d in sorted {
        let suppressed = kept
            .iter()
            .any(|k| k.class_id == d.class_id && iou(&k.bbox, &d.bbox) >= iou_threshold);
        if !suppressed {
            kept.push(d);
        }
    }
    kept
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::BoundingBox;
    use crate::sample::ClassId;

    fn det(b: [f64; 4], c: usize, s: f64) -> Detection {
        Detection::new(BoundingBox::try_from(b).unwrap(), ClassId(c), s).unwrap()
    }

    #[test]
    fn single_and_duplicate() {
        let a = det([0.0, 0.0, 10.0, 10.0], 0, 0.9);
        assert_eq!(nms(&[a], 0.5), vec![a]);
        let b = det([0.0, 0.0, 10.0, 10.0], 0, 0.8);
        assert_eq!(nms(&[b, a], 0.5), vec![a]);
    }

    #[test]
    fn chain_keeps_ends() {
        // 1-D chain: widths 10, offsets chosen for iou(A,B) = iou(B,C) = 0.6
        // overlap o with union 20 - o: o / (20 - o) = 0.6 -> o = 7.5
        let a = det([0.0, 0.0, 10.0, 1.0], 0, 0.9);
        let b = det([2.5, 0.0, 12.5, 1.0], 0, 0.8);
        let c = det([5.0, 0.0, 15.0, 1.0], 0, 0.7);
        assert!((iou(&a.bbox, &b.bbox) - 0.6).abs() < 1e-12);
        assert!((iou(&b.bbox, &c.bbox) - 0.6).abs() < 1e-12);
        // A and C overlap 5 of 15 -> 1/3, below the threshold
        assert!(iou(&a.bbox, &c.bbox) < 0.5);
        assert_eq!(nms(&[c, a, b], 0.5), vec![a, c]);
    }

    #[test]
    fn classes_do_not_suppress_each_other() {
        let a = det([0.0, 0.0, 10.0, 10.0], 0, 0.9);
        let b = det([0.0, 0.0, 10.0, 10.0], 1, 0.8);
        assert_eq!(nms(&[a, b], 0.5).len(), 2);
    }

    #[test]
    fn ties_prefer_larger_area_then_input_order() {
        let small = det([0.0, 0.0, 5.0, 5.0], 0, 0.5);
        let large = det([20.0, 20.0, 30.0, 30.0], 0, 0.5);
        assert_eq!(nms(&[small, large], 0.5), vec![large, small]);
        let a = det([0.0, 0.0, 5.0, 5.0], 0, 0.5);
        let b = det([10.0, 10.0, 15.0, 15.0], 0, 0.5);
        assert_eq!(nms(&[b, a], 0.5), vec![b, a]);
    }

    #[test]
    fn idempotent() {
        let dets = vec![
            det([0.0, 0.0, 10.0, 10.0], 0, 0.9),
            det([1.0, 1.0, 11.0, 11.0], 0, 0.85),
            det([30.0, 30.0, 40.0, 40.0], 0, 0.3),
            det([2.0, 0.0, 12.0, 10.0], 1, 0.6),
        ];
        let once = nms(&dets, 0.5);
        assert_eq!(nms(&once, 0.5), once);
    }
}
