//! Greedy NMS and COCO-style scoring on a handful of hand-written boxes.

use lupi::metrics::{average_precision, coco_map, coco_thresholds, nms, OperatingPoint};
use lupi::{Annotation, BoundingBox, ClassId, Detection};

fn det(b: [f64; 4], c: usize, score: f64) -> Detection {
    Detection::new(BoundingBox::try_from(b).unwrap(), ClassId(c), score).unwrap()
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let raw = vec![
        det([10.0, 10.0, 30.0, 30.0], 0, 0.9),
        det([12.0, 11.0, 31.0, 30.0], 0, 0.7),
        det([40.0, 40.0, 52.0, 50.0], 1, 0.8),
        det([41.0, 40.0, 52.0, 51.0], 0, 0.6),
        det([0.0, 50.0, 8.0, 60.0], 1, 0.3),
    ];
    let kept = nms(&raw, 0.5);
    println!("nms kept {} of {}", kept.len(), raw.len());
    for d in &kept {
        println!("  class {} score {:.2} {:?}", d.class_id, d.score, d.bbox.to_array());
    }

    let gts = vec![
        Annotation::new(BoundingBox::new(10.0, 10.0, 30.0, 30.0)?, ClassId(0)),
        Annotation::new(BoundingBox::new(40.0, 40.0, 52.0, 52.0)?, ClassId(1)),
    ];
    let report = coco_map(&[kept], &[gts], 2, &coco_thresholds(), OperatingPoint::default())?;
    println!(
        "mAP@50 {:.4}  mAP@75 {:.4}  mAP@50-95 {:.4}  P {:.3} R {:.3} F1 {:.3}",
        report.map50, report.map75, report.map5095, report.precision, report.recall, report.f1
    );
    println!("AP of [TP, FP] with 2 objects: {:.5}", average_precision(&[true, false], 2));
    Ok(())
}
