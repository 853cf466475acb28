//! Random micro-instances and finite-difference checks of the training gradients.

use lupi::detector::{
    assign_targets, detection_loss, detection_loss_with_grad, DetectorConfig, DetectorModel, Role, EMBED_DIM,
};
use lupi::distill::{cosine_distance_with_grad, student_loss};
use lupi::{Annotation, BoundingBox, ClassId, ImagePlane, ImageSample};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{finite_diff_grad, rel_err};

pub const STEP: f64 = 1e-4;
/// Parameter coordinates probed per tensor.
pub const PROBES_PER_TENSOR: usize = 12;

pub struct MicroInstance {
    pub model: DetectorModel,
    pub sample: ImageSample,
    pub teacher_embedding: Vec<f64>,
    pub alpha: f64,
}

/// A small random student (16 or 32 px input, 1 to 3 classes) with random biases, a random
/// RGB sample with up to three boxes, a random teacher embedding and a random alpha.
pub fn micro_instance(seed: u64) -> MicroInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let size = if rng.gen_bool(0.5) { 16 } else { 32 };
    let num_classes = rng.gen_range(1..=3);
    let config = DetectorConfig::student(num_classes, size).unwrap();
    let mut model = DetectorModel::init(config, Role::Student, seed).unwrap();
    for t in model.params_mut().tensors_mut() {
        if t.name.ends_with(".bias") {
            t.data.iter_mut().for_each(|b| *b += rng.gen_range(-0.2..0.2));
        }
    }
    let plane = |rng: &mut ChaCha8Rng| {
        ImagePlane::new(size, size, (0..size * size).map(|_| rng.gen_range(0.0..1.0)).collect()).unwrap()
    };
    let rgb = [plane(&mut rng), plane(&mut rng), plane(&mut rng)];
    let n_boxes = rng.gen_range(0..=3);
    let s = size as f64;
    let anns = (0..n_boxes)
        .map(|_| {
            let w = rng.gen_range(2.0..s / 2.0);
            let h = rng.gen_range(2.0..s / 2.0);
            let x = rng.gen_range(0.0..s - w);
            let y = rng.gen_range(0.0..s - h);
            Annotation::new(BoundingBox::from_xywh(x, y, w, h).unwrap(), ClassId(rng.gen_range(0..num_classes)))
        })
        .collect();
    let sample = ImageSample::new("micro", rgb, None, anns).unwrap();
    let teacher_embedding = (0..EMBED_DIM).map(|_| rng.gen_range(0.0..1.0)).collect();
    MicroInstance {
        model,
        sample,
        teacher_embedding,
        alpha: rng.gen_range(0.0..1.0),
    }
}

fn flat(model: &DetectorModel) -> Vec<f64> {
    model.params().tensors().iter().flat_map(|t| t.data.iter().copied()).collect()
}

fn with_flat(model: &DetectorModel, p: &[f64]) -> DetectorModel {
    let mut m = model.clone();
    let mut i = 0;
    for t in m.params_mut().tensors_mut() {
        let n = t.data.len();
        t.data.copy_from_slice(&p[i..i + n]);
        i += n;
    }
    m
}

fn probe_indices(model: &DetectorModel, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut out = Vec::new();
    let mut offset = 0;
    for t in model.params().tensors() {
        let n = t.data.len();
        if n <= PROBES_PER_TENSOR {
            out.extend(offset..offset + n);
        } else {
            out.extend((0..PROBES_PER_TENSOR).map(|_| offset + rng.gen_range(0..n)));
        }
        offset += n;
    }
    out
}

/// Which objective to differentiate.
#[derive(Clone, Copy, Debug)]
pub enum Objective {
    Detection,
    Combined,
}

fn objective_value(inst: &MicroInstance, model: &DetectorModel, which: Objective) -> f64 {
    let planes = inst.sample.student_planes();
    let (pred, emb) = model.forward(&planes).unwrap();
    let targets = assign_targets(inst.sample.annotations(), model.config());
    let det = detection_loss(&pred, &targets).unwrap();
    match which {
        Objective::Detection => det,
        Objective::Combined => {
            let (d, _) = cosine_distance_with_grad(&inst.teacher_embedding, emb.values()).unwrap();
            student_loss(det, d, inst.alpha)
        }
    }
}

fn analytic(inst: &MicroInstance, which: Objective) -> Vec<f64> {
    let planes = inst.sample.student_planes();
    let pass = inst.model.forward_train(&planes).unwrap();
    let targets = assign_targets(inst.sample.annotations(), inst.model.config());
    let (_, d_pred) = detection_loss_with_grad(&pass.prediction, &targets).unwrap();
    let grads = match which {
        Objective::Detection => inst.model.backward(&pass, &d_pred, None).unwrap(),
        Objective::Combined => {
            let a = inst.alpha;
            let (_, d_emb) = cosine_distance_with_grad(&inst.teacher_embedding, pass.embedding.values()).unwrap();
            let d_pred: Vec<f64> = d_pred.iter().map(|g| (1.0 - a) * g).collect();
            let d_emb: Vec<f64> = d_emb.iter().map(|g| a * g).collect();
            inst.model.backward(&pass, &d_pred, Some(&d_emb)).unwrap()
        }
    };
    grads.tensors().iter().flat_map(|t| t.data.iter().copied()).collect()
}

/// Largest relative error between backprop and central differences over the probed
/// parameter coordinates of one instance, and the largest probed gradient magnitude.
pub fn max_param_rel_err(seed: u64, which: Objective) -> (f64, f64) {
    let inst = micro_instance(seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let idx = probe_indices(&inst.model, &mut rng);
    let base = flat(&inst.model);
    let ana = analytic(&inst, which);
    let num = finite_diff_grad(|p| objective_value(&inst, &with_flat(&inst.model, p), which), &base, &idx, STEP);
    let err = idx.iter().zip(&num).map(|(&i, &n)| rel_err(ana[i], n)).fold(0.0, f64::max);
    let scale = idx.iter().map(|&i| ana[i].abs()).fold(0.0, f64::max);
    (err, scale)
}

/// Largest relative error of the detection-loss gradient with respect to every raw
/// prediction value of a random prediction.
pub fn max_prediction_rel_err(seed: u64) -> f64 {
    let inst = micro_instance(seed);
    let (pred, _) = inst.model.forward(&inst.sample.student_planes()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xbeef);
    let values: Vec<f64> = pred.values().iter().map(|_| rng.gen_range(-3.0..3.0)).collect();
    let targets = assign_targets(inst.sample.annotations(), inst.model.config());
    let make = |v: &[f64]| lupi::detector::RawPrediction::new(pred.grid(), pred.channels(), v.to_vec()).unwrap();
    let (_, ana) = detection_loss_with_grad(&make(&values), &targets).unwrap();
    let idx: Vec<usize> = (0..values.len()).collect();
    let num = finite_diff_grad(|v| detection_loss(&make(v), &targets).unwrap(), &values, &idx, STEP);
    ana.iter().zip(&num).map(|(&a, &n)| rel_err(a, n)).fold(0.0, f64::max)
}

/// Largest relative error of the cosine-distance gradient for random embedding pairs.
pub fn max_cosine_rel_err(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(2..=EMBED_DIM);
    let t: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let s: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let (_, ana) = cosine_distance_with_grad(&t, &s).unwrap();
    let idx: Vec<usize> = (0..n).collect();
    let num = finite_diff_grad(|v| cosine_distance_with_grad(&t, v).unwrap().0, &s, &idx, STEP);
    ana.iter().zip(&num).map(|(&a, &n)| rel_err(a, n)).fold(0.0, f64::max)
}
