//! Feature distillation from a privileged teacher: the cosine-distance term, the mixed
//! student objective, Adam, and the training loops.

mod adam;
mod train;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use train::{
    early_stop_check, train_baseline, train_student, train_teacher, DistillConfig, EpochRecord,
    StopDecision, TrainLog, TrainSplits,
};

use crate::detector::Embedding;
use crate::error::{Error, Result};

/// Norm below which an embedding is treated as zero.
pub const MIN_NORM: f64 = 1e-12;

/// `1 - cos(u, v)`, clamped to [0, 2]. Returns 1 when either vector is (numerically) zero.
pub fn cosine_distance(u: &Embedding, v: &Embedding) -> Result<f64> {
    Ok(cosine_distance_with_grad(u.values(), v.values())?.0)
}

/// Cosine distance and its gradient with respect to the second argument.
///
/// The first argument is the (constant) teacher embedding, the second the student's.
pub fn cosine_distance_with_grad(teacher: &[f64], student: &[f64]) -> Result<(f64, Vec<f64>)> {
    if teacher.len() != student.len() {
        return Err(Error::Shape(format!(
            "embedding lengths differ: {} vs {}",
            teacher.len(),
            student.len()
        )));
    }
    let dot: f64 = teacher.iter().zip(student).map(|(a, b)| a * b).sum();
    let nt = teacher.iter().map(|a| a * a).sum::<f64>().sqrt();
    let ns = student.iter().map(|a| a * a).sum::<f64>().sqrt();
    if nt < MIN_NORM || ns < MIN_NORM {
        return Ok((1.0, vec![0.0; student.len()]));
    }
    let cos = dot / (nt * ns);
    let dist = (1.0 - cos).clamp(0.0, 2.0);
    // d/ds [1 - t.s / (|t||s|)] = -t / (|t||s|) + (t.s) s / (|t||s|^3)
    let grad = teacher
        .iter()
        .zip(student)
        .map(|(t, s)| -t / (nt * ns) + cos * s / (ns * ns))
        .collect();
    Ok((dist, grad))
}

/// `(1 - alpha) * det_loss + alpha * distance`.
pub fn student_loss(det_loss: f64, distance: f64, alpha: f64) -> f64 {
    (1.0 - alpha) * det_loss + alpha * distance
}

#[cfg(test)]
mod tests {
    use super::*;

    fn e(v: &[f64]) -> Embedding {
        Embedding(v.to_vec())
    }

    #[test]
    fn cosine_examples() {
        let u = e(&[0.3, -1.2, 2.0]);
        assert!(cosine_distance(&u, &u).unwrap().abs() < 1e-12);
        let neg = e(&[-0.3, 1.2, -2.0]);
        assert!((cosine_distance(&u, &neg).unwrap() - 2.0).abs() < 1e-12);
        assert_eq!(cosine_distance(&e(&[1.0, 0.0]), &e(&[0.0, 1.0])).unwrap(), 1.0);
        assert!(cosine_distance(&e(&[1.0]), &e(&[1.0, 2.0])).is_err());
    }

    #[test]
    fn zero_norm_is_maximal_ignorance() {
        let (d, g) = cosine_distance_with_grad(&[1.0, 2.0], &[0.0, 0.0]).unwrap();
        assert_eq!(d, 1.0);
        assert_eq!(g, vec![0.0, 0.0]);
    }

    #[test]
    fn student_loss_examples() {
        assert_eq!(student_loss(0.7, 0.3, 0.0), 0.7);
        assert_eq!(student_loss(0.7, 0.3, 1.0), 0.3);
        assert!((student_loss(0.8, 0.4, 0.25) - 0.7).abs() < 1e-15);
    }
}
