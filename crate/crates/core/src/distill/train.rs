//! Teacher and student training loops with early stopping on validation mAP@50.

use std::borrow::Cow;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamConfig, AdamState};
use super::{cosine_distance_with_grad, student_loss};
use crate::detector::{assign_targets, detection_loss_with_grad, DetectorConfig, DetectorModel, ParamStore, Role};
use crate::error::{Error, Result};
use crate::evaluate::{evaluate_model, EvalSettings};
use crate::preprocess::{dihedral, DIHEDRAL_COUNT};
use crate::sample::{Dataset, ImagePlane, ImageSample};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DistillConfig {
    pub alpha: f64,
    pub lr: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub weight_decay: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Train on all eight flips/rotations of every training sample each epoch.
    pub augment: bool,
}

impl Default for DistillConfig {
    fn default() -> Self {
        Self {
            alpha: 0.0,
            lr: 1e-4,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            weight_decay: 0.0,
            max_epochs: 100,
            patience: 8,
            batch_size: 8,
            seed: 0,
            augment: false,
        }
    }
}

impl DistillConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::invalid(format!("alpha {} outside [0, 1]", self.alpha)));
        }
        if self.patience == 0 || self.max_epochs == 0 || self.batch_size == 0 {
            return Err(Error::invalid("patience, max_epochs and batch_size must be >= 1"));
        }
        if !(self.lr > 0.0) {
            return Err(Error::invalid("lr must be positive"));
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            eps: self.adam_eps,
            weight_decay: self.weight_decay,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 0 is the untrained initialization.
    pub epoch: usize,
    pub train_loss: f64,
    pub det_term: f64,
    /// Mean cosine distance to the teacher; absent when no teacher was consulted.
    pub distill_term: Option<f64>,
    pub val_map50: f64,
    pub epochs_since_best: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainLog {
    pub records: Vec<EpochRecord>,
    pub best_epoch: usize,
}

impl TrainLog {
    pub fn best(&self) -> Option<&EpochRecord> {
        self.records.iter().find(|r| r.epoch == self.best_epoch)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,det_term,distill_term,val_map50,epochs_since_best\n");
        for r in &self.records {
            let distill = r.distill_term.map(|d| d.to_string()).unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                r.epoch, r.train_loss, r.det_term, distill, r.val_map50, r.epochs_since_best
            );
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopDecision {
    Continue,
    Stop,
}

/// Stops once the latest epoch is `patience` or more epochs past the best one.
pub fn early_stop_check(log: &TrainLog, patience: usize) -> StopDecision {
    match log.records.last() {
        Some(r) if r.epochs_since_best >= patience => StopDecision::Stop,
        _ => StopDecision::Continue,
    }
}

/// Training and validation data. Validation drives early stopping.
#[derive(Debug, Clone, Copy)]
pub struct TrainSplits<'a> {
    pub train: &'a Dataset,
    pub val: &'a Dataset,
}

struct Teacher<'a> {
    /// Teacher embedding per training view, computed once since the teacher is frozen.
    embeddings: Vec<Vec<Vec<f64>>>,
    _model: &'a DetectorModel,
}

/// A training sample index and the flip/rotation applied to it.
type View = (usize, usize);

fn views_per_sample(cfg: &DistillConfig) -> usize {
    if cfg.augment {
        DIHEDRAL_COUNT
    } else {
        1
    }
}

fn view_of<'s>(data: &'s Dataset, (i, k): View) -> Result<Cow<'s, ImageSample>> {
    let s = &data.samples()[i];
    Ok(if k == 0 { Cow::Borrowed(s) } else { Cow::Owned(dihedral(s, k)?) })
}

fn planes_for<'s>(role: Role, s: &'s ImageSample) -> Result<Vec<&'s ImagePlane>> {
    if role == Role::Teacher {
        s.teacher_planes()
    } else {
        Ok(s.student_planes())
    }
}

struct BatchStats {
    loss: f64,
    det: f64,
    distill: f64,
}

/// Loss and parameter gradient over a set of training views (mean-reduced).
fn batch_gradient(
    model: &DetectorModel,
    data: &Dataset,
    indices: &[View],
    alpha: f64,
    teacher: Option<&Teacher<'_>>,
    need_grad: bool,
) -> Result<(BatchStats, Option<ParamStore>)> {
    let n = indices.len() as f64;
    let mut grads = need_grad.then(|| model.params().zeros_like());
    let mut stats = BatchStats {
        loss: 0.0,
        det: 0.0,
        distill: 0.0,
    };
    for &(i, k) in indices {
        let s = view_of(data, (i, k))?;
        let pass = model.forward_train(&planes_for(model.role(), &s)?)?;
        let targets = assign_targets(s.annotations(), model.config());
        let (terms, mut d_pred) = detection_loss_with_grad(&pass.prediction, &targets)?;
        let det = terms.total();
        let mut distance = 0.0;
        let mut d_embed = None;
        if let Some(t) = teacher {
            let (d, g) = cosine_distance_with_grad(&t.embeddings[i][k], pass.embedding.values())?;
            distance = d;
            d_embed = Some(g.into_iter().map(|v| v * alpha / n).collect::<Vec<f64>>());
        }
        if !det.is_finite() || !distance.is_finite() {
            return Err(Error::Training(format!("non-finite loss on sample {}", s.id())));
        }
        stats.det += det / n;
        stats.distill += distance / n;
        stats.loss += student_loss(det, distance, alpha) / n;
        if let Some(acc) = grads.as_mut() {
            let scale = (1.0 - alpha) / n;
            d_pred.iter_mut().for_each(|g| *g *= scale);
            let g = model.backward(&pass, &d_pred, d_embed.as_deref())?;
            acc.add_scaled(&g, 1.0);
        }
    }
    Ok((stats, grads))
}

fn fit(
    mut model: DetectorModel,
    splits: TrainSplits<'_>,
    cfg: &DistillConfig,
    alpha: f64,
    teacher: Option<Teacher<'_>>,
    eval: &EvalSettings,
) -> Result<(DetectorModel, TrainLog)> {
    let train = splits.train;
    if train.is_empty() {
        return Err(Error::invalid("empty training split"));
    }
    let views = views_per_sample(cfg);
    let all: Vec<View> = (0..train.len()).flat_map(|i| (0..views).map(move |k| (i, k))).collect();
    let mut log = TrainLog::default();
    let mut best_params = model.params().clone();
    let mut best_metric = f64::NEG_INFINITY;
    let mut adam = AdamState::new(model.params());
    let adam_cfg = cfg.adam();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);

    for epoch in 0..=cfg.max_epochs {
        let stats = if epoch == 0 {
            batch_gradient(&model, train, &all, alpha, teacher.as_ref(), false)?.0
        } else {
            let mut order = all.clone();
            order.shuffle(&mut rng);
            let mut sum = BatchStats {
                loss: 0.0,
                det: 0.0,
                distill: 0.0,
            };
            for batch in order.chunks(cfg.batch_size) {
                let (st, grads) = batch_gradient(&model, train, batch, alpha, teacher.as_ref(), true)?;
                let w = batch.len() as f64 / all.len() as f64;
                sum.loss += st.loss * w;
                sum.det += st.det * w;
                sum.distill += st.distill * w;
                adam_step(model.params_mut(), &grads.expect("requested"), &mut adam, &adam_cfg)?;
            }
            sum
        };
        let val_map50 = evaluate_model(&model, splits.val, eval)?.map50;
        let since = if val_map50 > best_metric {
            best_metric = val_map50;
            best_params = model.params().clone();
            log.best_epoch = epoch;
            0
        } else {
            epoch - log.best_epoch
        };
        log.records.push(EpochRecord {
            epoch,
            train_loss: stats.loss,
            det_term: stats.det,
            distill_term: teacher.is_some().then_some(stats.distill),
            val_map50,
            epochs_since_best: since,
        });
        if early_stop_check(&log, cfg.patience) == StopDecision::Stop {
            break;
        }
    }
    *model.params_mut() = best_params;
    Ok((model, log))
}

fn check_dims(data: &Dataset, input_size: usize) -> Result<()> {
    if let Some(s) = data
        .samples()
        .iter()
        .find(|s| s.width() != input_size || s.height() != input_size)
    {
        return Err(Error::Shape(format!(
            "sample {} is {}x{}, model input is {input_size}x{input_size}",
            s.id(),
            s.width(),
            s.height()
        )));
    }
    Ok(())
}

/// Trains a 4-plane teacher on detection loss alone; returns the best-validation checkpoint.
pub fn train_teacher(
    splits: TrainSplits<'_>,
    input_size: usize,
    cfg: &DistillConfig,
    eval: &EvalSettings,
) -> Result<(DetectorModel, TrainLog)> {
    cfg.validate()?;
    for data in [splits.train, splits.val] {
        check_dims(data, input_size)?;
        if let Some(s) = data.samples().iter().find(|s| s.privileged().is_none()) {
            return Err(Error::MissingPrivileged(s.id().to_string()));
        }
    }
    let config = DetectorConfig::teacher(splits.train.num_classes(), input_size)?;
    let model = DetectorModel::init(config, Role::Teacher, cfg.seed)?;
    fit(model, splits, cfg, 0.0, None, eval)
}

/// Trains a 3-plane student with `(1 - alpha) * detection + alpha * cosine distance to the
/// frozen teacher's embedding`. At `alpha == 0` the teacher is never consulted and the
/// result is the baseline.
pub fn train_student(
    splits: TrainSplits<'_>,
    teacher: &DetectorModel,
    cfg: &DistillConfig,
    eval: &EvalSettings,
) -> Result<(DetectorModel, TrainLog)> {
    cfg.validate()?;
    if teacher.role() != Role::Teacher {
        return Err(Error::invalid("distillation source must be a teacher model"));
    }
    let input_size = teacher.config().input_size;
    let config = DetectorConfig::student(teacher.config().num_classes, input_size)?;
    if config.num_classes != splits.train.num_classes() {
        return Err(Error::invalid(format!(
            "teacher has {} classes, data has {}",
            config.num_classes,
            splits.train.num_classes()
        )));
    }
    check_dims(splits.train, input_size)?;
    check_dims(splits.val, input_size)?;
    let role = if cfg.alpha == 0.0 { Role::Baseline } else { Role::Student };
    let model = DetectorModel::init(config, role, cfg.seed)?;
    let teacher_state = if cfg.alpha > 0.0 {
        let views = views_per_sample(cfg);
        let embeddings = (0..splits.train.len())
            .map(|i| {
                (0..views)
                    .map(|k| {
                        let s = view_of(splits.train, (i, k))?;
                        Ok(teacher.backbone_embedding(&s.teacher_planes()?)?.0)
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        if embeddings.iter().flatten().any(|e| e.len() != crate::detector::EMBED_DIM) {
            return Err(Error::Shape("teacher embedding width differs from student".into()));
        }
        Some(Teacher {
            embeddings,
            _model: teacher,
        })
    } else {
        None
    };
    fit(model, splits, cfg, cfg.alpha, teacher_state, eval)
}

/// Teacher-free training: exactly [`train_student`] at `alpha = 0`, without needing a teacher.
pub fn train_baseline(
    splits: TrainSplits<'_>,
    input_size: usize,
    cfg: &DistillConfig,
    eval: &EvalSettings,
) -> Result<(DetectorModel, TrainLog)> {
    let cfg = DistillConfig { alpha: 0.0, ..*cfg };
    cfg.validate()?;
    check_dims(splits.train, input_size)?;
    check_dims(splits.val, input_size)?;
    let config = DetectorConfig::student(splits.train.num_classes(), input_size)?;
    let model = DetectorModel::init(config, Role::Baseline, cfg.seed)?;
    fit(model, splits, &cfg, 0.0, None, eval)
}
