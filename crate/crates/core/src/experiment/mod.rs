//! Batch commands behind the `lupi` binary: generate, prepare, train, sweep, evaluate,
//! cross-evaluate and report. Every command is a plain function so it can be driven from
//! tests and examples as well as the CLI.
//!
//! A dataset directory holds `annotations.json` (COCO plus split tags), `images/*.ppm`, and,
//! once prepared, `masks/<id>_priv.pgm`.

mod config;
pub mod svg;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

pub use config::{DataSection, ExperimentConfig, ModelSection, SweepSection};

use crate::detector::{read_checkpoint, write_checkpoint, DetectorModel, Role};
use crate::distill::{train_baseline, train_student, train_teacher, DistillConfig, TrainLog, TrainSplits};
use crate::error::{Error, Result};
use crate::evaluate::{evaluate_model, predict_dataset};
use crate::ingest::{self, CocoAnnotation, CocoImage, CocoManifest};
use crate::metrics::report::{predictions_to_json, report_to_csv, report_to_json, PredictionRecord};
use crate::metrics::EvalReport;
use crate::preprocess::{resize_sample, tile_image};
use crate::privileged::attach_privileged_channel;
use crate::sample::{Dataset, Split};
use crate::synth::{generate_dataset, write_dataset};

pub const MANIFEST_FILE: &str = "annotations.json";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const PARTIAL_FILE: &str = "PARTIAL";
pub const SUMMARY_HEADER: &str = "role,alpha,seed,map50,map75,map5095,precision,recall,f1";

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Creates `dir` itself but insists that its parent already exists.
fn create_out_dir(dir: &Path) -> Result<()> {
    if let Some(parent) = dir.parent().filter(|p| !p.as_os_str().is_empty()) {
        if !parent.is_dir() {
            return Err(Error::io(
                parent,
                std::io::Error::new(std::io::ErrorKind::NotFound, "parent directory does not exist"),
            ));
        }
    }
    create_dir(dir)
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Writes the synthetic source dataset described by `data.synth` into `out_dir`.
pub fn cmd_generate(cfg: &ExperimentConfig, out_dir: &Path) -> Result<CocoManifest> {
    let synth = cfg
        .data
        .synth
        .as_ref()
        .ok_or_else(|| Error::Usage("generate needs a data.synth section".into()))?;
    let out = generate_dataset(synth)?;
    create_out_dir(out_dir)?;
    write_dataset(&out, out_dir, false)?;
    Ok(out.manifest)
}

/// Tiles (when configured), resizes to the model input and renders privileged masks.
///
/// Writes a new dataset directory whose manifest lists the prepared samples; every image gets a
/// mask file, and tiles without annotations are kept as negatives. Splits are inherited from
/// the source image, so tiles of one image never straddle splits.
pub fn cmd_prepare(cfg: &ExperimentConfig, in_dir: &Path, out_dir: &Path) -> Result<CocoManifest> {
    let manifest = ingest::read_manifest(&in_dir.join(MANIFEST_FILE))?;
    let data = ingest::load_dataset(&manifest, &in_dir.join("images"))?;
    let mut categories = manifest.categories.clone();
    categories.sort_by_key(|c| c.id);
    let num_classes = categories.len();
    let size = cfg.data.resize;

    create_out_dir(out_dir)?;
    let (img_dir, mask_dir) = (out_dir.join("images"), out_dir.join("masks"));
    create_dir(&img_dir)?;
    create_dir(&mask_dir)?;

    let mut images = Vec::new();
    let mut annotations = Vec::new();
    for (im, sample) in manifest.images.iter().zip(data.samples()) {
        let pieces = match &cfg.data.tile {
            Some(spec) => tile_image(sample, spec)?,
            None => vec![sample.clone()],
        };
        for piece in pieces {
            let s = attach_privileged_channel(resize_sample(&piece, size, size)?, num_classes)?;
            let file_name = format!("{}.ppm", s.id());
            ingest::write_rgb(&img_dir.join(&file_name), &s)?;
            let mask = s.privileged().expect("just attached");
            ingest::write_plane(&mask_dir.join(ingest::mask_file_name(s.id())), mask)?;
            let image_id = images.len() as u64 + 1;
            for a in s.annotations() {
                annotations.push(CocoAnnotation {
                    id: annotations.len() as u64 + 1,
                    image_id,
                    category_id: categories[a.class_id.0].id,
                    bbox: a.bbox.to_xywh(),
                });
            }
            images.push(CocoImage {
                id: image_id,
                file_name,
                width: size,
                height: size,
                split: im.split,
            });
        }
    }
    let prepared = CocoManifest {
        images,
        annotations,
        categories,
    };
    prepared.validate()?;
    write_file(&out_dir.join(MANIFEST_FILE), prepared.to_json()?)?;
    Ok(prepared)
}

/// Loads one split of a prepared dataset with its masks attached.
pub fn load_prepared(data_dir: &Path, split: Split) -> Result<Dataset> {
    let manifest = ingest::read_manifest(&data_dir.join(MANIFEST_FILE))?;
    let data = ingest::load_split(&manifest, &data_dir.join("images"), split)?;
    ingest::attach_mask_files(data, &data_dir.join("masks"))
}

/// Train, validation and test splits of a prepared dataset.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
}

impl PreparedData {
    pub fn load(data_dir: &Path) -> Result<Self> {
        Ok(Self {
            train: load_prepared(data_dir, Split::Train)?,
            val: load_prepared(data_dir, Split::Val)?,
            test: load_prepared(data_dir, Split::Test)?,
        })
    }

    pub fn splits(&self) -> TrainSplits<'_> {
        TrainSplits {
            train: &self.train,
            val: &self.val,
        }
    }
}

/// A trained model with its log and test-split report.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub model: DetectorModel,
    pub log: TrainLog,
    pub report: EvalReport,
}

fn metadata(role: Role, train: &DistillConfig, log: &TrainLog) -> BTreeMap<String, serde_json::Value> {
    BTreeMap::from([
        ("role".to_string(), serde_json::json!(role.as_str())),
        ("alpha".to_string(), serde_json::json!(train.alpha)),
        ("seed".to_string(), serde_json::json!(train.seed)),
        ("best_epoch".to_string(), serde_json::json!(log.best_epoch)),
    ])
}

fn finish_run(
    cfg: &ExperimentConfig,
    out_dir: &Path,
    ckpt_name: &str,
    (model, log): (DetectorModel, TrainLog),
    test: &Dataset,
) -> Result<RunOutcome> {
    let report = evaluate_model(&model, test, &cfg.eval)?;
    create_dir(out_dir)?;
    cfg.write_to(out_dir)?;
    write_checkpoint(&out_dir.join(ckpt_name), &model, &metadata(model.role(), &cfg.train, &log))?;
    write_file(&out_dir.join("train_log.csv"), log.to_csv())?;
    write_file(&out_dir.join("report.json"), report_to_json(&report)?)?;
    write_file(&out_dir.join("report.csv"), report_to_csv(&report))?;
    Ok(RunOutcome { model, log, report })
}

fn train_teacher_on(cfg: &ExperimentConfig, data: &PreparedData, out_dir: &Path) -> Result<RunOutcome> {
    let trained = train_teacher(data.splits(), cfg.model.input_size, &cfg.train, &cfg.eval)?;
    finish_run(cfg, out_dir, "teacher.ckpt", trained, &data.test)
}

fn train_student_on(
    cfg: &ExperimentConfig,
    data: &PreparedData,
    teacher: Option<&DetectorModel>,
    out_dir: &Path,
) -> Result<RunOutcome> {
    let trained = match teacher {
        Some(t) => train_student(data.splits(), t, &cfg.train, &cfg.eval)?,
        None if cfg.train.alpha == 0.0 => train_baseline(data.splits(), cfg.model.input_size, &cfg.train, &cfg.eval)?,
        None => return Err(Error::Usage("alpha > 0 needs a teacher checkpoint".into())),
    };
    finish_run(cfg, out_dir, "student.ckpt", trained, &data.test)
}

/// Trains the privileged teacher on a prepared dataset and writes `teacher.ckpt` plus logs.
pub fn cmd_train_teacher(cfg: &ExperimentConfig, data_dir: &Path, out_dir: &Path) -> Result<RunOutcome> {
    let data = PreparedData::load(data_dir)?;
    train_teacher_on(cfg, &data, out_dir)
}

/// Trains a student at `train.alpha`. Without a teacher only `alpha = 0` is allowed.
pub fn cmd_train_student(
    cfg: &ExperimentConfig,
    data_dir: &Path,
    teacher: Option<&Path>,
    out_dir: &Path,
) -> Result<RunOutcome> {
    let data = PreparedData::load(data_dir)?;
    let teacher = teacher.map(read_checkpoint).transpose()?.map(|c| c.model);
    train_student_on(cfg, &data, teacher.as_ref(), out_dir)
}

/// One row of a sweep summary.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub role: Role,
    /// Absent for the teacher.
    pub alpha: Option<f64>,
    pub seed: u64,
    pub map50: f64,
    pub map75: f64,
    pub map5095: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl SummaryRow {
    pub fn new(role: Role, alpha: Option<f64>, seed: u64, r: &EvalReport) -> Self {
        Self {
            role,
            alpha,
            seed,
            map50: r.map50,
            map75: r.map75,
            map5095: r.map5095,
            precision: r.precision,
            recall: r.recall,
            f1: r.f1,
        }
    }

    /// Metric values in [`METRICS`] order.
    pub fn metrics(&self) -> [f64; 6] {
        [self.map5095, self.map50, self.map75, self.precision, self.recall, self.f1]
    }
}

/// Metric names in report order.
pub const METRICS: [&str; 6] = ["map5095", "map50", "map75", "precision", "recall", "f1"];

pub fn summary_to_csv(rows: &[SummaryRow]) -> String {
    let mut out = format!("{SUMMARY_HEADER}\n");
    for r in rows {
        let alpha = r.alpha.map(|a| a.to_string()).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{alpha},{},{},{},{},{},{},{}",
            r.role.as_str(),
            r.seed,
            r.map50,
            r.map75,
            r.map5095,
            r.precision,
            r.recall,
            r.f1
        );
    }
    out
}

pub fn summary_from_csv(text: &str) -> Result<Vec<SummaryRow>> {
    let mut lines = text.lines();
    if lines.next() != Some(SUMMARY_HEADER) {
        return Err(Error::invalid("summary csv has an unexpected header"));
    }
    lines
        .filter(|l| !l.is_empty())
        .map(|line| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 9 {
                return Err(Error::invalid(format!("summary row has {} fields: {line}", f.len())));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| Error::invalid(format!("bad number {s:?}")));
            let role = match f[0] {
                "teacher" => Role::Teacher,
                "student" => Role::Student,
                "baseline" => Role::Baseline,
                other => return Err(Error::invalid(format!("unknown role {other:?}"))),
            };
            Ok(SummaryRow {
                role,
                alpha: if f[1].is_empty() { None } else { Some(num(f[1])?) },
                seed: f[2].parse().map_err(|_| Error::invalid(format!("bad seed {:?}", f[2])))?,
                map50: num(f[3])?,
                map75: num(f[4])?,
                map5095: num(f[5])?,
                precision: num(f[6])?,
                recall: num(f[7])?,
                f1: num(f[8])?,
            })
        })
        .collect()
}

/// Directory name of one sweep run.
pub fn run_name(alpha: f64, seed: u64) -> String {
    format!("alpha_{alpha}_seed_{seed}")
}

/// Mean of each metric over the student rows at each alpha, alphas ascending.
pub fn per_alpha_means(rows: &[SummaryRow]) -> Vec<(f64, [f64; 6])> {
    let mut alphas: Vec<f64> = rows.iter().filter_map(|r| r.alpha).collect();
    alphas.sort_by(f64::total_cmp);
    alphas.dedup();
    alphas
        .into_iter()
        .map(|a| {
            let sel: Vec<&SummaryRow> = rows.iter().filter(|r| r.alpha == Some(a)).collect();
            let mut m = [0.0; 6];
            for r in &sel {
                for (acc, v) in m.iter_mut().zip(r.metrics()) {
                    *acc += v / sel.len() as f64;
                }
            }
            (a, m)
        })
        .collect()
}

/// Result of [`cmd_sweep`].
#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub teacher: RunOutcome,
    pub rows: Vec<SummaryRow>,
}

fn sweep_chart(rows: &[SummaryRow]) -> String {
    let means = per_alpha_means(rows);
    let groups: Vec<String> = means.iter().map(|(a, _)| format!("alpha={a}")).collect();
    let pick = |i: usize| means.iter().map(|(_, m)| m[i]).collect::<Vec<_>>();
    svg::grouped_bars(
        "Test metrics vs alpha (mean over seeds)",
        &groups,
        &[
            ("mAP@50".into(), pick(1)),
            ("mAP@50-95".into(), pick(0)),
            ("F1".into(), pick(5)),
        ],
    )
}

/// Trains one teacher (seed `train.seed`), then a student for every `(alpha, seed)` pair in
/// ascending order. Alpha 0 rows are the baselines.
///
/// Writes `teacher/`, `runs/alpha_<a>_seed_<s>/`, `summary.csv` and `alpha_sweep.svg`. If a
/// run fails, the rows finished so far are still written together with a `PARTIAL` marker.
pub fn cmd_sweep(cfg: &ExperimentConfig, data_dir: &Path, out_dir: &Path) -> Result<SweepOutcome> {
    if cfg.sweep.alphas.is_empty() || cfg.sweep.seeds.is_empty() {
        return Err(Error::Usage("sweep needs at least one alpha and one seed".into()));
    }
    let data = PreparedData::load(data_dir)?;
    create_out_dir(out_dir)?;
    cfg.write_to(out_dir)?;
    let mut pairs: Vec<(f64, u64)> = cfg
        .sweep
        .alphas
        .iter()
        .flat_map(|&a| cfg.sweep.seeds.iter().map(move |&s| (a, s)))
        .collect();
    pairs.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
    pairs.dedup();

    let mut rows = Vec::new();
    let write_summary = |rows: &[SummaryRow], failure: Option<&Error>| -> Result<()> {
        write_file(&out_dir.join(SUMMARY_FILE), summary_to_csv(rows))?;
        write_file(&out_dir.join("alpha_sweep.svg"), sweep_chart(rows))?;
        let marker = out_dir.join(PARTIAL_FILE);
        match failure {
            Some(e) => write_file(&marker, format!("{e}\n")),
            None if marker.exists() => fs::remove_file(&marker).map_err(|e| Error::io(&marker, e)),
            None => Ok(()),
        }
    };

    let teacher = match train_teacher_on(cfg, &data, &out_dir.join("teacher")) {
        Ok(t) => t,
        Err(e) => {
            write_summary(&rows, Some(&e))?;
            return Err(e);
        }
    };
    rows.push(SummaryRow::new(Role::Teacher, None, cfg.train.seed, &teacher.report));
    for (alpha, seed) in pairs {
        let mut run_cfg = cfg.clone();
        run_cfg.train.alpha = alpha;
        run_cfg.train.seed = seed;
        let dir = out_dir.join("runs").join(run_name(alpha, seed));
        match train_student_on(&run_cfg, &data, Some(&teacher.model), &dir) {
            Ok(run) => rows.push(SummaryRow::new(run.model.role(), Some(alpha), seed, &run.report)),
            Err(e) => {
                write_summary(&rows, Some(&e))?;
                return Err(e);
            }
        }
    }
    write_summary(&rows, None)?;
    Ok(SweepOutcome { teacher, rows })
}

fn load_model(checkpoint: &Path) -> Result<DetectorModel> {
    Ok(read_checkpoint(checkpoint)?.model)
}

fn write_eval_outputs(
    out_dir: &Path,
    model: &DetectorModel,
    data: &Dataset,
    cfg: &ExperimentConfig,
) -> Result<EvalReport> {
    let report = evaluate_model(model, data, &cfg.eval)?;
    let dets = predict_dataset(model, data, &cfg.eval)?;
    let records: Vec<PredictionRecord> = data
        .samples()
        .iter()
        .zip(&dets)
        .flat_map(|(s, ds)| ds.iter().map(|d| PredictionRecord::new(s.id(), d)))
        .collect();
    create_out_dir(out_dir)?;
    cfg.write_to(out_dir)?;
    write_file(&out_dir.join("report.json"), report_to_json(&report)?)?;
    write_file(&out_dir.join("report.csv"), report_to_csv(&report))?;
    write_file(&out_dir.join("predictions.json"), predictions_to_json(&records)?)?;
    Ok(report)
}

/// Scores a checkpoint on one split of a prepared dataset.
pub fn cmd_evaluate(
    cfg: &ExperimentConfig,
    checkpoint: &Path,
    data_dir: &Path,
    split: Split,
    out_dir: &Path,
) -> Result<EvalReport> {
    let model = load_model(checkpoint)?;
    let data = load_prepared(data_dir, split)?;
    write_eval_outputs(out_dir, &model, &data, cfg)
}

/// Scores an RGB-only checkpoint on every image of a foreign dataset, resized but not tiled.
pub fn cmd_cross_eval(cfg: &ExperimentConfig, checkpoint: &Path, data_dir: &Path, out_dir: &Path) -> Result<EvalReport> {
    let model = load_model(checkpoint)?;
    if model.role() == Role::Teacher || model.config().in_planes != 3 {
        return Err(Error::Checkpoint(format!(
            "cross-eval needs an RGB-only model; {} has {} input planes",
            checkpoint.display(),
            model.config().in_planes
        )));
    }
    let manifest = ingest::read_manifest(&data_dir.join(MANIFEST_FILE))?;
    if manifest.categories.len() != model.config().num_classes {
        return Err(Error::invalid(format!(
            "dataset has {} categories, model predicts {}",
            manifest.categories.len(),
            model.config().num_classes
        )));
    }
    let size = model.config().input_size;
    let data = ingest::load_dataset(&manifest, &data_dir.join("images"))?.try_map(|s| resize_sample(&s, size, size))?;
    write_eval_outputs(out_dir, &model, &data, cfg)
}

/// Merges the `summary.csv` of several sweep directories into `report.csv` (with a leading
/// `run_id` column, the directory name) and draws baseline vs best student per metric.
pub fn cmd_report(run_dirs: &[PathBuf], out_dir: &Path) -> Result<String> {
    if run_dirs.is_empty() {
        return Err(Error::Usage("report needs at least one run directory".into()));
    }
    let mut merged = format!("run_id,{SUMMARY_HEADER}\n");
    let mut series = Vec::new();
    for dir in run_dirs {
        let path = dir.join(SUMMARY_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let rows = summary_from_csv(&text)?;
        let run_id = dir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| dir.display().to_string());
        for line in text.lines().skip(1).filter(|l| !l.is_empty()) {
            let _ = writeln!(merged, "{run_id},{line}");
        }
        let means = per_alpha_means(&rows);
        if let Some((_, base)) = means.iter().find(|(a, _)| *a == 0.0) {
            series.push((format!("{run_id} baseline"), base.to_vec()));
        }
        // best student by mean mAP@50; earlier (smaller) alpha wins ties
        let best = means
            .iter()
            .filter(|(a, _)| *a > 0.0)
            .fold(None::<&(f64, [f64; 6])>, |acc, m| match acc {
                Some(b) if b.1[1] >= m.1[1] => Some(b),
                _ => Some(m),
            });
        if let Some((a, m)) = best {
            series.push((format!("{run_id} student alpha={a}"), m.to_vec()));
        }
    }
    create_out_dir(out_dir)?;
    write_file(&out_dir.join("report.csv"), &merged)?;
    let groups: Vec<String> = METRICS.iter().map(|m| m.to_string()).collect();
    write_file(
        &out_dir.join("report.svg"),
        svg::grouped_bars("Baseline vs best student", &groups, &series),
    )?;
    Ok(merged)
}
