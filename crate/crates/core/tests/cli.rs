use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const TINY: &str = r#"{
  "data": {"synth": {"num_images": 6, "image_size": 96, "num_classes": 3, "seed": 5},
           "tile": {"grid": 3}, "resize": 32},
  "model": {"input_size": 32},
  "train": {"lr": 1e-3, "max_epochs": 1, "patience": 1, "seed": 2},
  "sweep": {"alphas": [0.0, 0.5], "seeds": [1]}
}"#;

fn lupi(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lupi")).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Workspace {
    _dir: tempfile::TempDir,
    root: PathBuf,
    config: PathBuf,
}

fn workspace() -> Workspace {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().to_path_buf();
    let config = root.join("tiny.json");
    fs::write(&config, TINY).unwrap();
    Workspace { _dir: dir, root, config }
}

#[test]
fn help_and_bad_flags() {
    assert_eq!(code(&lupi(&["--help"])), 0);
    assert_eq!(code(&lupi(&["sweep", "--help"])), 0);
    assert_eq!(code(&lupi(&["frobnicate"])), 1);
    assert_eq!(code(&lupi(&["generate"])), 1, "--out is required");
}

#[test]
fn config_errors_are_usage_errors() {
    let w = workspace();
    let bad_json = w.root.join("bad.json");
    fs::write(&bad_json, "{ not json").unwrap();
    let out = w.root.join("gen");
    assert_eq!(code(&lupi(&["generate", "--config", s(&bad_json), "--out", s(&out)])), 1);
    let bad_alpha = w.root.join("alpha.json");
    fs::write(&bad_alpha, r#"{"sweep": {"alphas": [1.5]}}"#).unwrap();
    assert_eq!(code(&lupi(&["generate", "--config", s(&bad_alpha), "--out", s(&out)])), 1);
    assert_eq!(code(&lupi(&["generate", "--config", s(&w.config), "--alpha", "2", "--out", s(&out)])), 1);
}

#[test]
fn generate_needs_existing_parent() {
    let w = workspace();
    let out = w.root.join("missing").join("gen");
    let o = lupi(&["generate", "--config", s(&w.config), "--out", s(&out)]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("missing"));
}

#[test]
fn report_without_runs_is_usage_error() {
    let w = workspace();
    assert_eq!(code(&lupi(&["report", "--out", s(&w.root.join("r"))])), 1);
}

#[test]
fn full_command_chain() {
    let w = workspace();
    let cfg = s(&w.config);
    let (src, prep) = (w.root.join("src"), w.root.join("prep"));
    assert_eq!(code(&lupi(&["generate", "--config", cfg, "--out", s(&src)])), 0);
    assert!(src.join("annotations.json").is_file());
    assert_eq!(fs::read_dir(src.join("images")).unwrap().count(), 6);

    assert_eq!(code(&lupi(&["prepare", "--config", cfg, "--data", s(&src), "--out", s(&prep)])), 0);
    assert_eq!(fs::read_dir(prep.join("images")).unwrap().count(), 54);
    assert_eq!(fs::read_dir(prep.join("masks")).unwrap().count(), 54);

    let teacher_dir = w.root.join("teacher");
    let o = lupi(&["train-teacher", "--config", cfg, "--data", s(&prep), "--out", s(&teacher_dir)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let teacher = teacher_dir.join("teacher.ckpt");
    assert!(teacher.is_file() && teacher_dir.join("train_log.csv").is_file());

    let student_dir = w.root.join("student");
    let args = ["train-student", "--config", cfg, "--data", s(&prep), "--alpha", "0.5", "--out", s(&student_dir)];
    assert_eq!(code(&lupi(&args)), 1, "alpha > 0 without a teacher");
    let mut with_teacher = args.to_vec();
    with_teacher.extend(["--teacher", s(&teacher)]);
    assert_eq!(code(&lupi(&with_teacher)), 0);
    let student = student_dir.join("student.ckpt");

    let eval_dir = w.root.join("eval");
    let eval = |ckpt: &Path, split: &str| {
        code(&lupi(&[
            "evaluate", "--config", cfg, "--checkpoint", s(ckpt), "--data", s(&prep), "--split", split, "--out",
            s(&eval_dir),
        ]))
    };
    assert_eq!(eval(&student, "test"), 0);
    assert!(eval_dir.join("predictions.json").is_file() && eval_dir.join("report.csv").is_file());
    assert_eq!(eval(&teacher, "val"), 0);
    assert_eq!(eval(&student, "holdout"), 1);

    let cross = w.root.join("cross");
    let cross_eval = |ckpt: &Path| {
        lupi(&["cross-eval", "--config", cfg, "--checkpoint", s(ckpt), "--data", s(&src), "--out", s(&cross)])
    };
    assert_eq!(code(&cross_eval(&student)), 0);
    let o = cross_eval(&teacher);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("RGB-only"));

    let sweep = w.root.join("sweep");
    let o = lupi(&["sweep", "--config", cfg, "--data", s(&prep), "--out", s(&sweep)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let summary = fs::read_to_string(sweep.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 1 + 1 + 2, "header, teacher, two students");
    assert!(sweep.join("alpha_sweep.svg").is_file() && !sweep.join("PARTIAL").exists());

    let report = w.root.join("report");
    assert_eq!(code(&lupi(&["report", "--out", s(&report), s(&sweep)])), 0);
    let merged = fs::read_to_string(report.join("report.csv")).unwrap();
    assert!(merged.starts_with("run_id,role,alpha"));
    assert_eq!(merged.lines().count(), summary.lines().count());
    assert!(report.join("report.svg").is_file());
}
