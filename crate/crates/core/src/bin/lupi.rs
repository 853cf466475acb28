use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lupi::experiment::{self, ExperimentConfig};
use lupi::{Error, Split};

#[derive(Parser)]
#[command(name = "lupi", version, about = "Privileged-information teacher/student detection experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (JSON). Missing fields take defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Overrides the training seed (and the synthetic-data seed for `generate`).
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the distillation weight.
    #[arg(long)]
    alpha: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic source dataset.
    Generate(#[command(flatten)] Common),
    /// Tile, resize and render privileged masks.
    Prepare {
        #[command(flatten)]
        common: Common,
        /// Source dataset directory.
        #[arg(long)]
        data: PathBuf,
    },
    /// Train the RGB + mask teacher.
    TrainTeacher {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
    },
    /// Train an RGB-only student (alpha 0 is the baseline and needs no teacher).
    TrainStudent {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        teacher: Option<PathBuf>,
    },
    /// One teacher, then a student per (alpha, seed).
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
    },
    /// Score a checkpoint on a prepared split.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "test")]
        split: String,
    },
    /// Score an RGB-only checkpoint on another dataset (resize only, no tiling).
    CrossEval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Merge sweep summaries into one CSV and chart.
    Report {
        #[arg(long)]
        out: PathBuf,
        runs: Vec<PathBuf>,
    },
}

fn resolve(common: &Common, synth_seed: bool) -> lupi::Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(p) => ExperimentConfig::read(p).map_err(|e| match e {
            Error::Io { .. } => e,
            other => Error::Usage(format!("config {}: {other}", p.display())),
        })?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.train.seed = seed;
        if synth_seed {
            if let Some(s) = cfg.data.synth.as_mut() {
                s.seed = seed;
            }
        }
    }
    if let Some(alpha) = common.alpha {
        cfg.train.alpha = alpha;
    }
    cfg.validate().map_err(|e| Error::Usage(e.to_string()))?;
    Ok(cfg)
}

fn parse_split(s: &str) -> lupi::Result<Split> {
    match s {
        "train" => Ok(Split::Train),
        "val" => Ok(Split::Val),
        "test" => Ok(Split::Test),
        other => Err(Error::Usage(format!("unknown split {other:?}"))),
    }
}

fn print_report(r: &lupi::metrics::EvalReport) {
    println!(
        "map50={:.4} map75={:.4} map5095={:.4} precision={:.4} recall={:.4} f1={:.4}",
        r.map50, r.map75, r.map5095, r.precision, r.recall, r.f1
    );
}

fn run(cmd: Command) -> lupi::Result<()> {
    match cmd {
        Command::Generate(c) => {
            let m = experiment::cmd_generate(&resolve(&c, true)?, &c.out)?;
            println!("wrote {} images to {}", m.images.len(), c.out.display());
        }
        Command::Prepare { common, data } => {
            let m = experiment::cmd_prepare(&resolve(&common, false)?, &data, &common.out)?;
            println!("prepared {} samples in {}", m.images.len(), common.out.display());
        }
        Command::TrainTeacher { common, data } => {
            let run = experiment::cmd_train_teacher(&resolve(&common, false)?, &data, &common.out)?;
            println!("best epoch {}", run.log.best_epoch);
            print_report(&run.report);
        }
        Command::TrainStudent { common, data, teacher } => {
            let cfg = resolve(&common, false)?;
            let run = experiment::cmd_train_student(&cfg, &data, teacher.as_deref(), &common.out)?;
            println!("best epoch {}", run.log.best_epoch);
            print_report(&run.report);
        }
        Command::Sweep { common, data } => {
            let out = experiment::cmd_sweep(&resolve(&common, false)?, &data, &common.out)?;
            print!("{}", experiment::summary_to_csv(&out.rows));
        }
        Command::Evaluate {
            common,
            checkpoint,
            data,
            split,
        } => {
            let cfg = resolve(&common, false)?;
            let r = experiment::cmd_evaluate(&cfg, &checkpoint, &data, parse_split(&split)?, &common.out)?;
            print_report(&r);
        }
        Command::CrossEval { common, checkpoint, data } => {
            let r = experiment::cmd_cross_eval(&resolve(&common, false)?, &checkpoint, &data, &common.out)?;
            print_report(&r);
        }
        Command::Report { out, runs } => {
            experiment::cmd_report(&runs, Path::new(&out))?;
            println!("wrote {}", out.join("report.csv").display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Usage(_) => 1,
                Error::Training(_) => 3,
                _ => 2,
            })
        }
    }
}
