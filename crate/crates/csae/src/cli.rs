//! Command-line front end. Every command resolves a [`RunConfig`] from
//! defaults, then `--config`, then flags, and writes its reports into `--out`.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use csae_core::classifier::{build_classifier, train_classifier, Classifier};
use csae_core::csae::{build_csae, reconstruct_r2, train_autoencoder, Autoencoder};
use csae_core::eval::cv_aggregate;
use csae_core::nn::{gradient_check, Coverage, GradCheckReport};
use csae_core::rng::derive_seed;
use csae_core::signal::{CHANNELS, CLASS_NAMES};
use csae_core::train::Clock;
use csae_core::Tensor;

use crate::checkpoint::{Checkpoint, FORMAT_VERSION};
use crate::config::RunConfig;
use crate::data::write_trials_csv;
use crate::error::{AppError, AppResult};
use crate::experiment::{self, evaluate, fold_plans, load_cohort, FoldSplits};
use crate::report::{self, Table};

pub const GRADCHECK_TOL: f64 = 1e-4;

#[derive(Debug, Parser)]
#[command(
    name = "csae",
    version,
    about = "Sparse convolutional autoencoder EMG gesture pipeline"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Default, Args)]
pub struct Common {
    /// Directory of recording CSVs.
    #[arg(long, global = true, value_name = "DIR", conflicts_with = "synthetic")]
    pub data: Option<PathBuf>,
    /// Generate a synthetic cohort instead of reading recordings.
    #[arg(long, global = true)]
    pub synthetic: bool,
    #[arg(long, global = true, value_parser = ["6", "10"])]
    pub classes: Option<String>,
    #[arg(long, global = true)]
    pub lambda: Option<f64>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_name = "FRACTION")]
    pub calib_fraction: Option<f64>,
    /// `key = value` settings applied before the other flags.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Comma-separated λ values for `sweep-lambda`.
    #[arg(long, global = true, value_delimiter = ',')]
    pub lambdas: Option<Vec<f64>>,
    /// Checkpoint to start from (`train-clf`) or to inspect.
    #[arg(long, global = true, value_name = "FILE")]
    pub checkpoint: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Finite-difference check of the autoencoder and classifier gradients.
    Gradcheck,
    /// Write a synthetic cohort as recording CSVs.
    GenSynthetic,
    /// Train the autoencoder on the first fold's source subjects.
    TrainAe,
    /// Train a classifier head on a trained encoder.
    TrainClf,
    /// Leave-one-subject-out evaluation.
    Loso,
    /// Leave-one-subject-out evaluation before and after user calibration.
    Finetune,
    /// Grow a 6-class model to 10 classes.
    Expand,
    /// Sparsity penalty sweep.
    SweepLambda,
    /// Compare against the baselines.
    Bench,
    /// Print the CSV reports in `--out` as tables.
    Report,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Gradcheck => "gradcheck",
            Command::GenSynthetic => "gen-synthetic",
            Command::TrainAe => "train-ae",
            Command::TrainClf => "train-clf",
            Command::Loso => "loso",
            Command::Finetune => "finetune",
            Command::Expand => "expand",
            Command::SweepLambda => "sweep-lambda",
            Command::Bench => "bench",
            Command::Report => "report",
        }
    }
}

/// Seconds since construction.
#[derive(Debug)]
pub struct WallClock(Instant);

impl WallClock {
    pub fn start() -> Self {
        Self(Instant::now())
    }
}

impl Clock for WallClock {
    fn seconds(&self) -> f64 {
        self.0.elapsed().as_secs_f64()
    }
}

pub fn resolve_config(common: &Common, command: Command) -> AppResult<RunConfig> {
    let mut cfg = RunConfig::default();
    if command == Command::Expand {
        cfg.classes = 10;
    }
    if let Some(path) = &common.config {
        cfg.apply_file(path)?;
    }
    if let Some(d) = &common.data {
        cfg.data_dir = Some(d.clone());
    }
    if common.synthetic {
        cfg.data_dir = None;
    }
    if let Some(c) = &common.classes {
        cfg.classes = c.parse().map_err(|_| AppError::Usage(format!("bad --classes {c}")))?;
    }
    if let Some(l) = common.lambda {
        cfg.csae.lambda = l;
    }
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(o) = &common.out {
        cfg.out = o.clone();
    }
    if let Some(f) = common.calib_fraction {
        cfg.calib_fraction = f;
    }
    if let Some(l) = &common.lambdas {
        cfg.lambdas = l.clone();
    }
    cfg.validate()?;
    if command == Command::Expand && cfg.classes != 10 {
        return Err(AppError::Usage("expand needs --classes 10".into()));
    }
    Ok(cfg)
}

fn ensure_dir(dir: &Path) -> AppResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| AppError::io(dir, e))
}

fn write(dir: &Path, name: &str, table: &Table) -> AppResult<PathBuf> {
    let path = dir.join(name);
    table.write_csv(&path)?;
    Ok(path)
}

fn class_names(k: usize) -> Vec<String> {
    CLASS_NAMES[..k].iter().map(|s| s.to_string()).collect()
}

/// Effective configuration, seeds, format versions and wall-clock time.
fn write_manifest(cfg: &RunConfig, command: Command, files: &[PathBuf], seconds: f64) -> AppResult<()> {
    let mut s = String::new();
    s.push_str(&format!("command = {:?}\n", command.name()));
    s.push_str(&format!("crate_version = {:?}\n", env!("CARGO_PKG_VERSION")));
    s.push_str(&format!("checkpoint_format_version = {FORMAT_VERSION}\n"));
    s.push_str(&format!("wall_clock_seconds = {seconds:.3}\n"));
    let names: Vec<String> = files
        .iter()
        .filter_map(|p| p.file_name().map(|n| format!("{:?}", n.to_string_lossy())))
        .collect();
    s.push_str(&format!("outputs = [{}]\n\n[config]\n", names.join(", ")));
    s.push_str(&cfg.to_config_string());
    let cfg_path = cfg.out.join("config.toml");
    std::fs::write(&cfg_path, cfg.to_config_string()).map_err(|e| AppError::io(&cfg_path, e))?;
    let path = cfg.out.join("manifest.toml");
    std::fs::write(&path, s).map_err(|e| AppError::io(&path, e))
}

pub fn gradcheck_reports(cfg: &RunConfig) -> AppResult<Vec<(&'static str, GradCheckReport)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 99));
    let x: Vec<f64> = (0..cfg.csae.input_len * CHANNELS)
        .map(|_| StandardNormal.sample(&mut rng))
        .collect();
    let x = Tensor::new(vec![cfg.csae.input_len, CHANNELS], x)?;
    let coverage = Coverage::Sample {
        per_tensor: 12,
        seed: cfg.seed,
    };
    let mut ae = build_csae(&cfg.csae, cfg.seed)?;
    let ae_report = gradient_check(&mut ae, &x, 1e-5, GRADCHECK_TOL, coverage)?;
    let mut clf_cfg = cfg.classifier;
    clf_cfg.num_classes = cfg.classes;
    let clf = build_classifier(&ae.encoder(), &clf_cfg, derive_seed(cfg.seed, 1))?;
    let mut labeled = clf.with_label(0);
    let clf_report = gradient_check(&mut labeled, &x, 1e-5, GRADCHECK_TOL, coverage)?;
    Ok(vec![("autoencoder", ae_report), ("classifier", clf_report)])
}

fn print_log_summary(what: &str, log: &csae_core::train::TrainLog) {
    println!(
        "{what}: {} epochs, best epoch {}, best val loss {:.6e}, stop {}",
        log.epochs.len(),
        log.best_epoch.map_or("-".into(), |e| e.to_string()),
        log.best_val_loss().unwrap_or(f64::NAN),
        log.stop_reason.name()
    );
}

pub fn run(cli: &Cli) -> AppResult<()> {
    let cmd = cli.command;
    let cfg = resolve_config(&cli.common, cmd)?;
    let clock = WallClock::start();
    if cmd == Command::Report {
        print!("{}", report::render_dir(&cfg.out)?);
        return Ok(());
    }
    ensure_dir(&cfg.out)?;
    let out = cfg.out.clone();
    let mut files = Vec::new();
    match cmd {
        Command::Report => unreachable!("handled above"),
        Command::Gradcheck => {
            let reports = gradcheck_reports(&cfg)?;
            let mut worst: f64 = 0.0;
            for (model, r) in &reports {
                for (layer, e) in &r.per_layer {
                    println!("{model} {layer}: max relative error {e:.3e}");
                }
                println!("{model} input: max relative error {:.3e}", r.input_rel_error);
                println!("{model}: {} coordinates, {} skipped at kinks", r.checked, r.kinked);
                worst = worst.max(r.max_rel_error);
            }
            if worst > GRADCHECK_TOL || reports.iter().any(|(_, r)| !r.passed) {
                return Err(AppError::GradCheck {
                    max: worst,
                    tol: GRADCHECK_TOL,
                });
            }
            println!("gradient check passed (max {worst:.3e})");
        }
        Command::GenSynthetic => {
            let cohort = experiment::synthetic_cohort(cfg.synthetic_subjects, cfg.classes, cfg.seed)?;
            for s in &cohort.subjects {
                let recs: Vec<_> = cohort
                    .recordings
                    .iter()
                    .filter(|r| r.subject_id == *s)
                    .cloned()
                    .collect();
                let path = out.join(format!("subject_{s:02}.csv"));
                write_trials_csv(&path, &recs)?;
                files.push(path);
            }
            println!("wrote {} subjects to {}", cohort.subjects.len(), out.display());
        }
        Command::TrainAe => {
            let cohort = load_cohort(&cfg)?.restricted(cfg.classes);
            let plan = fold_plans(&cohort, &cfg)?.remove(0);
            let s = FoldSplits::prepare(&cohort, &plan, &cfg)?;
            let mut ae = build_csae(&cfg.csae, cfg.seed)?;
            let ae_train = s.train.every_nth(cfg.desk.ae_train_step);
            let log = train_autoencoder(&mut ae, &ae_train, &s.val, &cfg.csae.train, &clock)?;
            print_log_summary("autoencoder", &log);
            println!(
                "R2 train {:.4}, val {:.4}",
                reconstruct_r2(&ae, &ae_train)?,
                reconstruct_r2(&ae, &s.val)?
            );
            files.push(write(&out, "ae_train_log.csv", &report::train_log_table(&log))?);
            let path = out.join("ae.ckpt");
            checkpoint(&ae.graph, &s, &cfg, cfg.classes).save(&path)?;
            files.push(path);
        }
        Command::TrainClf => {
            let path = cli.common.checkpoint.clone().unwrap_or_else(|| out.join("ae.ckpt"));
            let ck = Checkpoint::load(&path)?;
            let ae = Autoencoder::new(ck.graph, ck.lambda)?;
            let cohort = load_cohort(&cfg)?.restricted(cfg.classes);
            let plan = fold_plans(&cohort, &cfg)?.remove(0);
            let s = FoldSplits::with_standardizer(&cohort, &plan, &cfg, ck.standardizer)?;
            let mut clf_cfg = cfg.classifier;
            clf_cfg.num_classes = cfg.classes;
            let mut clf = build_classifier(&ae.encoder(), &clf_cfg, derive_seed(cfg.seed, 1))?;
            let train = s.train.every_nth(cfg.desk.clf_train_step);
            let log = train_classifier(&mut clf, &train, &s.val, &clf_cfg.train, &clock)?;
            print_log_summary("classifier", &log);
            let r = evaluate(&clf, s.target, &s.test)?;
            println!("source test micro-F1 {:.4}", r.micro_f1);
            files.push(write(&out, "clf_train_log.csv", &report::train_log_table(&log))?);
            let path = out.join("clf.ckpt");
            checkpoint(&clf.graph, &s, &cfg, cfg.classes).save(&path)?;
            files.push(path);
        }
        Command::Loso | Command::Finetune => {
            let cohort = load_cohort(&cfg)?;
            let folds = experiment::run_loso(&cohort, &cfg, &clock)?;
            let mut per_fold = Table::new(&["fold", "source_micro_f1", "pre_tune_micro_f1", "post_tune_micro_f1"]);
            for f in &folds {
                println!(
                    "fold {}: source {:.4}, target before calibration {:.4}, after {:.4}",
                    f.target, f.source.micro_f1, f.pre_tune.micro_f1, f.post_tune.micro_f1
                );
                per_fold.push(vec![
                    f.target.to_string(),
                    format!("{:.6}", f.source.micro_f1),
                    format!("{:.6}", f.pre_tune.micro_f1),
                    format!("{:.6}", f.post_tune.micro_f1),
                ]);
                let path = out.join(format!("fold{:02}.ckpt", f.target));
                let model = if cmd == Command::Finetune {
                    &f.tuned
                } else {
                    &f.model.classifier
                };
                Checkpoint {
                    graph: model.graph.clone(),
                    standardizer: f.standardizer.clone(),
                    class_names: class_names(cfg.classes),
                    seed: cfg.seed,
                    lambda: cfg.csae.lambda,
                }
                .save(&path)?;
                files.push(path);
            }
            files.push(write(&out, "folds.csv", &per_fold)?);
            let source: Vec<_> = folds.iter().map(|f| f.source.clone()).collect();
            files.push(write(&out, "table1.csv", &report::cv_table(&cv_aggregate(&source)?))?);
            if cmd == Command::Finetune {
                let pre: Vec<_> = folds.iter().map(|f| f.pre_tune.clone()).collect();
                let post: Vec<_> = folds.iter().map(|f| f.post_tune.clone()).collect();
                let t = report::paired_from_folds(["original", "finetuned"], &pre, &post)?;
                files.push(write(&out, "table2.csv", &t)?);
            }
        }
        Command::Expand => {
            let cohort = load_cohort(&cfg)?;
            let folds = experiment::run_expansion(&cohort, &cfg, &clock)?;
            let mut p1 = Vec::new();
            let mut p2 = Vec::new();
            for f in &folds {
                let o = &f.report.outcome;
                let (a, b) = (o.phase1_test.clone(), o.phase2_test.clone());
                let (a, b) = a
                    .zip(b)
                    .ok_or_else(|| AppError::Usage("expansion ran without a test split".into()))?;
                println!(
                    "fold {}: phase I {:.4}, phase II {:.4}",
                    f.target, a.micro_f1, b.micro_f1
                );
                p1.push(a);
                p2.push(b);
            }
            files.push(write(
                &out,
                "table3.csv",
                &report::paired_from_folds(["phase1", "phase2"], &p1, &p2)?,
            )?);
            let forgetting: Vec<_> = folds.iter().map(|f| &f.report.forgetting).collect();
            files.push(write(&out, "fig7.csv", &report::forgetting_table(&forgetting)?)?);
        }
        Command::SweepLambda => {
            let cohort = load_cohort(&cfg)?;
            let rows = experiment::run_sweep(&cohort, &cfg, &clock)?;
            for r in &rows {
                println!(
                    "lambda {:e}: micro-F1 {:.4}, mean |z| {:.4e}",
                    r.lambda, r.micro_f1, r.mean_abs_z
                );
            }
            files.push(write(&out, "fig6.csv", &report::sweep_table(&rows))?);
        }
        Command::Bench => {
            let cohort = load_cohort(&cfg)?;
            let folds = experiment::run_bench(&cohort, &cfg, &clock)?;
            let t = report::bench_table(&folds)?;
            print!("{}", t.render());
            files.push(write(&out, "table4.csv", &t)?);
        }
    }
    write_manifest(&cfg, cmd, &files, clock.seconds())
}

fn checkpoint(graph: &csae_core::nn::ModelGraph, s: &FoldSplits, cfg: &RunConfig, k: usize) -> Checkpoint {
    Checkpoint {
        graph: graph.clone(),
        standardizer: s.standardizer.clone(),
        class_names: class_names(k),
        seed: cfg.seed,
        lambda: cfg.csae.lambda,
    }
}

/// Loads a classifier checkpoint.
pub fn load_classifier(path: &Path) -> AppResult<(Classifier, Checkpoint)> {
    let ck = Checkpoint::load(path)?;
    let clf = Classifier {
        graph: ck.graph.clone(),
        num_classes: ck.class_names.len(),
    };
    Ok((clf, ck))
}
