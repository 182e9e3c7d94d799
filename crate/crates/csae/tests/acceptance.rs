//! End-to-end acceptance checks, one line per criterion.
//!
//! `cargo test --release --test acceptance -- 6 9` runs only criteria 6 and 9.
//! The experiment criteria run the synthetic cohort at `configs/desk.toml` scale.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::OnceLock;
use std::time::Instant;

use clap::Parser;
use csae::checkpoint::Checkpoint;
use csae::cli::{run, Cli, WallClock};
use csae::config::RunConfig;
use csae::experiment::{
    run_bench, run_expansion, run_fold, run_loso, run_sweep, synthetic_cohort, Cohort, FoldOutcome, BENCH_METHODS,
};
use csae_core::adaptation::expand_head;
use csae_core::classifier::{build_classifier, ClassifierConfig, Pooling};
use csae_core::csae::{build_csae, reconstruct_r2, train_autoencoder, CsaeConfig};
use csae_core::eval::{micro_f1, per_class_prf, ConfusionMatrix};
use csae_core::nn::{gradient_check, Coverage, GraphLoss, LayerGroup, LayerSpec, ModelGraph, OutputLoss};
use csae_core::signal::synthetic::generate_synthetic_subject;
use csae_core::signal::{
    apply_standardizer, fit_standardizer, plan_loso, segment, segment_all, segment_count, select_split, Role,
    SegmentSet, SubjectProfile, TrialRecording, STRIDE, WINDOW,
};
use csae_core::{Error, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A failed requirement, as a human-readable reason.
type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn fail<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn workspace_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn desk_config() -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.apply_file(&workspace_root().join("configs/desk.toml"))
        .expect("desk config");
    cfg
}

fn cohort(classes: usize) -> &'static Cohort {
    static SIX: OnceLock<Cohort> = OnceLock::new();
    static TEN: OnceLock<Cohort> = OnceLock::new();
    let cell = if classes == 6 { &SIX } else { &TEN };
    cell.get_or_init(|| {
        let cfg = desk_config();
        synthetic_cohort(cfg.synthetic_subjects, classes, cfg.seed).expect("synthetic cohort")
    })
}

fn normal(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    Tensor::from_fn(shape, |_| rng.sample(rand_distr::StandardNormal))
}

const GRAD_TOL: f64 = 1e-4;
const GRAD_H: f64 = 1e-5;

fn layer_case(kind: usize, rng: &mut ChaCha8Rng) -> (LayerSpec, Vec<usize>) {
    let (c_in, c_out) = (rng.gen_range(1..4), rng.gen_range(1..4));
    let (k, s) = (rng.gen_range(1..5), rng.gen_range(1..4));
    let t = k + rng.gen_range(0..8);
    match kind {
        0 => (LayerSpec::conv1d(c_in, c_out, k, s), vec![t, c_in]),
        1 => (LayerSpec::tconv1d(c_in, c_out, k, s), vec![rng.gen_range(1..6), c_in]),
        2 => (LayerSpec::dense(t * c_in, c_out + 1), vec![t, c_in]),
        3 => (LayerSpec::layer_norm(c_in + 1), vec![t, c_in + 1]),
        4 => (LayerSpec::leaky_relu(0.1), vec![t, c_in]),
        5 => (LayerSpec::attention_pool(c_in), vec![t, c_in]),
        6 => (LayerSpec::mean_pool(c_in), vec![t, c_in]),
        _ => (LayerSpec::softmax(), vec![c_out + 1]),
    }
}

fn criterion_1() -> Check {
    let start = Instant::now();
    let mut worst = 0.0f64;
    let mut skipped = 0usize;
    let seeds = 20u64;
    for seed in 0..seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for kind in 0..8 {
            let (spec, shape) = layer_case(kind, &mut rng);
            let name = spec.kind.name();
            let mut graph = ModelGraph::new();
            graph.push("layer", LayerGroup::Head, spec, rng.gen()).map_err(fail)?;
            let out = graph.shapes(&shape).map_err(fail)?.pop().expect("output shape");
            let x = normal(&mut rng, &shape);
            let mut model = GraphLoss {
                graph,
                loss: OutputLoss::Probe(normal(&mut rng, &out)),
            };
            let r = gradient_check(&mut model, &x, GRAD_H, GRAD_TOL, Coverage::All).map_err(fail)?;
            ensure(r.passed, || format!("seed {seed} {name}: {:e}", r.max_rel_error))?;
            worst = worst.max(r.max_rel_error);
            skipped += r.kinked;
        }

        let ae_cfg = CsaeConfig {
            lambda: 1e-3,
            ..CsaeConfig::default()
        };
        let mut ae = build_csae(&ae_cfg, seed).map_err(fail)?;
        let x = normal(&mut rng, &[ae_cfg.input_len, 2]);
        let cov = Coverage::Sample { per_tensor: 4, seed };
        let r = gradient_check(&mut ae, &x, GRAD_H, GRAD_TOL, cov).map_err(fail)?;
        ensure(r.passed, || format!("seed {seed} autoencoder: {:e}", r.max_rel_error))?;
        worst = worst.max(r.max_rel_error);
        skipped += r.kinked;

        let pooling = if seed % 2 == 0 {
            Pooling::Attention
        } else {
            Pooling::Mean
        };
        let clf_cfg = ClassifierConfig {
            pooling,
            ..ClassifierConfig::default()
        };
        let clf = build_classifier(&ae.encoder(), &clf_cfg, seed + 100).map_err(fail)?;
        let mut model = clf.with_label(rng.gen_range(0..clf_cfg.num_classes));
        let r = gradient_check(&mut model, &x, GRAD_H, GRAD_TOL, cov).map_err(fail)?;
        ensure(r.passed, || format!("seed {seed} classifier: {:e}", r.max_rel_error))?;
        worst = worst.max(r.max_rel_error);
        skipped += r.kinked;
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(secs < 60.0, || format!("took {secs:.1}s"))?;
    Ok(format!(
        "{seeds} seeds, 8 layer kinds + CSAE + classifier, max rel error {worst:.2e}, {skipped} coordinates skipped at kinks, {secs:.1}s"
    ))
}

fn criterion_2() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for case in 0..100 {
        let k = rng.gen_range(2..=10);
        let n = rng.gen_range(1..300);
        let truth: Vec<usize> = (0..n).map(|_| rng.gen_range(0..k)).collect();
        let pred: Vec<usize> = (0..n).map(|_| rng.gen_range(0..k)).collect();
        let m = ConfusionMatrix::from_labels(&truth, &pred, k).map_err(fail)?;
        let (mut tp_all, mut fp_all, mut fn_all) = (0usize, 0usize, 0usize);
        for (c, got) in per_class_prf(&m).iter().enumerate() {
            let pairs = || truth.iter().zip(&pred);
            let tp = pairs().filter(|(t, p)| **t == c && **p == c).count();
            let fp = pairs().filter(|(t, p)| **t != c && **p == c).count();
            let fn_ = pairs().filter(|(t, p)| **t == c && **p != c).count();
            let safe = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
            let (p, r) = (safe(tp, tp + fp), safe(tp, tp + fn_));
            let f = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
            ensure(
                (got.precision - p).abs() <= 1e-12 && (got.recall - r).abs() <= 1e-12 && (got.f1 - f).abs() <= 1e-12,
                || format!("case {case} class {c}: {got:?} vs ({p}, {r}, {f})"),
            )?;
            tp_all += tp;
            fp_all += fp;
            fn_all += fn_;
        }
        let (p, r) = (
            tp_all as f64 / (tp_all + fp_all) as f64,
            tp_all as f64 / (tp_all + fn_all) as f64,
        );
        let brute = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
        let micro = micro_f1(&m).map_err(fail)?;
        ensure((micro - brute).abs() <= 1e-12, || {
            format!("case {case}: micro {micro} vs {brute}")
        })?;
        let accuracy = truth.iter().zip(&pred).filter(|(t, p)| t == p).count() as f64 / n as f64;
        ensure(micro == accuracy, || {
            format!("case {case}: micro {micro} != accuracy {accuracy}")
        })?;
    }
    Ok("100 random label sets, K <= 10, within 1e-12; micro-F1 == accuracy".into())
}

fn criterion_3() -> Check {
    let ramp = |len: usize| TrialRecording::new(1, 0, 1, Tensor::from_fn(&[len, 2], |i| i as f64));
    let full = segment(&ramp(20_000).map_err(fail)?, WINDOW, STRIDE).map_err(fail)?;
    ensure(full.len() == 39, || {
        format!("{} segments from 20000 samples", full.len())
    })?;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..200 {
        let (len, window, stride) = (rng.gen_range(1..3000), rng.gen_range(1..1200), rng.gen_range(1..600));
        let offsets: Vec<usize> = (0..len).filter(|o| o % stride == 0 && o + window <= len).collect();
        let count = segment_count(len, window, stride).unwrap_or(0);
        ensure(count == offsets.len(), || {
            format!("({len}, {window}, {stride}): {count} vs {}", offsets.len())
        })?;
        if let Ok(set) = segment(&ramp(len).map_err(fail)?, window, stride) {
            ensure(set.len() == offsets.len(), || {
                format!("({len}, {window}, {stride}) windows")
            })?;
            for (s, o) in set.segments.iter().zip(&offsets) {
                ensure(s.data()[0] == (2 * o) as f64, || {
                    format!("({len}, {window}, {stride}) offset {o}")
                })?;
            }
        }
    }
    Ok("20000/1000/500 -> 39 segments; 200 random triples match offset enumeration".into())
}

fn criterion_4() -> Check {
    let recs: Vec<TrialRecording> = (0..4)
        .map(|i| generate_synthetic_subject(i as u32 + 1, 6, 6, 4, SubjectProfile::cohort_member(i)))
        .collect::<Result<Vec<_>, _>>()
        .map_err(fail)?
        .concat();
    let plan = &plan_loso(&[1, 2, 3, 4]).map_err(fail)?[0];
    let train = select_split(&recs, plan, Role::Train, WINDOW, STRIDE).map_err(fail)?;
    let z = apply_standardizer(&fit_standardizer(&train).map_err(fail)?, &train).map_err(fail)?;
    let (mut worst_mean, mut worst_std) = (0.0f64, 0.0f64);
    for c in 0..2 {
        let v: Vec<f64> = z
            .segments
            .iter()
            .flat_map(|s| s.data().iter().skip(c).step_by(2).copied())
            .collect();
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let std = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
        worst_mean = worst_mean.max(mean.abs());
        worst_std = worst_std.max((std - 1.0).abs());
    }
    ensure(worst_mean < 1e-9 && worst_std < 1e-9, || {
        format!("|mean| {worst_mean:e}, |std-1| {worst_std:e}")
    })?;
    for role in [Role::Val, Role::Test, Role::Calib, Role::CalibVal, Role::AdaptTest] {
        let set = select_split(&recs, plan, role, WINDOW, STRIDE).map_err(fail)?;
        ensure(matches!(fit_standardizer(&set), Err(Error::Leakage(_))), || {
            format!("fit on {role} accepted")
        })?;
    }
    let mut mixed = train.clone();
    mixed.extend(select_split(&recs, plan, Role::Test, WINDOW, STRIDE).map_err(fail)?);
    ensure(fit_standardizer(&mixed).is_err(), || {
        "fit on train+test accepted".into()
    })?;
    Ok(format!(
        "train |mean| {worst_mean:.1e}, |std-1| {worst_std:.1e}; every evaluation role rejected"
    ))
}

fn criterion_5() -> Check {
    let start = Instant::now();
    let recs: Vec<TrialRecording> = (0..3)
        .map(|i| generate_synthetic_subject(i as u32 + 1, 6, 2, 5, SubjectProfile::cohort_member(i)))
        .collect::<Result<Vec<_>, _>>()
        .map_err(fail)?
        .concat();
    let trial = |t: u32, role: Role| -> Result<SegmentSet, String> {
        let picked: Vec<TrialRecording> = recs.iter().filter(|r| r.trial_index == t).cloned().collect();
        segment_all(&picked, WINDOW, STRIDE, role).map_err(fail)
    };
    let (train, val) = (trial(1, Role::Train)?, trial(2, Role::Val)?);
    let s = fit_standardizer(&train).map_err(fail)?;
    let (train, val) = (
        apply_standardizer(&s, &train).map_err(fail)?,
        apply_standardizer(&s, &val).map_err(fail)?,
    );
    let cfg = CsaeConfig::default();
    let mut ae = build_csae(&cfg, 5).map_err(fail)?;
    let log = train_autoencoder(&mut ae, &train, &val, &cfg.train, &WallClock::start()).map_err(fail)?;
    let r2 = reconstruct_r2(&ae, &train).map_err(fail)?;
    let secs = start.elapsed().as_secs_f64();
    let epochs = log.epochs.len();
    let detail = format!(
        "R2 {r2:.4} on {} training segments after {epochs} epochs, {secs:.0}s",
        train.len()
    );
    ensure(r2 >= 0.90 && epochs <= 300 && secs < 600.0, || detail.clone())?;
    Ok(detail)
}

fn criterion_6() -> Check {
    let rows = run_sweep(cohort(6), &desk_config(), &WallClock::start()).map_err(fail)?;
    let z: Vec<f64> = rows.iter().map(|r| r.mean_abs_z).collect();
    let lambdas: Vec<f64> = rows.iter().map(|r| r.lambda).collect();
    ensure(lambdas == [0.0, 1e-8, 1e-7, 1e-6, 1e-5, 1e-3], || {
        format!("lambdas {lambdas:?}")
    })?;
    let detail = format!(
        "mean |Z| {}",
        z.iter().map(|v| format!("{v:.4}")).collect::<Vec<_>>().join(" >= ")
    );
    ensure(z[5] < z[0], || format!("lambda 1e-3 not below lambda 0: {detail}"))?;
    ensure(z.windows(2).all(|w| w[1] <= w[0]), || format!("not monotone: {detail}"))?;
    Ok(detail)
}

fn loso() -> Result<&'static [FoldOutcome], String> {
    static RUN: OnceLock<Result<Vec<FoldOutcome>, String>> = OnceLock::new();
    RUN.get_or_init(|| {
        let mut cfg = desk_config();
        cfg.desk.max_folds = 0;
        run_loso(cohort(6), &cfg, &WallClock::start()).map_err(fail)
    })
    .as_deref()
    .map_err(Clone::clone)
}

fn criterion_7() -> Check {
    let folds = loso()?;
    ensure(folds.len() == 8, || format!("{} folds", folds.len()))?;
    let source: Vec<f64> = folds.iter().map(|f| f.source.micro_f1).collect();
    let min = source.iter().copied().fold(f64::INFINITY, f64::min);
    let mean = source.iter().sum::<f64>() / source.len() as f64;
    let detail = format!("held-out trial 6 micro-F1: mean {mean:.4}, min {min:.4} over 8 folds");
    ensure(min >= 0.95, || detail.clone())?;
    Ok(detail)
}

fn criterion_8() -> Check {
    let folds = loso()?;
    ensure(folds.len() == 8, || format!("{} folds", folds.len()))?;
    for f in folds {
        let (src, pre, post) = (f.source.micro_f1, f.pre_tune.micro_f1, f.post_tune.micro_f1);
        ensure(post > pre, || {
            format!("subject {}: post {post:.4} <= pre {pre:.4}", f.target)
        })?;
        ensure(pre <= src - 0.10, || {
            format!("subject {}: pre {pre:.4} vs source {src:.4}", f.target)
        })?;
    }
    let mean = |g: fn(&FoldOutcome) -> f64| folds.iter().map(g).sum::<f64>() / folds.len() as f64;
    Ok(format!(
        "pre-tune {:.3} -> post-tune {:.3} (mean), post > pre and pre <= source - 0.10 in all 8 folds",
        mean(|f| f.pre_tune.micro_f1),
        mean(|f| f.post_tune.micro_f1)
    ))
}

fn criterion_9() -> Check {
    let mut worst = 0.0f64;
    for seed in 0..20u64 {
        let ae = build_csae(&CsaeConfig::default(), seed).map_err(fail)?;
        let clf = build_classifier(&ae.encoder(), &ClassifierConfig::default(), seed).map_err(fail)?;
        let wide = expand_head(&clf, 10, seed + 1).map_err(fail)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let z = Tensor::from_fn(&[45, 8], |_| rng.gen_range(-3.0..3.0));
        let (old, new) = (
            clf.predict_latent(&z).map_err(fail)?,
            wide.predict_latent(&z).map_err(fail)?,
        );
        for c in 0..6 {
            worst = worst.max((old.logits.data()[c] - new.logits.data()[c]).abs());
        }
    }
    ensure(worst <= 1e-12, || format!("old-class logit drift {worst:e}"))?;

    let mut cfg = desk_config();
    cfg.classes = 10;
    cfg.desk.max_folds = 1;
    let folds = run_expansion(cohort(10), &cfg, &WallClock::start()).map_err(fail)?;
    let mut parts = Vec::new();
    for f in &folds {
        let (p1, p2) = (f.report.outcome.phase1.micro_f1, f.report.outcome.phase2.micro_f1);
        ensure(p2 >= p1, || {
            format!("subject {}: phase II {p2:.4} < phase I {p1:.4}", f.target)
        })?;
        let classes: Vec<usize> = f.report.forgetting.deltas.iter().map(|d| d.class).collect();
        ensure(classes == [0, 1, 2, 3, 4, 5], || {
            format!("forgetting report covers {classes:?}")
        })?;
        parts.push(format!("subject {}: phase I {p1:.4} -> phase II {p2:.4}", f.target));
    }
    Ok(format!(
        "logit drift {worst:.1e}; {}; 6 classes in forgetting report",
        parts.join(", ")
    ))
}

fn criterion_10() -> Check {
    let mut cfg = desk_config();
    cfg.desk.max_folds = 1;
    let folds = run_bench(cohort(6), &cfg, &WallClock::start()).map_err(fail)?;
    let dir = tempfile::tempdir().map_err(fail)?;
    let path = dir.path().join("table4.csv");
    csae::report::bench_table(&folds)
        .map_err(fail)?
        .write_csv(&path)
        .map_err(fail)?;
    let table = csae::report::Table::read_csv(&path).map_err(fail)?;
    ensure(table.rows.len() == BENCH_METHODS.len(), || {
        "table4 lacks methods".into()
    })?;
    for col in ["static_bytes", "runtime_bytes", "flops"] {
        ensure(table.column(col).is_some(), || format!("table4 lacks {col}"))?;
    }
    let mean = |m: &str| {
        let i = BENCH_METHODS.iter().position(|x| *x == m).expect("known method");
        folds.iter().map(|f| f[i].report.micro_f1).sum::<f64>() / folds.len() as f64
    };
    let fcae = mean("fcae_rf");
    let others = ["csae", "cae_lambda0", "classical_rf"];
    let detail = std::iter::once(("fcae_rf", fcae))
        .chain(others.iter().map(|m| (*m, mean(m))))
        .map(|(m, f)| format!("{m} {f:.4}"))
        .collect::<Vec<_>>()
        .join(", ");
    ensure(others.iter().all(|m| fcae < mean(m)), || {
        format!("FCAE not strictly lowest: {detail}")
    })?;
    Ok(format!("{} folds: {detail}", folds.len()))
}

/// Runs the CLI in-process with the settings file `config`.
fn cli_run(config: &Path, out: &Path, args: &[&str]) -> Result<(), String> {
    let mut argv: Vec<String> = ["csae", "--synthetic", "--seed", "11"].map(String::from).to_vec();
    argv.extend(["--config".to_string(), config.display().to_string()]);
    argv.extend(["--out".to_string(), out.display().to_string()]);
    argv.extend(args.iter().map(|s| s.to_string()));
    run(&Cli::try_parse_from(argv).map_err(fail)?).map_err(fail)
}

fn report_bytes(dir: &Path) -> Result<Vec<(String, Vec<u8>)>, String> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(fail)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv" || x == "ckpt"))
        .collect();
    files.sort();
    files
        .into_iter()
        .map(|p| {
            Ok((
                p.file_name().unwrap().to_string_lossy().into_owned(),
                std::fs::read(&p).map_err(fail)?,
            ))
        })
        .collect()
}

fn criterion_11() -> Check {
    let scratch = tempfile::tempdir().map_err(fail)?;
    let tiny = scratch.path().join("tiny.toml");
    let desk = std::fs::read_to_string(workspace_root().join("configs/desk.toml")).map_err(fail)?;
    let overrides = [
        "desk.max_folds = 1",
        "csae.train.max_epochs = 3",
        "classifier.train.max_epochs = 3",
        "finetune.train.max_epochs = 3",
    ];
    let key = |l: &str| l.split('=').next().unwrap_or("").trim().to_string();
    let keep = desk.lines().filter(|l| !overrides.iter().any(|o| key(o) == key(l)));
    let text: Vec<&str> = keep.chain(overrides).collect();
    std::fs::write(&tiny, text.join("\n") + "\n").map_err(fail)?;
    let dirs = [scratch.path().join("a"), scratch.path().join("b")];
    let mut compared = 0;
    for dir in &dirs {
        cli_run(&tiny, dir, &["--lambdas", "0,1e-3", "sweep-lambda"])?;
        cli_run(&tiny, dir, &["finetune"])?;
    }
    let (a, b) = (report_bytes(&dirs[0])?, report_bytes(&dirs[1])?);
    ensure(!a.is_empty() && a.len() == b.len(), || "report sets differ".into())?;
    for ((na, ba), (nb, bb)) in a.iter().zip(&b) {
        ensure(na == nb && ba == bb, || format!("{na} differs between identical runs"))?;
        compared += 1;
    }

    let mut cfg = desk_config();
    cfg.classifier.train.max_epochs = 5;
    cfg.csae.train.max_epochs = 5;
    cfg.finetune.max_epochs = 5;
    let c = cohort(6);
    let plan = &plan_loso(&c.subjects).map_err(fail)?[0];
    let outcome = run_fold(c, plan, &cfg, &WallClock::start()).map_err(fail)?;
    let ck = Checkpoint {
        graph: outcome.tuned.graph.clone(),
        standardizer: outcome.standardizer.clone(),
        class_names: csae_core::signal::CLASS_NAMES[..6]
            .iter()
            .map(|s| s.to_string())
            .collect(),
        seed: cfg.seed,
        lambda: cfg.csae.lambda,
    };
    let loaded = Checkpoint::from_bytes(&ck.to_bytes()).map_err(fail)?;
    let probe = select_split(&c.recordings, plan, Role::AdaptTest, WINDOW, STRIDE).map_err(fail)?;
    let probe = apply_standardizer(&outcome.standardizer, &probe.every_nth(25)).map_err(fail)?;
    // normwise: max |p - q| over max |p| for each output vector
    let (mut worst, mut worst_elem) = (0.0f64, 0.0f64);
    for x in &probe.segments {
        let (p, q) = (
            ck.graph.forward(x).map_err(fail)?,
            loaded.graph.forward(x).map_err(fail)?,
        );
        let scale = p.data().iter().fold(0.0f64, |m, u| m.max(u.abs()));
        for (u, v) in p.data().iter().zip(q.data()) {
            worst = worst.max((u - v).abs() / scale);
            worst_elem = worst_elem.max((u - v).abs() / u.abs().max(f64::MIN_POSITIVE));
        }
    }
    ensure(worst <= 1e-6, || format!("checkpoint forward drift {worst:e}"))?;
    Ok(format!(
        "{compared} report files byte-identical across reruns; checkpoint forward drift {worst:.1e} normwise \
         ({worst_elem:.1e} worst single element) on {} segments",
        probe.len()
    ))
}

type Criterion = (&'static str, fn() -> Check);

const CRITERIA: [Criterion; 11] = [
    ("gradient correctness", criterion_1),
    ("metric oracle equivalence", criterion_2),
    ("segmentation arithmetic", criterion_3),
    ("leakage guard", criterion_4),
    ("CSAE reconstruction", criterion_5),
    ("sparsity effect", criterion_6),
    ("end-to-end classification", criterion_7),
    ("adaptation ordering", criterion_8),
    ("expansion exactness and ordering", criterion_9),
    ("baseline ordering", criterion_10),
    ("determinism and persistence", criterion_11),
];

fn main() -> ExitCode {
    let wanted: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (i, (name, check)) in CRITERIA.iter().enumerate() {
        let n = i + 1;
        if !wanted.is_empty() && !wanted.contains(&n) {
            continue;
        }
        let start = Instant::now();
        let result = check();
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("criterion {n:>2} PASS  {name} ({secs:.0}s): {detail}"),
            Err(why) => {
                failed += 1;
                println!("criterion {n:>2} FAIL  {name} ({secs:.0}s): {why}");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
