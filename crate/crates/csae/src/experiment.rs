//! Experiment protocols: leave-one-subject-out evaluation with user
//! calibration, class expansion, the λ sweep and the baseline comparison.

use csae_core::adaptation::{
    expand_head, finetune_user, forgetting_report, train_two_phase, ExpansionReport, ExpansionSplits,
};
use csae_core::baselines::{
    build_fcae, classical_feature_rows, forest_fit, forest_predict, gap_head_variant, latent_feature_rows,
    resource_report, ResourceReport,
};
use csae_core::classifier::{build_classifier, predict, train_classifier, Classifier, ClassifierConfig};
use csae_core::csae::{build_csae, sweep_lambda, train_autoencoder, Autoencoder, CsaeConfig, SweepData, SweepRow};
use csae_core::eval::{fold_report, FoldReport};
use csae_core::rng::derive_seed;
use csae_core::signal::{
    apply_standardizer, fit_standardizer, generate_synthetic_subject, plan_loso, select_split, Role, SegmentSet,
    SplitPlan, Standardizer, SubjectProfile, TrialRecording, CHANNELS, STRIDE, WINDOW,
};
use csae_core::train::{Clock, TrainLog};

use crate::config::RunConfig;
use crate::data::load_dir;
use crate::error::AppResult;

#[derive(Debug, Clone, PartialEq)]
pub struct Cohort {
    pub recordings: Vec<TrialRecording>,
    pub subjects: Vec<u32>,
}

impl Cohort {
    pub fn from_recordings(recordings: Vec<TrialRecording>) -> Self {
        let mut subjects: Vec<u32> = recordings.iter().map(|r| r.subject_id).collect();
        subjects.sort_unstable();
        subjects.dedup();
        Self { recordings, subjects }
    }

    /// Recordings of the first `classes` movements only.
    pub fn restricted(&self, classes: usize) -> Cohort {
        Cohort {
            recordings: self
                .recordings
                .iter()
                .filter(|r| r.movement_class < classes)
                .cloned()
                .collect(),
            subjects: self.subjects.clone(),
        }
    }
}

/// Subjects `1..=n`, six trials per class, each with its own gain/shift profile.
pub fn synthetic_cohort(subjects: usize, classes: usize, seed: u64) -> AppResult<Cohort> {
    let mut recs = Vec::new();
    for i in 0..subjects {
        recs.extend(generate_synthetic_subject(
            i as u32 + 1,
            classes,
            6,
            seed,
            SubjectProfile::cohort_member(i),
        )?);
    }
    Ok(Cohort::from_recordings(recs))
}

pub fn load_cohort(cfg: &RunConfig) -> AppResult<Cohort> {
    match &cfg.data_dir {
        Some(dir) => Ok(Cohort::from_recordings(load_dir(dir)?)),
        None => synthetic_cohort(cfg.synthetic_subjects, cfg.classes, cfg.seed),
    }
}

/// Standardized splits of one fold.
#[derive(Debug, Clone)]
pub struct FoldSplits {
    pub target: u32,
    pub standardizer: Standardizer,
    pub train: SegmentSet,
    pub val: SegmentSet,
    pub test: SegmentSet,
    pub calib: SegmentSet,
    pub calib_val: SegmentSet,
    pub adapt_test: SegmentSet,
}

impl FoldSplits {
    /// Splits for `plan`, standardized with statistics from its train split.
    pub fn prepare(cohort: &Cohort, plan: &SplitPlan, cfg: &RunConfig) -> AppResult<Self> {
        let train = select_split(&cohort.recordings, plan, Role::Train, WINDOW, STRIDE)?;
        let s = fit_standardizer(&train)?;
        Self::with_standardizer(cohort, plan, cfg, s)
    }

    /// Splits standardized with externally fitted statistics.
    pub fn with_standardizer(cohort: &Cohort, plan: &SplitPlan, cfg: &RunConfig, s: Standardizer) -> AppResult<Self> {
        let pick = |role: Role| -> AppResult<SegmentSet> {
            let raw = select_split(&cohort.recordings, plan, role, WINDOW, STRIDE)?;
            Ok(apply_standardizer(&s, &raw)?)
        };
        let eval = |set: SegmentSet| set.every_nth(cfg.desk.eval_step);
        Ok(Self {
            target: plan.target_subject,
            train: pick(Role::Train)?,
            val: eval(pick(Role::Val)?),
            test: eval(pick(Role::Test)?),
            calib: pick(Role::Calib)?.fraction_per_class(cfg.calib_fraction)?,
            calib_val: pick(Role::CalibVal)?,
            adapt_test: eval(pick(Role::AdaptTest)?),
            standardizer: s,
        })
    }
}

pub fn fold_plans(cohort: &Cohort, cfg: &RunConfig) -> AppResult<Vec<SplitPlan>> {
    let mut plans = plan_loso(&cohort.subjects)?;
    if cfg.desk.max_folds > 0 {
        plans.truncate(cfg.desk.max_folds);
    }
    Ok(plans)
}

fn fold_seed(cfg: &RunConfig, target: u32) -> u64 {
    derive_seed(cfg.seed, target as u64)
}

pub fn evaluate(clf: &Classifier, fold_id: u32, set: &SegmentSet) -> AppResult<FoldReport> {
    let predicted: Vec<usize> = predict(clf, set)?.iter().map(|p| p.argmax).collect();
    Ok(fold_report(fold_id, &set.labels, &predicted, clf.num_classes)?)
}

fn classifier_config(cfg: &RunConfig, classes: usize) -> ClassifierConfig {
    ClassifierConfig {
        num_classes: classes,
        ..cfg.classifier
    }
}

/// Autoencoder plus a classifier on its frozen encoder, trained on one fold.
#[derive(Debug, Clone)]
pub struct SourceModel {
    pub autoencoder: Autoencoder,
    pub classifier: Classifier,
    pub ae_log: TrainLog,
    pub clf_log: TrainLog,
}

pub fn train_source_model(
    splits: &FoldSplits,
    csae: &CsaeConfig,
    clf_cfg: &ClassifierConfig,
    cfg: &RunConfig,
    seed: u64,
    clock: &dyn Clock,
) -> AppResult<SourceModel> {
    let mut ae = build_csae(csae, seed)?;
    let ae_train = splits.train.every_nth(cfg.desk.ae_train_step);
    let ae_log = train_autoencoder(&mut ae, &ae_train, &splits.val, &csae.train, clock)?;
    let mut clf = build_classifier(&ae.encoder(), clf_cfg, derive_seed(seed, 1))?;
    let clf_train = splits.train.every_nth(cfg.desk.clf_train_step);
    let clf_log = train_classifier(&mut clf, &clf_train, &splits.val, &clf_cfg.train, clock)?;
    Ok(SourceModel {
        autoencoder: ae,
        classifier: clf,
        ae_log,
        clf_log,
    })
}

#[derive(Debug, Clone)]
pub struct FoldOutcome {
    pub target: u32,
    /// Source subjects' held-out trial.
    pub source: FoldReport,
    /// Target subject before and after calibration.
    pub pre_tune: FoldReport,
    pub post_tune: FoldReport,
    pub model: SourceModel,
    pub tuned: Classifier,
    pub finetune_log: TrainLog,
    pub standardizer: Standardizer,
}

pub fn run_fold(cohort: &Cohort, plan: &SplitPlan, cfg: &RunConfig, clock: &dyn Clock) -> AppResult<FoldOutcome> {
    let splits = FoldSplits::prepare(cohort, plan, cfg)?;
    let seed = fold_seed(cfg, splits.target);
    let clf_cfg = classifier_config(cfg, cfg.classes);
    let model = train_source_model(&splits, &cfg.csae, &clf_cfg, cfg, seed, clock)?;
    let t = splits.target;
    let source = evaluate(&model.classifier, t, &splits.test)?;
    let pre_tune = evaluate(&model.classifier, t, &splits.adapt_test)?;
    let mut tuned = model.classifier.clone();
    let finetune_log = finetune_user(
        &mut tuned,
        &splits.calib,
        &splits.calib_val,
        cfg.policy,
        &cfg.finetune,
        clock,
    )?;
    let post_tune = evaluate(&tuned, t, &splits.adapt_test)?;
    Ok(FoldOutcome {
        target: t,
        source,
        pre_tune,
        post_tune,
        model,
        tuned,
        finetune_log,
        standardizer: splits.standardizer,
    })
}

pub fn run_loso(cohort: &Cohort, cfg: &RunConfig, clock: &dyn Clock) -> AppResult<Vec<FoldOutcome>> {
    let cohort = cohort.restricted(cfg.classes);
    fold_plans(&cohort, cfg)?
        .iter()
        .map(|plan| run_fold(&cohort, plan, cfg, clock))
        .collect()
}

#[derive(Debug, Clone)]
pub struct ExpansionFold {
    pub target: u32,
    pub report: ExpansionReport,
    pub before: Classifier,
    pub after: Classifier,
}

/// Trains a 6-class model on the source subjects, widens it to 10 classes and
/// retrains in two phases on the source subjects' 10-class recordings.
pub fn run_expansion(cohort: &Cohort, cfg: &RunConfig, clock: &dyn Clock) -> AppResult<Vec<ExpansionFold>> {
    let six = cohort.restricted(6);
    fold_plans(cohort, cfg)?
        .iter()
        .map(|plan| {
            let s6 = FoldSplits::prepare(&six, plan, cfg)?;
            let s10 = FoldSplits::with_standardizer(cohort, plan, cfg, s6.standardizer.clone())?;
            let seed = fold_seed(cfg, s6.target);
            let model = train_source_model(&s6, &cfg.csae, &classifier_config(cfg, 6), cfg, seed, clock)?;
            let mut clf10 = expand_head(&model.classifier, 10, derive_seed(seed, 2))?;
            let train10 = s10.train.every_nth(cfg.desk.clf_train_step);
            let splits = ExpansionSplits {
                train: &train10,
                val: &s10.val,
                test: Some(&s10.test),
            };
            let outcome = train_two_phase(&mut clf10, &splits, &cfg.phase1, &cfg.phase2, s6.target, clock)?;
            let forgetting = forgetting_report(&model.classifier, &clf10, &s6.test)?;
            Ok(ExpansionFold {
                target: s6.target,
                report: ExpansionReport { outcome, forgetting },
                before: model.classifier,
                after: clf10,
            })
        })
        .collect()
}

/// λ sweep on the first fold's source splits.
pub fn run_sweep(cohort: &Cohort, cfg: &RunConfig, clock: &dyn Clock) -> AppResult<Vec<SweepRow>> {
    let cohort = cohort.restricted(cfg.classes);
    let plan = fold_plans(&cohort, cfg)?.remove(0);
    let s = FoldSplits::prepare(&cohort, &plan, cfg)?;
    let ae_train = s.train.every_nth(cfg.desk.ae_train_step);
    let train = s.train.every_nth(cfg.desk.clf_train_step);
    let data = SweepData {
        ae_train: &ae_train,
        train: &train,
        val: &s.val,
        test: &s.test,
    };
    Ok(sweep_lambda(
        &cfg.lambdas,
        &data,
        &cfg.csae,
        &classifier_config(cfg, cfg.classes),
        fold_seed(cfg, s.target),
        clock,
    )?)
}

/// One comparison method's score on one fold plus its costs.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub method: &'static str,
    pub report: FoldReport,
    pub resources: ResourceReport,
}

pub const BENCH_METHODS: [&str; 5] = ["csae", "cae_lambda0", "csae_gap", "classical_rf", "fcae_rf"];

fn forest_resources(model: &csae_core::baselines::ForestModel, feature_flops: u64, input: usize) -> ResourceReport {
    let depth = model.config.max_depth as u64;
    ResourceReport {
        params: model.node_count(),
        static_bytes: model.serialized_bytes(),
        runtime_bytes: 4 * (input + model.features),
        flops: feature_flops + model.trees.len() as u64 * depth,
    }
}

/// Every baseline on the source splits of each fold, in [`BENCH_METHODS`] order.
pub fn run_bench(cohort: &Cohort, cfg: &RunConfig, clock: &dyn Clock) -> AppResult<Vec<Vec<BenchRow>>> {
    let cohort = cohort.restricted(cfg.classes);
    let clf_cfg = classifier_config(cfg, cfg.classes);
    let input = [WINDOW, CHANNELS];
    fold_plans(&cohort, cfg)?
        .iter()
        .map(|plan| {
            let s = FoldSplits::prepare(&cohort, plan, cfg)?;
            let t = s.target;
            let seed = fold_seed(cfg, t);
            let mut rows = Vec::new();

            let csae = train_source_model(&s, &cfg.csae, &clf_cfg, cfg, seed, clock)?;
            rows.push(BenchRow {
                method: BENCH_METHODS[0],
                report: evaluate(&csae.classifier, t, &s.test)?,
                resources: resource_report(&csae.classifier.graph, &input)?,
            });

            let cae_cfg = CsaeConfig {
                lambda: 0.0,
                ..cfg.csae
            };
            let cae = train_source_model(&s, &cae_cfg, &clf_cfg, cfg, seed, clock)?;
            rows.push(BenchRow {
                method: BENCH_METHODS[1],
                report: evaluate(&cae.classifier, t, &s.test)?,
                resources: resource_report(&cae.classifier.graph, &input)?,
            });

            let mut gap = gap_head_variant(&csae.autoencoder.encoder(), &clf_cfg, derive_seed(seed, 1))?;
            let clf_train = s.train.every_nth(cfg.desk.clf_train_step);
            train_classifier(&mut gap, &clf_train, &s.val, &clf_cfg.train, clock)?;
            rows.push(BenchRow {
                method: BENCH_METHODS[2],
                report: evaluate(&gap, t, &s.test)?,
                resources: resource_report(&gap.graph, &input)?,
            });

            let forest_cfg = csae_core::baselines::ForestConfig {
                seed: derive_seed(seed, 3),
                ..cfg.forest
            };
            let feats = classical_feature_rows(&clf_train)?;
            let forest = forest_fit(&feats, &clf_train.labels, &forest_cfg)?;
            let pred = forest_predict(&forest, &classical_feature_rows(&s.test)?)?;
            // six features on two channels: about 15 operations per sample
            let feature_flops = 15 * (WINDOW * CHANNELS) as u64;
            rows.push(BenchRow {
                method: BENCH_METHODS[3],
                report: fold_report(t, &s.test.labels, &pred, cfg.classes)?,
                resources: forest_resources(&forest, feature_flops, WINDOW * CHANNELS),
            });

            let mut fcae = build_fcae(
                &cfg.fcae_hidden,
                cfg.fcae_latent,
                cfg.csae.alpha,
                0.0,
                derive_seed(seed, 4),
            )?;
            let ae_train = s.train.every_nth(cfg.desk.ae_train_step);
            train_autoencoder(&mut fcae, &ae_train, &s.val, &cfg.fcae_train, clock)?;
            let feats = latent_feature_rows(&fcae, &clf_train)?;
            let forest = forest_fit(&feats, &clf_train.labels, &forest_cfg)?;
            let pred = forest_predict(&forest, &latent_feature_rows(&fcae, &s.test)?)?;
            let enc = resource_report(&fcae.encoder(), &input)?;
            let trees = forest_resources(&forest, enc.flops, 0);
            rows.push(BenchRow {
                method: BENCH_METHODS[4],
                report: fold_report(t, &s.test.labels, &pred, cfg.classes)?,
                resources: ResourceReport {
                    params: enc.params + trees.params,
                    static_bytes: enc.static_bytes + trees.static_bytes,
                    runtime_bytes: enc.runtime_bytes.max(trees.runtime_bytes),
                    flops: trees.flops,
                },
            });
            Ok(rows)
        })
        .collect()
}
