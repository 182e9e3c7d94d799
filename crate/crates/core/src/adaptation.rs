//! Few-shot user calibration and incremental class expansion.

use alloc::format;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::classifier::{extract_latent, predict, train_on_latents, Classifier};
use crate::eval::{fold_report, per_class_prf, ConfusionMatrix, FoldReport};
use crate::nn::{he_normal, LayerGroup, LayerKind};
use crate::signal::{Role, SegmentSet};
use crate::train::{Clock, TrainConfig, TrainLog};
use crate::{Error, Result, Tensor};

pub const FINETUNE_LR: f64 = 1e-4;
pub const PHASE2_LR: f64 = 1e-5;

/// Which layer groups may change during adaptation. The encoder never does.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FreezePolicy {
    /// The MLP and the output dense.
    FinalDenseOnly,
    /// Everything after the encoder.
    FullHead,
    /// The output dense alone.
    NewOutputOnly,
}

impl FreezePolicy {
    pub fn name(self) -> &'static str {
        match self {
            FreezePolicy::FinalDenseOnly => "final_dense_only",
            FreezePolicy::FullHead => "full_head",
            FreezePolicy::NewOutputOnly => "new_output_only",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        [Self::FinalDenseOnly, Self::FullHead, Self::NewOutputOnly]
            .into_iter()
            .find(|p| p.name() == s)
    }

    pub fn permits(self, group: LayerGroup) -> bool {
        use LayerGroup::*;
        match self {
            FreezePolicy::FinalDenseOnly => matches!(group, Mlp | Output),
            FreezePolicy::FullHead => matches!(group, Head | Mlp | Output),
            FreezePolicy::NewOutputOnly => group == Output,
        }
    }

    pub fn apply(self, clf: &mut Classifier) {
        clf.graph.set_trainable(|l| self.permits(l.group));
    }
}

pub fn finetune_config(base: &TrainConfig) -> TrainConfig {
    TrainConfig {
        learning_rate: FINETUNE_LR,
        min_lr: base.min_lr.min(FINETUNE_LR),
        ..*base
    }
}

fn check_calibration(set: &SegmentSet, role: Role, trial: u32, subject: Option<u32>) -> Result<u32> {
    if set.is_empty() {
        return Err(Error::EmptyInput("calibration split"));
    }
    if set.role != role {
        return Err(Error::Leakage(format!("expected a {role} split, got {}", set.role)));
    }
    let subject = subject.unwrap_or(set.provenance[0].subject);
    if let Some(p) = set.provenance.iter().find(|p| p.subject != subject || p.trial != trial) {
        return Err(Error::Leakage(format!(
            "{role} split may only hold subject {subject} trial {trial}, found subject {} trial {}",
            p.subject, p.trial
        )));
    }
    Ok(subject)
}

/// Tunes `clf` in place on one target subject's calibration trials.
/// Only layers permitted by `policy` change; the batch shrinks to the
/// calibration size when that is smaller.
pub fn finetune_user(
    clf: &mut Classifier,
    calib: &SegmentSet,
    calib_val: &SegmentSet,
    policy: FreezePolicy,
    config: &TrainConfig,
    clock: &dyn Clock,
) -> Result<TrainLog> {
    let subject = check_calibration(calib, Role::Calib, 1, None)?;
    check_calibration(calib_val, Role::CalibVal, 2, Some(subject))?;
    let counts = calib.class_counts(clf.num_classes);
    if let Some(class) = counts.iter().position(|&c| c == 0) {
        return Err(Error::MissingClass { class });
    }
    policy.apply(clf);
    let cfg = TrainConfig {
        batch_size: config.batch_size.min(calib.len()),
        ..*config
    };
    let train_z = extract_latent(clf, calib)?;
    let val_z = extract_latent(clf, calib_val)?;
    train_on_latents(clf, &train_z, &val_z, &cfg, clock)
}

/// Widens the output dense to `new_classes` units. Columns of the old classes
/// are copied bit for bit; the new columns are He-normal with zero bias.
pub fn expand_head(clf: &Classifier, new_classes: usize, seed: u64) -> Result<Classifier> {
    if new_classes <= clf.num_classes {
        return Err(Error::InvalidConfig(format!(
            "expansion must add classes: {} -> {new_classes}",
            clf.num_classes
        )));
    }
    let idx = clf
        .graph
        .layers
        .iter()
        .rposition(|l| l.group == LayerGroup::Output && l.spec.kind == LayerKind::Dense)
        .ok_or_else(|| Error::InvalidConfig("classifier has no output dense layer".into()))?;
    let mut out = clf.clone();
    let layer = &mut out.graph.layers[idx];
    let old = layer.params.as_ref().expect("dense layers carry parameters");
    let (f_in, k_old) = old.weight.dims2("expand_head")?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fresh = he_normal(&[f_in, new_classes - k_old], f_in, &mut rng)?;
    let k_new = new_classes;
    let weight = Tensor::from_fn(&[f_in, k_new], |i| {
        let (r, c) = (i / k_new, i % k_new);
        if c < k_old {
            old.weight.data()[r * k_old + c]
        } else {
            fresh.data()[r * (k_new - k_old) + c - k_old]
        }
    });
    let bias = Tensor::from_fn(&[k_new], |c| if c < k_old { old.bias.data()[c] } else { 0.0 });
    layer.params = Some(crate::nn::Params { weight, bias });
    layer.spec.out_channels = k_new;
    out.num_classes = k_new;
    Ok(out)
}

fn evaluate(clf: &Classifier, fold_id: u32, set: &SegmentSet) -> Result<FoldReport> {
    let predicted: Vec<usize> = predict(clf, set)?.iter().map(|p| p.argmax).collect();
    fold_report(fold_id, &set.labels, &predicted, clf.num_classes)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TwoPhaseOutcome {
    /// Scores on the validation split after each phase.
    pub phase1: FoldReport,
    pub phase2: FoldReport,
    pub phase1_test: Option<FoldReport>,
    pub phase2_test: Option<FoldReport>,
    pub phase1_log: TrainLog,
    pub phase2_log: TrainLog,
    /// Validation loss of the weights Phase II started from.
    pub phase2_start_loss: f64,
}

pub struct ExpansionSplits<'a> {
    pub train: &'a SegmentSet,
    pub val: &'a SegmentSet,
    pub test: Option<&'a SegmentSet>,
}

/// Phase I trains the output layer alone and keeps its best weights; Phase II
/// continues from there with the whole head unfrozen at a lower rate.
pub fn train_two_phase(
    clf: &mut Classifier,
    splits: &ExpansionSplits<'_>,
    phase1: &TrainConfig,
    phase2: &TrainConfig,
    fold_id: u32,
    clock: &dyn Clock,
) -> Result<TwoPhaseOutcome> {
    if !(phase2.learning_rate < phase1.learning_rate) {
        return Err(Error::InvalidConfig(
            "phase II learning rate must be below phase I".into(),
        ));
    }
    let train_z = extract_latent(clf, splits.train)?;
    let val_z = extract_latent(clf, splits.val)?;
    FreezePolicy::NewOutputOnly.apply(clf);
    let phase1_log = train_on_latents(clf, &train_z, &val_z, phase1, clock)?;
    let p1 = evaluate(clf, fold_id, splits.val)?;
    let p1_test = splits.test.map(|t| evaluate(clf, fold_id, t)).transpose()?;
    let phase2_start_loss = clf.mean_latent_loss(&val_z)?;
    FreezePolicy::FullHead.apply(clf);
    let phase2_log = train_on_latents(clf, &train_z, &val_z, phase2, clock)?;
    let p2 = evaluate(clf, fold_id, splits.val)?;
    let p2_test = splits.test.map(|t| evaluate(clf, fold_id, t)).transpose()?;
    Ok(TwoPhaseOutcome {
        phase1: p1,
        phase2: p2,
        phase1_test: p1_test,
        phase2_test: p2_test,
        phase1_log,
        phase2_log,
        phase2_start_loss,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassDelta {
    pub class: usize,
    pub f1_before: f64,
    pub f1_after: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForgettingReport {
    /// One row per original class.
    pub deltas: Vec<ClassDelta>,
    /// Rows of the expanded model's confusion matrix for the original classes.
    pub confusion_rows: Vec<Vec<u64>>,
}

/// Per-class F1 on original-class test data before and after expansion.
pub fn forgetting_report(before: &Classifier, after: &Classifier, test: &SegmentSet) -> Result<ForgettingReport> {
    let k_old = before.num_classes;
    let cm_of = |clf: &Classifier| -> Result<ConfusionMatrix> {
        let predicted: Vec<usize> = predict(clf, test)?.iter().map(|p| p.argmax).collect();
        ConfusionMatrix::from_labels(&test.labels, &predicted, clf.num_classes)
    };
    let cm_before = cm_of(before)?;
    let cm_after = cm_of(after)?;
    let f_before = per_class_prf(&cm_before);
    let f_after = per_class_prf(&cm_after);
    Ok(ForgettingReport {
        deltas: (0..k_old)
            .map(|class| ClassDelta {
                class,
                f1_before: f_before[class].f1,
                f1_after: f_after[class].f1,
            })
            .collect(),
        confusion_rows: (0..k_old).map(|c| cm_after.row(c).to_vec()).collect(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExpansionReport {
    pub outcome: TwoPhaseOutcome,
    pub forgetting: ForgettingReport,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::{build_classifier, ClassifierConfig};
    use crate::csae::{build_csae, CsaeConfig};

    fn clf6() -> Classifier {
        let ae = build_csae(&CsaeConfig::default(), 2).unwrap();
        build_classifier(&ae.encoder(), &ClassifierConfig::default(), 4).unwrap()
    }

    #[test]
    fn expansion_copies_old_logits() {
        let c6 = clf6();
        let c10 = expand_head(&c6, 10, 9).unwrap();
        assert_eq!(c10.num_classes, 10);
        let z = Tensor::from_fn(&[45, 8], |i| libm::sin(i as f64));
        let a = c6.predict_latent(&z).unwrap();
        let b = c10.predict_latent(&z).unwrap();
        for c in 0..6 {
            assert!((a.logits.data()[c] - b.logits.data()[c]).abs() <= 1e-12);
        }
        assert_eq!(expand_head(&c6, 10, 9).unwrap(), c10);
        assert!(expand_head(&c6, 6, 9).is_err());
    }

    #[test]
    fn policies_never_train_encoder() {
        for p in [
            FreezePolicy::FinalDenseOnly,
            FreezePolicy::FullHead,
            FreezePolicy::NewOutputOnly,
        ] {
            let mut c = clf6();
            p.apply(&mut c);
            for l in &c.graph.layers {
                if l.group == LayerGroup::Encoder {
                    assert!(!l.spec.trainable);
                }
            }
            assert_eq!(FreezePolicy::from_name(p.name()), Some(p));
        }
        let mut c = clf6();
        FreezePolicy::FinalDenseOnly.apply(&mut c);
        let conv = c.graph.index_of("head_conv").unwrap();
        assert!(!c.graph.layers[conv].spec.trainable);
        assert!(c.graph.layers[c.graph.index_of("mlp1").unwrap()].spec.trainable);
    }
}
