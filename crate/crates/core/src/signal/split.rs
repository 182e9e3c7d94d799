use alloc::collections::BTreeMap;
use alloc::vec::Vec;
use core::fmt;

use super::{segment_all, SegmentSet, TrialRecording};
use crate::{Error, Result};

/// Role of a `(subject, trial)` pair within one leave-one-subject-out fold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Role {
    Train,
    Val,
    Test,
    Calib,
    CalibVal,
    AdaptTest,
    Unused,
}

impl Role {
    pub fn name(self) -> &'static str {
        match self {
            Role::Train => "train",
            Role::Val => "val",
            Role::Test => "test",
            Role::Calib => "calib",
            Role::CalibVal => "calib_val",
            Role::AdaptTest => "adapt_test",
            Role::Unused => "unused",
        }
    }

    pub fn is_target(self) -> bool {
        matches!(self, Role::Calib | Role::CalibVal | Role::AdaptTest)
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

pub const TRIALS: u32 = 6;

fn source_role(trial: u32) -> Role {
    match trial {
        1..=4 => Role::Train,
        5 => Role::Val,
        6 => Role::Test,
        _ => Role::Unused,
    }
}

fn target_role(trial: u32) -> Role {
    match trial {
        1 => Role::Calib,
        2 => Role::CalibVal,
        3..=6 => Role::AdaptTest,
        _ => Role::Unused,
    }
}

/// One fold: a held-out target subject and the source cohort.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitPlan {
    pub target_subject: u32,
    pub source_subjects: Vec<u32>,
    pub roles: BTreeMap<(u32, u32), Role>,
}

impl SplitPlan {
    /// Role of a recording; trials outside 1..=6 and unknown subjects are unused.
    pub fn role_of(&self, subject: u32, trial: u32) -> Role {
        self.roles.get(&(subject, trial)).copied().unwrap_or(Role::Unused)
    }
}

/// One plan per subject, each subject the target exactly once.
pub fn plan_loso(subject_ids: &[u32]) -> Result<Vec<SplitPlan>> {
    if subject_ids.len() < 2 {
        return Err(Error::InvalidConfig(
            "leave-one-subject-out needs at least two subjects".into(),
        ));
    }
    let mut seen = alloc::collections::BTreeSet::new();
    for &s in subject_ids {
        if !seen.insert(s) {
            return Err(Error::DuplicateSubject(s));
        }
    }
    Ok(subject_ids
        .iter()
        .map(|&target| {
            let source_subjects: Vec<u32> = subject_ids.iter().copied().filter(|&s| s != target).collect();
            let mut roles = BTreeMap::new();
            for &s in subject_ids {
                for trial in 1..=TRIALS {
                    let role = if s == target {
                        target_role(trial)
                    } else {
                        source_role(trial)
                    };
                    roles.insert((s, trial), role);
                }
            }
            SplitPlan {
                target_subject: target,
                source_subjects,
                roles,
            }
        })
        .collect())
}

/// Segments every recording assigned `role` by the plan.
pub fn select_split(
    recordings: &[TrialRecording],
    plan: &SplitPlan,
    role: Role,
    window: usize,
    stride: usize,
) -> Result<SegmentSet> {
    let picked: Vec<TrialRecording> = recordings
        .iter()
        .filter(|r| plan.role_of(r.subject_id, r.trial_index) == role)
        .cloned()
        .collect();
    segment_all(&picked, window, stride, role)
}
