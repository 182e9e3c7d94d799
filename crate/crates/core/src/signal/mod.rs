//! Recordings, segmentation, standardization and subject/trial partitioning.

mod segment;
mod split;
mod standardize;
pub mod synthetic;

use alloc::vec::Vec;

pub use segment::{segment, segment_all, segment_count};
pub use split::{plan_loso, select_split, Role, SplitPlan};
pub use standardize::{apply_standardizer, fit_standardizer, Standardizer};
pub use synthetic::{generate_synthetic_subject, SubjectProfile};

use crate::{Error, Result, Tensor};

pub const SAMPLE_RATE_HZ: f64 = 4000.0;
pub const CHANNELS: usize = 2;
/// 250 ms at 4 kHz.
pub const WINDOW: usize = 1000;
/// 125 ms at 4 kHz.
pub const STRIDE: usize = 500;

/// Movement labels in fixed index order; the first six form the 6-class set.
pub const CLASS_NAMES: [&str; 10] = [
    "hand-close",
    "thumb",
    "index",
    "middle",
    "ring",
    "little",
    "thumb-index",
    "thumb-middle",
    "thumb-ring",
    "thumb-little",
];

/// One continuous two-channel contraction.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecording {
    pub subject_id: u32,
    pub movement_class: usize,
    pub trial_index: u32,
    /// `[L × 2]`
    pub samples: Tensor,
}

impl TrialRecording {
    pub fn new(subject_id: u32, movement_class: usize, trial_index: u32, samples: Tensor) -> Result<Self> {
        let (_, c) = samples.dims2("trial recording")?;
        if c != CHANNELS {
            return Err(Error::ShapeMismatch {
                op: "trial recording",
                expected: alloc::vec![samples.shape()[0], CHANNELS],
                got: samples.shape().to_vec(),
            });
        }
        Ok(Self {
            subject_id,
            movement_class,
            trial_index,
            samples,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Provenance {
    pub subject: u32,
    pub trial: u32,
}

/// Labelled windows, each `[WINDOW × 2]`, with their source subject and trial.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentSet {
    pub segments: Vec<Tensor>,
    pub labels: Vec<usize>,
    pub provenance: Vec<Provenance>,
    pub role: Role,
}

impl SegmentSet {
    pub fn empty(role: Role) -> Self {
        Self {
            segments: Vec::new(),
            labels: Vec::new(),
            provenance: Vec::new(),
            role,
        }
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    /// Appends `other`. Merging a non-empty set of another role yields an
    /// `Unused` set, which no standardizer accepts as a fitting split.
    pub fn extend(&mut self, other: SegmentSet) {
        if other.role != self.role && !other.is_empty() {
            self.role = Role::Unused;
        }
        self.append_segments(other);
    }

    pub(crate) fn append_segments(&mut self, other: SegmentSet) {
        self.segments.extend(other.segments);
        self.labels.extend(other.labels);
        self.provenance.extend(other.provenance);
    }

    pub fn with_role(mut self, role: Role) -> Self {
        self.role = role;
        self
    }

    /// Subset by index, keeping order.
    pub fn subset(&self, idx: &[usize]) -> SegmentSet {
        SegmentSet {
            segments: idx.iter().map(|&i| self.segments[i].clone()).collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            provenance: idx.iter().map(|&i| self.provenance[i]).collect(),
            role: self.role,
        }
    }

    /// Every `step`-th segment, preserving order.
    pub fn every_nth(&self, step: usize) -> SegmentSet {
        let idx: Vec<usize> = (0..self.len()).step_by(step.max(1)).collect();
        self.subset(&idx)
    }

    /// The first `ceil(fraction * n_c)` segments of every class `c`.
    pub fn fraction_per_class(&self, fraction: f64) -> Result<SegmentSet> {
        if !(fraction > 0.0 && fraction <= 1.0) {
            return Err(Error::InvalidConfig("fraction must lie in (0, 1]".into()));
        }
        let classes = self.labels.iter().max().map_or(0, |m| m + 1);
        let mut keep = Vec::new();
        for c in 0..classes {
            let members: Vec<usize> = (0..self.len()).filter(|&i| self.labels[i] == c).collect();
            let n = libm::ceil(fraction * members.len() as f64) as usize;
            keep.extend_from_slice(&members[..n.min(members.len())]);
        }
        keep.sort_unstable();
        Ok(self.subset(&keep))
    }

    pub fn class_counts(&self, classes: usize) -> Vec<usize> {
        let mut counts = alloc::vec![0; classes];
        for &l in &self.labels {
            if l < classes {
                counts[l] += 1;
            }
        }
        counts
    }
}
