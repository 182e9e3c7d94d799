use alloc::collections::BTreeSet;
use alloc::format;

use super::{Provenance, Role, SegmentSet, CHANNELS};
use crate::{Error, Result, Tensor};

pub const STD_FLOOR: f64 = 1e-8;

/// Per-channel z-scoring learned from a training split.
///
/// `Default` is the unfitted state and refuses to transform anything.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Standardizer {
    pub mean: [f64; CHANNELS],
    pub std: [f64; CHANNELS],
    /// Recordings the statistics were computed from.
    pub fitted_on: BTreeSet<Provenance>,
}

impl Standardizer {
    /// Statistics supplied from outside (e.g. a checkpoint); no provenance.
    pub fn from_stats(mean: [f64; CHANNELS], std: [f64; CHANNELS]) -> Self {
        Self {
            mean,
            std,
            fitted_on: BTreeSet::new(),
        }
    }

    pub fn is_fitted(&self) -> bool {
        self.std.iter().all(|s| s.is_finite() && *s > 0.0) && self.mean.iter().all(|m| m.is_finite())
    }

    pub fn transform(&self, segment: &Tensor) -> Result<Tensor> {
        if !self.is_fitted() {
            return Err(Error::InvalidConfig("standardizer has not been fitted".into()));
        }
        let (_, c) = segment.dims2("standardize")?;
        if c != CHANNELS {
            return Err(Error::ShapeMismatch {
                op: "standardize",
                expected: alloc::vec![segment.shape()[0], CHANNELS],
                got: segment.shape().to_vec(),
            });
        }
        Ok(Tensor::from_fn(segment.shape(), |i| {
            let ch = i % CHANNELS;
            (segment.data()[i] - self.mean[ch]) / self.std[ch]
        }))
    }
}

/// Population mean and standard deviation per channel over every training sample.
pub fn fit_standardizer(train: &SegmentSet) -> Result<Standardizer> {
    if train.role != Role::Train {
        return Err(Error::Leakage(format!(
            "standardizer may only be fitted on a train split, got {}",
            train.role
        )));
    }
    if train.is_empty() {
        return Err(Error::EmptyInput("fit_standardizer"));
    }
    let mut sum = [0.0; CHANNELS];
    let mut count = 0usize;
    for seg in &train.segments {
        for row in seg.data().chunks_exact(CHANNELS) {
            for c in 0..CHANNELS {
                sum[c] += row[c];
            }
            count += 1;
        }
    }
    let mean = sum.map(|s| s / count as f64);
    let mut sq = [0.0; CHANNELS];
    for seg in &train.segments {
        for row in seg.data().chunks_exact(CHANNELS) {
            for c in 0..CHANNELS {
                sq[c] += (row[c] - mean[c]) * (row[c] - mean[c]);
            }
        }
    }
    let std = sq.map(|s| libm::sqrt(s / count as f64).max(STD_FLOOR));
    Ok(Standardizer {
        mean,
        std,
        fitted_on: train.provenance.iter().copied().collect(),
    })
}

/// Transforms a split; rejects evaluation splits that share recordings with
/// the fitting split.
pub fn apply_standardizer(s: &Standardizer, set: &SegmentSet) -> Result<SegmentSet> {
    if set.role != Role::Train {
        if let Some(p) = set.provenance.iter().find(|p| s.fitted_on.contains(p)) {
            return Err(Error::Leakage(format!(
                "{} split contains subject {} trial {}, which the standardizer was fitted on",
                set.role, p.subject, p.trial
            )));
        }
    }
    let segments = set.segments.iter().map(|x| s.transform(x)).collect::<Result<_>>()?;
    Ok(SegmentSet {
        segments,
        labels: set.labels.clone(),
        provenance: set.provenance.clone(),
        role: set.role,
    })
}
