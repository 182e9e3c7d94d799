use alloc::vec::Vec;

use super::{Provenance, Role, SegmentSet, TrialRecording, CHANNELS};
use crate::{Error, Result, Tensor};

/// `floor((len - window) / stride) + 1`, or `None` when the window does not fit.
pub fn segment_count(len: usize, window: usize, stride: usize) -> Option<usize> {
    if window == 0 || stride == 0 || len < window {
        None
    } else {
        Some((len - window) / stride + 1)
    }
}

/// Sliding windows at offsets `0, stride, 2*stride, ...` that fit inside the trial.
pub fn segment(recording: &TrialRecording, window: usize, stride: usize) -> Result<SegmentSet> {
    let len = recording.len();
    let count = segment_count(len, window, stride).ok_or(Error::TooShort {
        op: "segment",
        len,
        required: window,
    })?;
    let data = recording.samples.data();
    let mut set = SegmentSet::empty(Role::Unused);
    for i in 0..count {
        let off = i * stride * CHANNELS;
        let seg = Tensor::new(
            alloc::vec![window, CHANNELS],
            data[off..off + window * CHANNELS].to_vec(),
        )?;
        set.segments.push(seg);
        set.labels.push(recording.movement_class);
        set.provenance.push(Provenance {
            subject: recording.subject_id,
            trial: recording.trial_index,
        });
    }
    Ok(set)
}

/// Segments every recording and concatenates in input order.
pub fn segment_all(recordings: &[TrialRecording], window: usize, stride: usize, role: Role) -> Result<SegmentSet> {
    let mut out = SegmentSet::empty(role);
    let parts: Result<Vec<_>> = recordings.iter().map(|r| segment(r, window, stride)).collect();
    for p in parts? {
        out.append_segments(p);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(len: usize) -> TrialRecording {
        let t = Tensor::from_fn(&[len, 2], |i| i as f64);
        TrialRecording::new(3, 4, 2, t).unwrap()
    }

    #[test]
    fn five_second_trial_gives_39() {
        let s = segment(&rec(20_000), 1000, 500).unwrap();
        assert_eq!(s.len(), 39);
        assert!(s.labels.iter().all(|&l| l == 4));
        assert!(s.provenance.iter().all(|p| p.subject == 3 && p.trial == 2));
        // last window starts at sample 19000
        assert_eq!(s.segments[38].data()[0], (19_000 * 2) as f64);
    }

    #[test]
    fn boundaries() {
        assert_eq!(segment(&rec(1000), 1000, 500).unwrap().len(), 1);
        assert!(matches!(segment(&rec(999), 1000, 500), Err(Error::TooShort { .. })));
    }
}
