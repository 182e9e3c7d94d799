//! Window counts and offsets against explicit offset enumeration.

use csae_core::signal::{segment, segment_count, TrialRecording};
use csae_core::Tensor;
use proptest::prelude::*;

/// Every start offset `o` with `o % stride == 0` and `o + window <= len`.
fn offsets(len: usize, window: usize, stride: usize) -> Vec<usize> {
    (0..len).filter(|o| o % stride == 0 && o + window <= len).collect()
}

fn ramp(len: usize) -> TrialRecording {
    let t = Tensor::from_fn(&[len, 2], |i| i as f64);
    TrialRecording::new(1, 0, 1, t).unwrap()
}

#[test]
fn five_second_trial_gives_39_windows() {
    assert_eq!(segment_count(20_000, 1000, 500), Some(39));
    let set = segment(&ramp(20_000), 1000, 500).unwrap();
    assert_eq!(set.len(), 39);
    assert_eq!(set.segments[38].data()[0], (38 * 500 * 2) as f64);
}

#[test]
fn window_longer_than_trial_is_rejected() {
    assert_eq!(segment_count(999, 1000, 500), None);
    assert!(segment(&ramp(999), 1000, 500).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 200, ..ProptestConfig::default() })]

    #[test]
    fn count_and_offsets_match_enumeration(len in 1usize..400, window in 1usize..120, stride in 1usize..60) {
        let expected = offsets(len, window, stride);
        let count = segment_count(len, window, stride);
        prop_assert_eq!(count.unwrap_or(0), expected.len());
        if let Ok(set) = segment(&ramp(len), window, stride) {
            prop_assert_eq!(set.len(), expected.len());
            for (seg, o) in set.segments.iter().zip(&expected) {
                prop_assert_eq!(seg.shape(), &[window, 2][..]);
                prop_assert_eq!(seg.data()[0], (o * 2) as f64);
                prop_assert_eq!(seg.data()[2 * window - 1], (2 * (o + window) - 1) as f64);
            }
        } else {
            prop_assert!(expected.is_empty());
        }
    }
}
