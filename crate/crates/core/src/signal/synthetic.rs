//! Synthetic two-channel sEMG with class-coded spectra and subject-specific
//! gain and frequency offsets.
//!
//! Each class drives a narrow-band noise carrier at its own center frequency
//! with its own ratio of channel amplitudes. A subject multiplies each channel
//! by a gain and moves every carrier by a fixed frequency offset, which is what
//! makes a model trained on one cohort misread a new subject.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{TrialRecording, CHANNELS, SAMPLE_RATE_HZ};
use crate::rng::derive_seed;
use crate::{Error, Result, Tensor};

/// 5 s at 4 kHz.
pub const TRIAL_SAMPLES: usize = 20_000;
/// -3 dB width of each carrier.
pub const CARRIER_BANDWIDTH_HZ: f64 = 20.0;
pub const SNR_DB: f64 = 20.0;
/// Relative standard deviation of the per-trial contraction strength.
pub const TRIAL_AMPLITUDE_JITTER: f64 = 0.1;
pub const TRIAL_FREQ_JITTER_HZ: f64 = 3.0;
const BURN_IN: usize = 4000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassSignature {
    pub center_hz: f64,
    /// Amplitude of the shared carrier on each channel.
    pub channel_amp: [f64; CHANNELS],
}

const fn sig(center_hz: f64, a: f64, b: f64) -> ClassSignature {
    ClassSignature {
        center_hz,
        channel_amp: [a, b],
    }
}

/// Indexed like [`super::CLASS_NAMES`]. The single movements sit 80 Hz apart;
/// each thumb combination sits between the thumb-adjacent single movements
/// it resembles.
pub const CLASS_SIGNATURES: [ClassSignature; 10] = [
    sig(50.0, 1.1, 0.9),
    sig(130.0, 1.06, 0.94),
    sig(210.0, 1.02, 0.98),
    sig(290.0, 0.98, 1.02),
    sig(370.0, 0.94, 1.06),
    sig(450.0, 0.9, 1.1),
    sig(250.0, 1.0, 1.0),
    sig(330.0, 0.96, 1.04),
    sig(410.0, 0.92, 1.08),
    sig(170.0, 1.04, 0.96),
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubjectProfile {
    pub gain: [f64; CHANNELS],
    /// Added to every class center frequency, Hz.
    pub freq_shift: f64,
}

impl SubjectProfile {
    pub const NEUTRAL: SubjectProfile = SubjectProfile {
        gain: [1.0, 1.0],
        freq_shift: 0.0,
    };

    /// Deterministic profile for the `index`-th member of a synthetic cohort.
    ///
    /// Member `i` has channel gains `sqrt(2) * (cos t, sin t)` with
    /// `t = (i + 1/2) * pi / 8`. Sign-flipped gains give statistically identical
    /// signals, so the eight members tile the half circle of distinguishable
    /// gain directions, 22.5 degrees apart with wraparound. Odd members also
    /// move every carrier up by one class spacing, so each member maps
    /// frequencies to classes differently from both of its neighbours and
    /// cannot be interpolated from the rest.
    pub fn cohort_member(index: usize) -> SubjectProfile {
        let i = index % COHORT_SIZE;
        let t = (i as f64 + 0.5) * core::f64::consts::PI / COHORT_SIZE as f64;
        let r = core::f64::consts::SQRT_2;
        SubjectProfile {
            gain: [r * libm::cos(t), r * libm::sin(t)],
            freq_shift: if i % 2 == 1 { COHORT_ODD_SHIFT_HZ } else { 0.0 },
        }
    }
}

pub const COHORT_SIZE: usize = 8;
/// Spacing of the single-movement carriers.
pub const COHORT_ODD_SHIFT_HZ: f64 = 80.0;

/// Narrow-band noise from a two-pole resonator driven by white noise,
/// normalized to unit RMS.
fn carrier(rng: &mut ChaCha8Rng, len: usize, center_hz: f64) -> Vec<f64> {
    let r = 1.0 - core::f64::consts::PI * CARRIER_BANDWIDTH_HZ / SAMPLE_RATE_HZ;
    let omega = 2.0 * core::f64::consts::PI * center_hz / SAMPLE_RATE_HZ;
    let a1 = 2.0 * r * libm::cos(omega);
    let a2 = -r * r;
    let (mut y1, mut y2) = (0.0, 0.0);
    let mut out = Vec::with_capacity(len);
    for i in 0..BURN_IN + len {
        let x: f64 = rng.sample(StandardNormal);
        let y = a1 * y1 + a2 * y2 + x;
        y2 = y1;
        y1 = y;
        if i >= BURN_IN {
            out.push(y);
        }
    }
    let rms = libm::sqrt(out.iter().map(|v| v * v).sum::<f64>() / len as f64);
    out.iter_mut().for_each(|v| *v /= rms);
    out
}

/// `trials_per_class` recordings for every class, trial indices starting at 1,
/// ordered by `(class, trial)`.
pub fn generate_synthetic_subject(
    subject_id: u32,
    num_classes: usize,
    trials_per_class: u32,
    seed: u64,
    profile: SubjectProfile,
) -> Result<Vec<TrialRecording>> {
    generate_with_length(subject_id, num_classes, trials_per_class, seed, profile, TRIAL_SAMPLES)
}

pub fn generate_with_length(
    subject_id: u32,
    num_classes: usize,
    trials_per_class: u32,
    seed: u64,
    profile: SubjectProfile,
    len: usize,
) -> Result<Vec<TrialRecording>> {
    if num_classes != 6 && num_classes != 10 {
        return Err(Error::InvalidConfig(alloc::format!(
            "synthetic data supports 6 or 10 classes, got {num_classes}"
        )));
    }
    if len == 0 {
        return Err(Error::EmptyInput("synthetic trial length"));
    }
    let noise_rel = libm::pow(10.0, -SNR_DB / 20.0);
    let mut out = Vec::new();
    for class in 0..num_classes {
        let sig = CLASS_SIGNATURES[class];
        for trial in 1..=trials_per_class {
            let stream = ((subject_id as u64) << 32) | ((class as u64) << 16) | trial as u64;
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, stream));
            let jitter_amp = 1.0 + TRIAL_AMPLITUDE_JITTER * rng.sample::<f64, _>(StandardNormal);
            let jitter_hz = TRIAL_FREQ_JITTER_HZ * rng.sample::<f64, _>(StandardNormal);
            let center = (sig.center_hz + profile.freq_shift + jitter_hz).max(5.0);
            let c = carrier(&mut rng, len, center);
            let mut data = Vec::with_capacity(len * CHANNELS);
            for &cv in &c {
                for ch in 0..CHANNELS {
                    let amp = sig.channel_amp[ch] * jitter_amp;
                    let noise: f64 = rng.sample(StandardNormal);
                    data.push(profile.gain[ch] * (amp * cv + amp * noise_rel * noise));
                }
            }
            out.push(TrialRecording::new(
                subject_id,
                class,
                trial,
                Tensor::new(alloc::vec![len, CHANNELS], data)?,
            )?);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rms(rec: &TrialRecording, ch: usize) -> f64 {
        let d = rec.samples.data();
        let n = rec.len() as f64;
        libm::sqrt(d.iter().skip(ch).step_by(2).map(|v| v * v).sum::<f64>() / n)
    }

    #[test]
    fn deterministic() {
        let a = generate_with_length(1, 6, 1, 9, SubjectProfile::NEUTRAL, 2000).unwrap();
        let b = generate_with_length(1, 6, 1, 9, SubjectProfile::NEUTRAL, 2000).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 6);
    }

    #[test]
    fn channel_ratio_follows_class_signature() {
        let recs = generate_with_length(1, 6, 1, 3, SubjectProfile::NEUTRAL, 20_000).unwrap();
        for class in [0usize, 1] {
            let sig = CLASS_SIGNATURES[class];
            let designed = sig.channel_amp[0] / sig.channel_amp[1];
            let measured = rms(&recs[class], 0) / rms(&recs[class], 1);
            assert!(
                (measured / designed - 1.0).abs() < 0.02,
                "{class}: {measured} vs {designed}"
            );
        }
    }

    #[test]
    fn gain_scales_channels_exactly() {
        let base = generate_with_length(2, 6, 1, 4, SubjectProfile::NEUTRAL, 3000).unwrap();
        let prof = SubjectProfile {
            gain: [2.0, 0.5],
            freq_shift: 0.0,
        };
        let scaled = generate_with_length(2, 6, 1, 4, prof, 3000).unwrap();
        for (a, b) in base.iter().zip(&scaled) {
            for (i, (x, y)) in a.samples.data().iter().zip(b.samples.data()).enumerate() {
                let g = if i % 2 == 0 { 2.0 } else { 0.5 };
                assert_eq!(*y, g * x);
            }
        }
    }

    #[test]
    fn rejects_unsupported_class_count() {
        assert!(generate_synthetic_subject(1, 7, 1, 0, SubjectProfile::NEUTRAL).is_err());
    }
}
