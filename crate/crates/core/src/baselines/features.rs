//! Classical time-domain EMG features.

use crate::signal::CHANNELS;
use crate::{Result, Tensor};

/// Deadband for zero crossings and slope-sign changes on standardized data.
pub const DEADBAND: f64 = 0.01;
pub const PER_CHANNEL: usize = 6;
pub const FEATURE_NAMES: [&str; PER_CHANNEL] = ["mav", "var", "zc", "ssc", "wl", "rms"];

/// `PER_CHANNEL` values for each channel, channel-major.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureVector(pub [f64; PER_CHANNEL * CHANNELS]);

impl FeatureVector {
    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

/// Features of one channel. A zero crossing needs a strict sign change with a
/// jump of at least `eps`; a slope-sign change needs
/// `(x[i]-x[i-1]) * (x[i]-x[i+1]) > eps`.
pub fn channel_features(x: &[f64], eps: f64) -> [f64; PER_CHANNEL] {
    if x.is_empty() {
        return [0.0; PER_CHANNEL];
    }
    let n = x.len() as f64;
    let mav = x.iter().map(|v| v.abs()).sum::<f64>() / n;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let zc = x
        .windows(2)
        .filter(|w| w[0] * w[1] < 0.0 && (w[0] - w[1]).abs() >= eps)
        .count() as f64;
    let ssc = x.windows(3).filter(|w| (w[1] - w[0]) * (w[1] - w[2]) > eps).count() as f64;
    let wl = x.windows(2).map(|w| (w[1] - w[0]).abs()).sum::<f64>();
    let rms = libm::sqrt(x.iter().map(|v| v * v).sum::<f64>() / n);
    [mav, var, zc, ssc, wl, rms]
}

pub fn classical_features(segment: &Tensor, eps: f64) -> Result<FeatureVector> {
    let (t, c) = segment.dims2("classical_features")?;
    let mut out = [0.0; PER_CHANNEL * CHANNELS];
    for ch in 0..c.min(CHANNELS) {
        let col: alloc::vec::Vec<f64> = (0..t).map(|i| segment.data()[i * c + ch]).collect();
        out[ch * PER_CHANNEL..(ch + 1) * PER_CHANNEL].copy_from_slice(&channel_features(&col, eps));
    }
    Ok(FeatureVector(out))
}
