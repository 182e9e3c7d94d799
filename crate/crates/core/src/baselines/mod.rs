//! Comparison pipelines: classical features and fully-connected autoencoder
//! features with a random forest, the average-pooling head, and resource
//! accounting.

mod features;
mod forest;
mod resources;

pub use features::{channel_features, classical_features, FeatureVector, DEADBAND, FEATURE_NAMES, PER_CHANNEL};
pub use forest::{forest_fit, forest_predict, ForestConfig, ForestModel, Node, Tree};
pub use resources::{resource_report, ResourceReport, BYTES_PER_VALUE};

use alloc::vec::Vec;

use crate::classifier::{build_classifier, Classifier, ClassifierConfig, Pooling};
use crate::csae::Autoencoder;
use crate::nn::{LayerGroup, LayerSpec, ModelGraph};
use crate::signal::{SegmentSet, CHANNELS, WINDOW};
use crate::{Error, Result};

pub const FCAE_HIDDEN: [usize; 1] = [512];
pub const FCAE_LATENT: usize = 128;

/// Dense autoencoder over the flattened segment: `2000 → hidden… → latent`
/// and the mirror image back to 2000, leaky ReLU between layers and no
/// activation on the reconstruction.
pub fn build_fcae(hidden: &[usize], latent: usize, alpha: f64, lambda: f64, seed: u64) -> Result<Autoencoder> {
    if latent == 0 || hidden.contains(&0) {
        return Err(Error::InvalidConfig("autoencoder widths must be >= 1".into()));
    }
    let input = WINDOW * CHANNELS;
    let mut widths = alloc::vec![input];
    widths.extend_from_slice(hidden);
    widths.push(latent);
    let mut g = ModelGraph::new();
    for (i, w) in widths.windows(2).enumerate() {
        g.push(
            &alloc::format!("enc{}", i + 1),
            LayerGroup::Encoder,
            LayerSpec::dense(w[0], w[1]),
            seed,
        )?;
        g.push(
            &alloc::format!("enc{}_act", i + 1),
            LayerGroup::Encoder,
            LayerSpec::leaky_relu(alpha),
            seed,
        )?;
    }
    let back: Vec<usize> = widths.iter().rev().copied().collect();
    let last = back.len() - 2;
    for (i, w) in back.windows(2).enumerate() {
        g.push(
            &alloc::format!("dec{}", i + 1),
            LayerGroup::Decoder,
            LayerSpec::dense(w[0], w[1]),
            seed,
        )?;
        if i < last {
            g.push(
                &alloc::format!("dec{}_act", i + 1),
                LayerGroup::Decoder,
                LayerSpec::leaky_relu(alpha),
                seed,
            )?;
        }
    }
    Autoencoder::new(g, lambda)
}

/// The standard head with attention pooling replaced by the time mean.
pub fn gap_head_variant(encoder: &ModelGraph, config: &ClassifierConfig, seed: u64) -> Result<Classifier> {
    build_classifier(
        encoder,
        &ClassifierConfig {
            pooling: Pooling::Mean,
            ..*config
        },
        seed,
    )
}

/// Classical features of every segment, as forest inputs.
pub fn classical_feature_rows(set: &SegmentSet) -> Result<Vec<Vec<f64>>> {
    set.segments
        .iter()
        .map(|s| Ok(classical_features(s, DEADBAND)?.values().to_vec()))
        .collect()
}

/// Flattened encoder outputs of every segment, as forest inputs.
pub fn latent_feature_rows(ae: &Autoencoder, set: &SegmentSet) -> Result<Vec<Vec<f64>>> {
    set.segments.iter().map(|s| Ok(ae.encode(s)?.into_data())).collect()
}
