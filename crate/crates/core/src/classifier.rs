//! Supervised head over a frozen encoder: layer norm, one conv block,
//! attention pooling, a two-layer MLP and a softmax output.

use alloc::vec::Vec;
use core::ops::Range;

use crate::nn::ops::softmax;
use crate::nn::{loss, Differentiable, Gradients, LayerGroup, LayerKind, LayerSpec, ModelGraph};
use crate::signal::{SegmentSet, CHANNELS, WINDOW};
use crate::train::{batch_mean, fit, Clock, TrainConfig, TrainLog};
use crate::{Error, Result, Tensor};

/// How the head collapses the time axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pooling {
    Attention,
    /// Global average pooling.
    Mean,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassifierConfig {
    /// `(channels, kernel, stride)` of the head convolution.
    pub head_conv: (usize, usize, usize),
    pub mlp_widths: [usize; 2],
    pub num_classes: usize,
    pub alpha: f64,
    pub pooling: Pooling,
    /// Segment length fed to the encoder.
    pub input_len: usize,
    pub train: TrainConfig,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            head_conv: (32, 5, 2),
            mlp_widths: [64, 32],
            num_classes: 6,
            alpha: 0.1,
            pooling: Pooling::Attention,
            input_len: WINDOW,
            train: TrainConfig::default(),
        }
    }
}

/// Frozen encoder layers followed by the trainable head.
#[derive(Debug, Clone, PartialEq)]
pub struct Classifier {
    pub graph: ModelGraph,
    pub num_classes: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub probs: Tensor,
    pub logits: Tensor,
    pub argmax: usize,
}

/// Index of the largest value; the lowest index wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Encoder outputs cached once so head training never re-runs the encoder.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentSet {
    pub latents: Vec<Tensor>,
    pub labels: Vec<usize>,
}

pub fn build_classifier(encoder: &ModelGraph, config: &ClassifierConfig, seed: u64) -> Result<Classifier> {
    if config.num_classes < 2 {
        return Err(Error::InvalidConfig("a classifier needs at least two classes".into()));
    }
    let (hc, hk, hs) = config.head_conv;
    let [w1, w2] = config.mlp_widths;
    if hc == 0 || w1 == 0 || w2 == 0 {
        return Err(Error::InvalidConfig("head widths must be >= 1".into()));
    }
    if encoder.layers.iter().any(|l| l.group != LayerGroup::Encoder) {
        return Err(Error::InvalidConfig(
            "encoder graph may contain only encoder layers".into(),
        ));
    }
    let mut g = ModelGraph {
        layers: encoder.layers.clone(),
    };
    g.set_trainable(|l| l.group != LayerGroup::Encoder);
    let latent = g
        .shapes(&[config.input_len, CHANNELS])?
        .pop()
        .unwrap_or_else(|| alloc::vec![config.input_len, CHANNELS]);
    if latent.len() != 2 {
        return Err(Error::ShapeMismatch {
            op: "build_classifier",
            expected: alloc::vec![0, 0],
            got: latent,
        });
    }
    let d = latent[1];
    let a = config.alpha;
    use LayerGroup::{Head, Mlp, Output};
    g.push("head_norm", Head, LayerSpec::layer_norm(d), seed)?;
    g.push("head_conv", Head, LayerSpec::conv1d(d, hc, hk, hs), seed)?;
    g.push("head_conv_act", Head, LayerSpec::leaky_relu(a), seed)?;
    match config.pooling {
        Pooling::Attention => g.push("pool", Head, LayerSpec::attention_pool(hc), seed)?,
        Pooling::Mean => g.push("pool", Head, LayerSpec::mean_pool(hc), seed)?,
    }
    g.push("mlp1", Mlp, LayerSpec::dense(hc, w1), seed)?;
    g.push("mlp1_act", Mlp, LayerSpec::leaky_relu(a), seed)?;
    g.push("mlp2", Mlp, LayerSpec::dense(w1, w2), seed)?;
    g.push("mlp2_act", Mlp, LayerSpec::leaky_relu(a), seed)?;
    g.push("logits", Output, LayerSpec::dense(w2, config.num_classes), seed)?;
    g.push("softmax", Output, LayerSpec::softmax(), seed)?;
    g.shapes(&[config.input_len, CHANNELS])?;
    Ok(Classifier {
        graph: g,
        num_classes: config.num_classes,
    })
}

impl Classifier {
    /// First layer after the encoder.
    pub fn head_start(&self) -> usize {
        self.graph.group_range(LayerGroup::Encoder).map_or(0, |r| r.end)
    }

    /// Layers from the head start up to, not including, the final softmax.
    fn logit_range(&self) -> Result<Range<usize>> {
        match self.graph.layers.last() {
            Some(l) if l.spec.kind == LayerKind::Softmax => Ok(self.head_start()..self.graph.len() - 1),
            _ => Err(Error::InvalidConfig("classifier graph must end in softmax".into())),
        }
    }

    pub fn encode(&self, x: &Tensor) -> Result<Tensor> {
        self.graph.forward_range(0..self.head_start(), x)
    }

    pub fn predict_latent(&self, z: &Tensor) -> Result<Prediction> {
        let logits = self.graph.forward_range(self.logit_range()?, z)?;
        let probs = softmax(&logits);
        Ok(Prediction {
            argmax: argmax(probs.data()),
            probs,
            logits,
        })
    }

    fn check_label(&self, label: usize) -> Result<()> {
        if label >= self.num_classes {
            return Err(Error::LabelOutOfRange {
                label,
                classes: self.num_classes,
            });
        }
        Ok(())
    }

    /// Cross-entropy of one sample over `range` (which must end at the
    /// logits); the logit gradient is `p - y`.
    fn ce_grad(
        &self,
        range: Range<usize>,
        input: &Tensor,
        label: usize,
        grads: &mut Gradients,
    ) -> Result<(f64, Tensor)> {
        self.check_label(label)?;
        let trace = self.graph.trace_range(range, input)?;
        let probs = softmax(trace.output());
        let y = loss::one_hot(label, self.num_classes)?;
        let l = loss::cross_entropy(&probs, &y)?;
        let g = loss::softmax_ce_logit_grad(&probs, label)?;
        let dx = self.graph.backward(&trace, &g, grads)?;
        Ok((l, dx))
    }

    fn ce(&self, range: Range<usize>, input: &Tensor, label: usize) -> Result<f64> {
        self.check_label(label)?;
        let probs = softmax(&self.graph.forward_range(range, input)?);
        loss::cross_entropy(&probs, &loss::one_hot(label, self.num_classes)?)
    }

    pub fn mean_latent_loss(&self, set: &LatentSet) -> Result<f64> {
        if set.latents.is_empty() {
            return Err(Error::EmptyInput("classifier loss"));
        }
        let range = self.logit_range()?;
        let mut sum = 0.0;
        for (z, &l) in set.latents.iter().zip(&set.labels) {
            sum += self.ce(range.clone(), z, l)?;
        }
        Ok(sum / set.latents.len() as f64)
    }

    /// Full-graph cross-entropy for a fixed label, for gradient checking.
    pub fn with_label(&self, label: usize) -> LabeledClassifier {
        LabeledClassifier {
            classifier: self.clone(),
            label,
        }
    }
}

/// A classifier paired with a target label, seen as a scalar loss of its input.
#[derive(Debug, Clone)]
pub struct LabeledClassifier {
    pub classifier: Classifier,
    pub label: usize,
}

impl Differentiable for LabeledClassifier {
    fn graph(&self) -> &ModelGraph {
        &self.classifier.graph
    }

    fn graph_mut(&mut self) -> &mut ModelGraph {
        &mut self.classifier.graph
    }

    fn loss(&self, input: &Tensor) -> Result<f64> {
        let c = &self.classifier;
        c.ce(0..c.logit_range()?.end, input, self.label)
    }

    fn loss_and_grad(&self, input: &Tensor) -> Result<(f64, Tensor, Gradients)> {
        let c = &self.classifier;
        let mut grads = Gradients::zeros_like(&c.graph);
        let (l, dx) = c.ce_grad(0..c.logit_range()?.end, input, self.label, &mut grads)?;
        Ok((l, dx, grads))
    }
}

/// Runs the encoder prefix of `clf` over every segment.
pub fn extract_latent(clf: &Classifier, set: &SegmentSet) -> Result<LatentSet> {
    Ok(LatentSet {
        latents: set.segments.iter().map(|x| clf.encode(x)).collect::<Result<_>>()?,
        labels: set.labels.clone(),
    })
}

/// Latents of a standalone encoder graph.
pub fn encode_all(encoder: &ModelGraph, set: &SegmentSet) -> Result<Vec<Tensor>> {
    set.segments.iter().map(|x| encoder.forward(x)).collect()
}

/// Mean cross-entropy training of every trainable head layer; the encoder is
/// evaluated once per sample up front.
pub fn train_classifier(
    clf: &mut Classifier,
    train: &SegmentSet,
    val: &SegmentSet,
    config: &TrainConfig,
    clock: &dyn Clock,
) -> Result<TrainLog> {
    let train_z = extract_latent(clf, train)?;
    let val_z = extract_latent(clf, val)?;
    train_on_latents(clf, &train_z, &val_z, config, clock)
}

pub fn train_on_latents(
    clf: &mut Classifier,
    train: &LatentSet,
    val: &LatentSet,
    config: &TrainConfig,
    clock: &dyn Clock,
) -> Result<TrainLog> {
    if val.latents.is_empty() {
        return Err(Error::EmptyInput("classifier validation set"));
    }
    for &l in train.labels.iter().chain(&val.labels) {
        clf.check_label(l)?;
    }
    let range = clf.logit_range()?;
    let k = clf.num_classes;
    fit(
        &mut clf.graph,
        train.latents.len(),
        config,
        clock,
        |g, batch| {
            let view = Classifier {
                graph: g.clone(),
                num_classes: k,
            };
            batch_mean(g, batch, |i, grads| {
                Ok(view
                    .ce_grad(range.clone(), &train.latents[i], train.labels[i], grads)?
                    .0)
            })
        },
        |g| {
            Classifier {
                graph: g.clone(),
                num_classes: k,
            }
            .mean_latent_loss(val)
        },
    )
}

pub fn predict(clf: &Classifier, set: &SegmentSet) -> Result<Vec<Prediction>> {
    set.segments
        .iter()
        .map(|x| clf.predict_latent(&clf.encode(x)?))
        .collect()
}

pub fn predict_latents(clf: &Classifier, set: &LatentSet) -> Result<Vec<Prediction>> {
    set.latents.iter().map(|z| clf.predict_latent(z)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::csae::{build_csae, CsaeConfig};

    fn default_clf() -> Classifier {
        let ae = build_csae(&CsaeConfig::default(), 5).unwrap();
        build_classifier(&ae.encoder(), &ClassifierConfig::default(), 6).unwrap()
    }

    #[test]
    fn probabilities_sum_to_one() {
        let c = default_clf();
        let x = Tensor::from_fn(&[1000, 2], |i| libm::cos(i as f64 * 0.37));
        let z = c.encode(&x).unwrap();
        assert_eq!(z.shape(), [45, 8]);
        let p = c.predict_latent(&z).unwrap();
        assert_eq!(p.probs.numel(), 6);
        assert!((p.probs.data().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(c.graph.forward(&x).unwrap(), p.probs);
    }

    #[test]
    fn encoder_is_frozen() {
        let c = default_clf();
        let enc = c.graph.group_range(LayerGroup::Encoder).unwrap();
        assert!(c.graph.layers[enc.clone()].iter().all(|l| !l.spec.trainable));
        assert!(c.graph.layers[enc.end..].iter().any(|l| l.spec.trainable));
    }

    #[test]
    fn argmax_prefers_lowest_index() {
        assert_eq!(argmax(&[0.2, 0.4, 0.4]), 1);
        assert_eq!(argmax(&[1.0, 1.0]), 0);
    }

    #[test]
    fn label_out_of_range_rejected() {
        let c = default_clf();
        let z = LatentSet {
            latents: alloc::vec![Tensor::zeros(&[45, 8])],
            labels: alloc::vec![6],
        };
        assert!(matches!(c.mean_latent_loss(&z), Err(Error::LabelOutOfRange { .. })));
    }
}
