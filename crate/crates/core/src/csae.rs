//! Convolutional sparse autoencoder: strided conv encoder, mirrored
//! transposed-conv decoder and an L1 penalty on the bottleneck activations.
//!
//! [`Autoencoder`] is architecture-agnostic: any graph whose layers split into
//! an [`LayerGroup::Encoder`] prefix and a [`LayerGroup::Decoder`] suffix
//! trains the same way, which the fully-connected baseline relies on.

use alloc::format;
use alloc::vec::Vec;
use core::ops::Range;

use crate::nn::ops::{conv_out_len, tconv_out_len};
use crate::nn::{leaky_relu_signs, loss, Differentiable, Gradients, LayerGroup, LayerSpec, ModelGraph};
use crate::signal::{SegmentSet, CHANNELS, WINDOW};
use crate::train::{batch_mean, fit, Clock, TrainConfig, TrainLog};
use crate::{Error, Result, Tensor};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CsaeConfig {
    pub input_len: usize,
    /// Output channels of the two downsampling blocks and the bottleneck.
    pub filters: [usize; 3],
    pub kernel_sizes: [usize; 3],
    pub strides: [usize; 3],
    pub alpha: f64,
    pub lambda: f64,
    pub train: TrainConfig,
}

impl Default for CsaeConfig {
    fn default() -> Self {
        Self {
            input_len: WINDOW,
            filters: [16, 32, 8],
            kernel_sizes: [11, 7, 5],
            strides: [4, 5, 1],
            alpha: 0.1,
            lambda: 1e-7,
            train: TrainConfig::default(),
        }
    }
}

impl CsaeConfig {
    /// Bottleneck length after the three valid convolutions.
    pub fn latent_len(&self) -> Result<usize> {
        let mut t = self.input_len;
        for i in 0..3 {
            t = conv_out_len(t, self.kernel_sizes[i], self.strides[i]).ok_or_else(|| {
                Error::InvalidConfig(format!(
                    "encoder block {} needs at least {} samples, has {t}",
                    i + 1,
                    self.kernel_sizes[i]
                ))
            })?;
        }
        Ok(t)
    }

    /// Kernel of the output transposed conv that restores `input_len` exactly.
    pub fn output_kernel(&self) -> Result<usize> {
        let mut t = self.latent_len()?;
        for i in [2, 1] {
            t = tconv_out_len(t, self.kernel_sizes[i], self.strides[i]);
        }
        let covered = (t - 1) * self.strides[0];
        if covered >= self.input_len {
            return Err(Error::InvalidConfig(format!(
                "decoder reaches {} samples before its output layer; cannot restore {}",
                covered + 1,
                self.input_len
            )));
        }
        Ok(self.input_len - covered)
    }
}

/// Encoder/decoder graph plus the L1 weight on the bottleneck.
#[derive(Debug, Clone, PartialEq)]
pub struct Autoencoder {
    pub graph: ModelGraph,
    pub lambda: f64,
}

/// Per-segment loss parts; `total` is always `mse + l1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossParts {
    pub total: f64,
    pub mse: f64,
    pub l1: f64,
}

pub fn build_csae(config: &CsaeConfig, seed: u64) -> Result<Autoencoder> {
    if !(config.lambda >= 0.0) {
        return Err(Error::InvalidConfig("lambda must be >= 0".into()));
    }
    let out_k = config.output_kernel()?;
    let [f1, f2, d] = config.filters;
    let [k1, k2, k3] = config.kernel_sizes;
    let [s1, s2, s3] = config.strides;
    let a = config.alpha;
    let mut g = ModelGraph::new();
    use LayerGroup::{Decoder, Encoder};
    g.push("enc1", Encoder, LayerSpec::conv1d(CHANNELS, f1, k1, s1), seed)?;
    g.push("enc1_act", Encoder, LayerSpec::leaky_relu(a), seed)?;
    g.push("enc2", Encoder, LayerSpec::conv1d(f1, f2, k2, s2), seed)?;
    g.push("enc2_act", Encoder, LayerSpec::leaky_relu(a), seed)?;
    g.push("bottleneck", Encoder, LayerSpec::conv1d(f2, d, k3, s3), seed)?;
    g.push("bottleneck_act", Encoder, LayerSpec::leaky_relu(a), seed)?;
    g.push("dec1", Decoder, LayerSpec::tconv1d(d, f2, k3, s3), seed)?;
    g.push("dec1_act", Decoder, LayerSpec::leaky_relu(a), seed)?;
    g.push("dec2", Decoder, LayerSpec::tconv1d(f2, f1, k2, s2), seed)?;
    g.push("dec2_act", Decoder, LayerSpec::leaky_relu(a), seed)?;
    g.push(
        "reconstruction",
        Decoder,
        LayerSpec::tconv1d(f1, CHANNELS, out_k, s1),
        seed,
    )?;
    Ok(Autoencoder {
        graph: g,
        lambda: config.lambda,
    })
}

impl Autoencoder {
    pub fn new(graph: ModelGraph, lambda: f64) -> Result<Self> {
        let ae = Self { graph, lambda };
        ae.ranges()?;
        Ok(ae)
    }

    fn ranges(&self) -> Result<(Range<usize>, Range<usize>)> {
        let enc = self.graph.group_range(LayerGroup::Encoder);
        let dec = self.graph.group_range(LayerGroup::Decoder);
        match (enc, dec) {
            (Some(e), Some(d)) if e.start == 0 && e.end == d.start && d.end == self.graph.len() => Ok((e, d)),
            _ => Err(Error::InvalidConfig(
                "autoencoder graph must be encoder layers followed by decoder layers".into(),
            )),
        }
    }

    pub fn encoder_range(&self) -> Range<usize> {
        self.ranges().expect("validated at construction").0
    }

    /// Copy of the encoder layers only.
    pub fn encoder(&self) -> ModelGraph {
        ModelGraph {
            layers: self.graph.layers[self.encoder_range()].to_vec(),
        }
    }

    pub fn encode(&self, x: &Tensor) -> Result<Tensor> {
        self.graph.forward_range(self.encoder_range(), x)
    }

    pub fn reconstruct(&self, x: &Tensor) -> Result<Tensor> {
        let y = self.graph.forward(x)?;
        y.reshape(x.shape())
    }

    pub fn loss_parts(&self, x: &Tensor) -> Result<LossParts> {
        let (enc, dec) = self.ranges()?;
        let z = self.graph.forward_range(enc, x)?;
        let y = self.graph.forward_range(dec, &z)?.reshape(x.shape())?;
        let mse = loss::mse_loss(x, &y)?;
        let l1 = loss::l1_activity(&z, self.lambda)?;
        Ok(LossParts {
            total: mse + l1,
            mse,
            l1,
        })
    }

    /// Loss plus parameter gradients accumulated into `grads`; returns the
    /// input gradient.
    pub fn accumulate_grad(&self, x: &Tensor, grads: &mut Gradients) -> Result<(LossParts, Tensor)> {
        let (enc, dec) = self.ranges()?;
        let enc_trace = self.graph.trace_range(enc, x)?;
        let z = enc_trace.output();
        let dec_trace = self.graph.trace_range(dec, z)?;
        let out_shape = dec_trace.output().shape().to_vec();
        let y = dec_trace.output().clone().reshape(x.shape())?;
        let mse = loss::mse_loss(x, &y)?;
        let l1 = loss::l1_activity(z, self.lambda)?;
        let dy = loss::mse_grad(x, &y)?.reshape(&out_shape)?;
        let mut dz = self.graph.backward(&dec_trace, &dy, grads)?;
        dz.add_assign(&loss::l1_grad(z, self.lambda));
        let mut dx = self.graph.backward(&enc_trace, &dz, grads)?;
        // x is also the reconstruction target
        dx.add_assign(&loss::mse_grad(&y, x)?);
        Ok((
            LossParts {
                total: mse + l1,
                mse,
                l1,
            },
            dx,
        ))
    }

    /// Mean total loss over a set.
    pub fn mean_loss(&self, set: &SegmentSet) -> Result<f64> {
        if set.is_empty() {
            return Err(Error::EmptyInput("autoencoder loss"));
        }
        let mut sum = 0.0;
        for x in &set.segments {
            sum += self.loss_parts(x)?.total;
        }
        Ok(sum / set.len() as f64)
    }
}

impl Differentiable for Autoencoder {
    fn graph(&self) -> &ModelGraph {
        &self.graph
    }

    fn graph_mut(&mut self) -> &mut ModelGraph {
        &mut self.graph
    }

    fn loss(&self, input: &Tensor) -> Result<f64> {
        Ok(self.loss_parts(input)?.total)
    }

    fn loss_and_grad(&self, input: &Tensor) -> Result<(f64, Tensor, Gradients)> {
        let mut grads = Gradients::zeros_like(&self.graph);
        let (parts, dx) = self.accumulate_grad(input, &mut grads)?;
        Ok((parts.total, dx, grads))
    }

    /// LeakyReLU inputs plus the latent, where the L1 term bends.
    fn kink_pattern(&self, input: &Tensor) -> Result<Vec<bool>> {
        let (enc, dec) = self.ranges()?;
        let enc_trace = self.graph.trace_range(enc.clone(), input)?;
        let z = enc_trace.output();
        let dec_trace = self.graph.trace_range(dec.clone(), z)?;
        let mut signs = leaky_relu_signs(&self.graph, &enc_trace, enc);
        signs.extend(z.data().iter().map(|&v| v >= 0.0));
        signs.extend(leaky_relu_signs(&self.graph, &dec_trace, dec));
        Ok(signs)
    }
}

/// Minimizes mean-over-batch `mse + lambda * sum|Z|`; labels are never read.
/// Early stopping monitors the same objective on `val`.
pub fn train_autoencoder(
    ae: &mut Autoencoder,
    train: &SegmentSet,
    val: &SegmentSet,
    config: &TrainConfig,
    clock: &dyn Clock,
) -> Result<TrainLog> {
    if val.is_empty() {
        return Err(Error::EmptyInput("autoencoder validation set"));
    }
    let lambda = ae.lambda;
    fit(
        &mut ae.graph,
        train.len(),
        config,
        clock,
        |g, batch| {
            let view = Autoencoder {
                graph: g.clone(),
                lambda,
            };
            batch_mean(g, batch, |i, grads| {
                Ok(view.accumulate_grad(&train.segments[i], grads)?.0.total)
            })
        },
        |g| {
            Autoencoder {
                graph: g.clone(),
                lambda,
            }
            .mean_loss(val)
        },
    )
}

/// `1 - SS_res / SS_tot` pooled over every element of the set.
pub fn reconstruct_r2(ae: &Autoencoder, set: &SegmentSet) -> Result<f64> {
    if set.is_empty() {
        return Err(Error::EmptyInput("reconstruct_r2"));
    }
    let n: usize = set.segments.iter().map(Tensor::numel).sum();
    let mean = set.segments.iter().flat_map(|s| s.data()).sum::<f64>() / n as f64;
    let ss_tot: f64 = set
        .segments
        .iter()
        .flat_map(|s| s.data())
        .map(|v| (v - mean) * (v - mean))
        .sum();
    if ss_tot <= 0.0 {
        return Err(Error::InvalidConfig("R² is undefined on a zero-variance set".into()));
    }
    let mut ss_res = 0.0;
    for x in &set.segments {
        let y = ae.reconstruct(x)?;
        ss_res += x
            .data()
            .iter()
            .zip(y.data())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>();
    }
    Ok(1.0 - ss_res / ss_tot)
}

/// Mean absolute bottleneck activation over a set.
pub fn mean_abs_latent(ae: &Autoencoder, set: &SegmentSet) -> Result<f64> {
    if set.is_empty() {
        return Err(Error::EmptyInput("mean_abs_latent"));
    }
    let mut sum = 0.0;
    for x in &set.segments {
        sum += ae.encode(x)?.mean_abs();
    }
    Ok(sum / set.len() as f64)
}

/// One row of a λ sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub lambda: f64,
    pub micro_f1: f64,
    pub mean_abs_z: f64,
}

/// Standardized splits shared by the sweep points.
#[derive(Debug, Clone)]
pub struct SweepData<'a> {
    /// Autoencoder training segments.
    pub ae_train: &'a SegmentSet,
    /// Classifier training segments.
    pub train: &'a SegmentSet,
    pub val: &'a SegmentSet,
    pub test: &'a SegmentSet,
}

/// Trains one autoencoder per λ (same seed), then the standard classifier on
/// its frozen encoder; rows are reported in input order.
pub fn sweep_lambda(
    lambdas: &[f64],
    data: &SweepData<'_>,
    csae: &CsaeConfig,
    classifier: &crate::classifier::ClassifierConfig,
    seed: u64,
    clock: &dyn Clock,
) -> Result<Vec<SweepRow>> {
    if !lambdas.contains(&0.0) {
        return Err(Error::InvalidConfig("a lambda sweep must include 0".into()));
    }
    lambdas
        .iter()
        .map(|&lambda| {
            let cfg = CsaeConfig { lambda, ..*csae };
            let mut ae = build_csae(&cfg, seed)?;
            train_autoencoder(&mut ae, data.ae_train, data.val, &cfg.train, clock)?;
            let mean_abs_z = mean_abs_latent(&ae, data.test)?;
            let mut clf = crate::classifier::build_classifier(&ae.encoder(), classifier, seed)?;
            crate::classifier::train_classifier(&mut clf, data.train, data.val, &classifier.train, clock)?;
            let preds = crate::classifier::predict(&clf, data.test)?;
            let predicted: Vec<usize> = preds.iter().map(|p| p.argmax).collect();
            let cm = crate::eval::ConfusionMatrix::from_labels(&data.test.labels, &predicted, classifier.num_classes)?;
            Ok(SweepRow {
                lambda,
                micro_f1: crate::eval::micro_f1(&cm)?,
                mean_abs_z,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::Role;

    #[test]
    fn default_lengths() {
        let c = CsaeConfig::default();
        assert_eq!(c.latent_len().unwrap(), 45);
        assert_eq!(c.output_kernel().unwrap(), 16);
        let ae = build_csae(&c, 1).unwrap();
        let y = ae.graph.forward(&Tensor::zeros(&[1000, 2])).unwrap();
        assert_eq!(y.shape(), [1000, 2]);
        assert!(y.data().iter().all(|v| v.is_finite()));
        assert_eq!(ae.encode(&Tensor::zeros(&[1000, 2])).unwrap().shape(), [45, 8]);
        assert_eq!(build_csae(&c, 1).unwrap(), ae);
    }

    #[test]
    fn unsolvable_length_rejected() {
        let c = CsaeConfig {
            input_len: 30,
            kernel_sizes: [11, 7, 5],
            ..Default::default()
        };
        assert!(build_csae(&c, 0).is_err());
    }

    #[test]
    fn stride_one_output_kernel_mirrors_first_block() {
        let c = CsaeConfig {
            input_len: 100,
            kernel_sizes: [3, 3, 3],
            strides: [1, 1, 1],
            ..Default::default()
        };
        assert_eq!(c.output_kernel().unwrap(), 3);
    }

    #[test]
    fn total_is_mse_plus_l1() {
        let mut ae = build_csae(&CsaeConfig::default(), 3).unwrap();
        ae.lambda = 1e-3;
        let x = Tensor::from_fn(&[1000, 2], |i| libm::sin(i as f64 * 0.01));
        let p = ae.loss_parts(&x).unwrap();
        assert_eq!(p.total, p.mse + p.l1);
        assert!(p.l1 > 0.0);
    }

    #[test]
    fn r2_definition() {
        let ae = build_csae(&CsaeConfig::default(), 3).unwrap();
        let flat = SegmentSet {
            segments: alloc::vec![Tensor::full(&[1000, 2], 2.0)],
            labels: alloc::vec![0],
            provenance: alloc::vec![crate::signal::Provenance { subject: 1, trial: 1 }],
            role: Role::Train,
        };
        assert!(reconstruct_r2(&ae, &flat).is_err());
    }
}
