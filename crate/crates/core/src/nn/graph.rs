//! Feed-forward layer graphs with cached forward traces and manual backprop.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::ops::Range;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::init::he_normal;
use super::ops;
use crate::rng::derive_seed;
use crate::{Error, Result, Tensor};

pub const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LayerKind {
    Conv1d,
    TConv1d,
    Dense,
    LayerNorm,
    LeakyRelu,
    AttentionPool,
    /// Unweighted time-mean, the GAP replacement for attention pooling.
    MeanPool,
    Softmax,
}

impl LayerKind {
    pub const ALL: [LayerKind; 8] = [
        LayerKind::Conv1d,
        LayerKind::TConv1d,
        LayerKind::Dense,
        LayerKind::LayerNorm,
        LayerKind::LeakyRelu,
        LayerKind::AttentionPool,
        LayerKind::MeanPool,
        LayerKind::Softmax,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LayerKind::Conv1d => "conv1d",
            LayerKind::TConv1d => "tconv1d",
            LayerKind::Dense => "dense",
            LayerKind::LayerNorm => "layer_norm",
            LayerKind::LeakyRelu => "leaky_relu",
            LayerKind::AttentionPool => "attention_pool",
            LayerKind::MeanPool => "mean_pool",
            LayerKind::Softmax => "softmax",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }

    pub fn has_params(self) -> bool {
        matches!(
            self,
            LayerKind::Conv1d | LayerKind::TConv1d | LayerKind::Dense | LayerKind::LayerNorm | LayerKind::AttentionPool
        )
    }
}

impl fmt::Display for LayerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Which part of a pipeline a layer belongs to; freeze policies select on this.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LayerGroup {
    Encoder,
    Decoder,
    /// Classifier layer norm, head convolution and pooling.
    Head,
    /// The two hidden dense layers of the classifier.
    Mlp,
    Output,
}

impl LayerGroup {
    pub const ALL: [LayerGroup; 5] = [
        LayerGroup::Encoder,
        LayerGroup::Decoder,
        LayerGroup::Head,
        LayerGroup::Mlp,
        LayerGroup::Output,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LayerGroup::Encoder => "encoder",
            LayerGroup::Decoder => "decoder",
            LayerGroup::Head => "head",
            LayerGroup::Mlp => "mlp",
            LayerGroup::Output => "output",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|g| g.name() == s)
    }
}

/// Static description of one layer.
///
/// For `Dense` the channel counts are the flat feature widths; for `LayerNorm`
/// and pooling they are both the feature width `D`. Unused fields are 0/1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel_size: usize,
    pub stride: usize,
    pub alpha: f64,
    pub trainable: bool,
}

impl LayerSpec {
    fn base(kind: LayerKind, channels_in: usize, channels_out: usize) -> Self {
        Self {
            kind,
            in_channels: channels_in,
            out_channels: channels_out,
            kernel_size: 1,
            stride: 1,
            alpha: 0.0,
            trainable: kind.has_params(),
        }
    }

    pub fn conv1d(c_in: usize, c_out: usize, kernel: usize, stride: usize) -> Self {
        Self {
            kernel_size: kernel,
            stride,
            ..Self::base(LayerKind::Conv1d, c_in, c_out)
        }
    }

    pub fn tconv1d(c_in: usize, c_out: usize, kernel: usize, stride: usize) -> Self {
        Self {
            kernel_size: kernel,
            stride,
            ..Self::base(LayerKind::TConv1d, c_in, c_out)
        }
    }

    pub fn dense(f_in: usize, f_out: usize) -> Self {
        Self::base(LayerKind::Dense, f_in, f_out)
    }

    pub fn layer_norm(d: usize) -> Self {
        Self::base(LayerKind::LayerNorm, d, d)
    }

    pub fn leaky_relu(alpha: f64) -> Self {
        Self {
            alpha,
            ..Self::base(LayerKind::LeakyRelu, 0, 0)
        }
    }

    pub fn attention_pool(d: usize) -> Self {
        Self::base(LayerKind::AttentionPool, d, d)
    }

    pub fn mean_pool(d: usize) -> Self {
        Self::base(LayerKind::MeanPool, d, d)
    }

    pub fn softmax() -> Self {
        Self::base(LayerKind::Softmax, 0, 0)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(alloc::format!("{}: {msg}", self.kind)));
        if self.stride == 0 {
            return bad("stride must be >= 1");
        }
        if self.kernel_size == 0 {
            return bad("kernel_size must be >= 1");
        }
        if self.kind == LayerKind::LeakyRelu && !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad("alpha must lie in (0, 1)");
        }
        if self.kind.has_params() && (self.in_channels == 0 || self.out_channels == 0) {
            return bad("channel counts must be >= 1");
        }
        if !self.kind.has_params() && self.trainable {
            return bad("parameter-free layers cannot be trainable");
        }
        Ok(())
    }

    /// `(weight shape, bias shape, fan_in)` for parameterised kinds.
    pub fn param_shapes(&self) -> Option<(Vec<usize>, Vec<usize>, usize)> {
        let (ci, co, k) = (self.in_channels, self.out_channels, self.kernel_size);
        match self.kind {
            LayerKind::Conv1d => Some((alloc::vec![k, ci, co], alloc::vec![co], k * ci)),
            LayerKind::TConv1d => Some((alloc::vec![k, co, ci], alloc::vec![co], k * ci)),
            LayerKind::Dense => Some((alloc::vec![ci, co], alloc::vec![co], ci)),
            LayerKind::LayerNorm => Some((alloc::vec![ci], alloc::vec![ci], ci)),
            LayerKind::AttentionPool => Some((alloc::vec![ci], alloc::vec![1], ci)),
            _ => None,
        }
    }

    /// Output shape for a given input shape; `None` if the input cannot be processed.
    pub fn output_shape(&self, input: &[usize]) -> Option<Vec<usize>> {
        match (self.kind, input) {
            (LayerKind::Conv1d, &[t, c]) if c == self.in_channels => {
                ops::conv_out_len(t, self.kernel_size, self.stride).map(|t| alloc::vec![t, self.out_channels])
            }
            (LayerKind::TConv1d, &[t, c]) if c == self.in_channels => Some(alloc::vec![
                ops::tconv_out_len(t, self.kernel_size, self.stride),
                self.out_channels
            ]),
            (LayerKind::Dense, s) if s.iter().product::<usize>() == self.in_channels => {
                Some(alloc::vec![self.out_channels])
            }
            (LayerKind::LayerNorm, &[t, d]) if d == self.in_channels => Some(alloc::vec![t, d]),
            (LayerKind::AttentionPool | LayerKind::MeanPool, &[_, d]) if d == self.in_channels => Some(alloc::vec![d]),
            (LayerKind::LeakyRelu, s) => Some(s.to_vec()),
            (LayerKind::Softmax, &[k]) => Some(alloc::vec![k]),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub weight: Tensor,
    pub bias: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub name: String,
    pub group: LayerGroup,
    pub spec: LayerSpec,
    pub params: Option<Params>,
}

/// Per-layer cached values beyond the layer input.
#[derive(Debug, Clone)]
enum Cache {
    None,
    LayerNorm(ops::LayerNormCache),
    Attention { weights: Tensor, pooled: Tensor },
    Softmax(Tensor),
}

/// Forward trace over a contiguous layer range.
#[derive(Debug, Clone)]
pub struct Trace {
    start: usize,
    inputs: Vec<Tensor>,
    caches: Vec<Cache>,
    output: Tensor,
}

impl Trace {
    pub fn output(&self) -> &Tensor {
        &self.output
    }

    /// Input seen by absolute layer index `i`.
    pub fn input_of(&self, i: usize) -> &Tensor {
        &self.inputs[i - self.start]
    }
}

/// Parameter gradients aligned with a graph's layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Option<Params>>,
}

impl Gradients {
    pub fn zeros_like(graph: &ModelGraph) -> Self {
        Self {
            layers: graph
                .layers
                .iter()
                .map(|l| {
                    l.params.as_ref().map(|p| Params {
                        weight: Tensor::zeros(p.weight.shape()),
                        bias: Tensor::zeros(p.bias.shape()),
                    })
                })
                .collect(),
        }
    }

    pub fn accumulate(&mut self, other: &Gradients) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            if let (Some(a), Some(b)) = (a.as_mut(), b.as_ref()) {
                a.weight.add_assign(&b.weight);
                a.bias.add_assign(&b.bias);
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        for p in self.layers.iter_mut().flatten() {
            p.weight.scale(s);
            p.bias.scale(s);
        }
    }
}

/// Ordered layer list plus parameters; used for every network in the pipeline.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ModelGraph {
    pub layers: Vec<Layer>,
}

impl ModelGraph {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a layer with He-normal weights (zero bias, unit layer-norm gain)
    /// drawn from a stream derived from `seed` and the layer position.
    pub fn push(&mut self, name: &str, group: LayerGroup, spec: LayerSpec, seed: u64) -> Result<()> {
        spec.validate()?;
        let params = match spec.param_shapes() {
            None => None,
            Some((w_shape, b_shape, fan_in)) => {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, self.layers.len() as u64));
                let weight = if spec.kind == LayerKind::LayerNorm {
                    Tensor::full(&w_shape, 1.0)
                } else {
                    he_normal(&w_shape, fan_in, &mut rng)?
                };
                Some(Params {
                    weight,
                    bias: Tensor::zeros(&b_shape),
                })
            }
        };
        self.layers.push(Layer {
            name: name.into(),
            group,
            spec,
            params,
        });
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.layers.iter().position(|l| l.name == name)
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .filter_map(|l| l.params.as_ref())
            .map(|p| p.weight.numel() + p.bias.numel())
            .sum()
    }

    /// Range of layers belonging to `group` (groups are contiguous).
    pub fn group_range(&self, group: LayerGroup) -> Option<Range<usize>> {
        let start = self.layers.iter().position(|l| l.group == group)?;
        let end = self.layers[start..]
            .iter()
            .position(|l| l.group != group)
            .map_or(self.layers.len(), |e| start + e);
        Some(start..end)
    }

    pub fn set_trainable(&mut self, mut pred: impl FnMut(&Layer) -> bool) {
        for l in &mut self.layers {
            l.spec.trainable = l.params.is_some() && pred(l);
        }
    }

    /// Shapes flowing out of every layer for a given input shape.
    pub fn shapes(&self, input: &[usize]) -> Result<Vec<Vec<usize>>> {
        let mut cur = input.to_vec();
        let mut out = Vec::with_capacity(self.layers.len());
        for l in &self.layers {
            cur = l.spec.output_shape(&cur).ok_or_else(|| Error::ShapeMismatch {
                op: "graph",
                expected: alloc::vec![l.spec.in_channels],
                got: cur.clone(),
            })?;
            out.push(cur.clone());
        }
        Ok(out)
    }

    fn layer_forward(&self, idx: usize, input: &Tensor) -> Result<(Tensor, Cache)> {
        let layer = &self.layers[idx];
        let spec = &layer.spec;
        let p = layer.params.as_ref();
        let (out, cache) = match spec.kind {
            LayerKind::Conv1d => {
                let p = p.unwrap();
                (ops::conv1d(input, &p.weight, &p.bias, spec.stride)?, Cache::None)
            }
            LayerKind::TConv1d => {
                let p = p.unwrap();
                (ops::tconv1d(input, &p.weight, &p.bias, spec.stride)?, Cache::None)
            }
            LayerKind::Dense => {
                let p = p.unwrap();
                (ops::dense(input, &p.weight, &p.bias)?, Cache::None)
            }
            LayerKind::LayerNorm => {
                let p = p.unwrap();
                let (y, c) = ops::layer_norm(input, &p.weight, &p.bias, LAYER_NORM_EPS)?;
                (y, Cache::LayerNorm(c))
            }
            LayerKind::LeakyRelu => (ops::leaky_relu(input, spec.alpha), Cache::None),
            LayerKind::AttentionPool => {
                let p = p.unwrap();
                let (y, w) = ops::attention_pool(input, &p.weight, p.bias.data()[0])?;
                (y.clone(), Cache::Attention { weights: w, pooled: y })
            }
            LayerKind::MeanPool => (ops::mean_pool(input)?, Cache::None),
            LayerKind::Softmax => {
                if input.rank() != 1 {
                    return Err(Error::ShapeMismatch {
                        op: "softmax",
                        expected: alloc::vec![input.numel()],
                        got: input.shape().to_vec(),
                    });
                }
                let y = ops::softmax(input);
                (y.clone(), Cache::Softmax(y))
            }
        };
        out.ensure_finite(&layer.name)?;
        Ok((out, cache))
    }

    pub fn forward(&self, input: &Tensor) -> Result<Tensor> {
        self.forward_range(0..self.layers.len(), input)
    }

    /// Forward pass over `range` without keeping a trace.
    pub fn forward_range(&self, range: Range<usize>, input: &Tensor) -> Result<Tensor> {
        let mut cur = input.clone();
        for i in range {
            cur = self.layer_forward(i, &cur)?.0;
        }
        Ok(cur)
    }

    pub fn trace(&self, input: &Tensor) -> Result<Trace> {
        self.trace_range(0..self.layers.len(), input)
    }

    pub fn trace_range(&self, range: Range<usize>, input: &Tensor) -> Result<Trace> {
        let mut inputs = Vec::with_capacity(range.len());
        let mut caches = Vec::with_capacity(range.len());
        let start = range.start;
        let mut cur = input.clone();
        for i in range {
            let (out, cache) = self.layer_forward(i, &cur)?;
            inputs.push(core::mem::replace(&mut cur, out));
            caches.push(cache);
        }
        Ok(Trace {
            start,
            inputs,
            caches,
            output: cur,
        })
    }

    /// Backpropagates `grad_out` through a trace, adding parameter gradients into
    /// `grads` and returning the gradient w.r.t. the trace input.
    pub fn backward(&self, trace: &Trace, grad_out: &Tensor, grads: &mut Gradients) -> Result<Tensor> {
        let mut g = grad_out.clone();
        for (off, (input, cache)) in trace.inputs.iter().zip(&trace.caches).enumerate().rev() {
            let idx = trace.start + off;
            let layer = &self.layers[idx];
            let spec = &layer.spec;
            let p = layer.params.as_ref();
            let (d_in, d_params) = match (spec.kind, cache) {
                (LayerKind::Conv1d, _) => {
                    let (dx, dw, db) = ops::conv1d_backward(input, &p.unwrap().weight, spec.stride, &g)?;
                    (dx, Some((dw, db)))
                }
                (LayerKind::TConv1d, _) => {
                    let (dx, dw, db) = ops::tconv1d_backward(input, &p.unwrap().weight, spec.stride, &g)?;
                    (dx, Some((dw, db)))
                }
                (LayerKind::Dense, _) => {
                    let (dx, dw, db) = ops::dense_backward(input, &p.unwrap().weight, &g)?;
                    (dx, Some((dw, db)))
                }
                (LayerKind::LayerNorm, Cache::LayerNorm(c)) => {
                    let (dx, dw, db) = ops::layer_norm_backward(c, &p.unwrap().weight, &g)?;
                    (dx, Some((dw, db)))
                }
                (LayerKind::LeakyRelu, _) => (ops::leaky_relu_backward(input, spec.alpha, &g), None),
                (LayerKind::AttentionPool, Cache::Attention { weights, pooled }) => {
                    let (dx, dw, db) = ops::attention_pool_backward(input, &p.unwrap().weight, weights, pooled, &g)?;
                    (dx, Some((dw, db)))
                }
                (LayerKind::MeanPool, _) => (ops::mean_pool_backward(input.shape()[0], &g), None),
                (LayerKind::Softmax, Cache::Softmax(probs)) => (ops::softmax_backward(probs, &g), None),
                _ => unreachable!("cache variant always matches the layer kind"),
            };
            if let (Some((dw, db)), Some(slot)) = (d_params, grads.layers[idx].as_mut()) {
                slot.weight.add_assign(&dw);
                slot.bias.add_assign(&db);
            }
            g = d_in;
        }
        Ok(g)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn param_free_kinds_carry_no_params() {
        let mut g = ModelGraph::new();
        g.push("a", LayerGroup::Head, LayerSpec::leaky_relu(0.1), 1).unwrap();
        g.push("s", LayerGroup::Output, LayerSpec::softmax(), 1).unwrap();
        assert!(g.layers.iter().all(|l| l.params.is_none() && !l.spec.trainable));
    }

    #[test]
    fn spec_validation() {
        assert!(LayerSpec::conv1d(1, 1, 3, 0).validate().is_err());
        assert!(LayerSpec::conv1d(1, 1, 0, 1).validate().is_err());
        assert!(LayerSpec::leaky_relu(1.0).validate().is_err());
        assert!(LayerSpec::leaky_relu(0.0).validate().is_err());
        let mut s = LayerSpec::softmax();
        s.trainable = true;
        assert!(s.validate().is_err());
    }

    #[test]
    fn dense_10_by_10_has_110_params() {
        let mut g = ModelGraph::new();
        g.push("d", LayerGroup::Mlp, LayerSpec::dense(10, 10), 3).unwrap();
        assert_eq!(g.param_count(), 110);
    }

    #[test]
    fn group_ranges() {
        let mut g = ModelGraph::new();
        g.push("e", LayerGroup::Encoder, LayerSpec::dense(4, 4), 0).unwrap();
        g.push("e2", LayerGroup::Encoder, LayerSpec::leaky_relu(0.1), 0)
            .unwrap();
        g.push("o", LayerGroup::Output, LayerSpec::dense(4, 2), 0).unwrap();
        assert_eq!(g.group_range(LayerGroup::Encoder), Some(0..2));
        assert_eq!(g.group_range(LayerGroup::Output), Some(2..3));
        assert_eq!(g.group_range(LayerGroup::Decoder), None);
    }

    #[test]
    fn kind_names_round_trip() {
        for k in LayerKind::ALL {
            assert_eq!(LayerKind::from_name(k.name()), Some(k));
        }
    }
}
