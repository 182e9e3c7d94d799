//! Parameter, memory and FLOP accounting for a forward pass.
//!
//! Counting rules (a multiply-accumulate is 2 FLOPs):
//! - conv1d: `2*K*C_in` per output element plus one bias add
//! - tconv1d: `2*C_out*K` per input element plus one bias add per output element
//! - dense: `2*F_in` per output plus one bias add
//! - layer norm: 8 per element; leaky ReLU: 1 per element
//! - attention pool: `4*D + 1` per time step plus 3 per step for its softmax
//! - mean pool: 1 per input element plus 1 per channel; softmax: 3 per element
//!
//! Static memory is 4 bytes per parameter. Runtime memory is 4 bytes times the
//! largest input-plus-output activation count of any single layer.

use alloc::vec::Vec;

use crate::nn::{LayerKind, ModelGraph};
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ResourceReport {
    pub params: usize,
    pub static_bytes: usize,
    pub runtime_bytes: usize,
    pub flops: u64,
}

pub const BYTES_PER_VALUE: usize = 4;

fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

pub fn resource_report(graph: &ModelGraph, input_shape: &[usize]) -> Result<ResourceReport> {
    let shapes = graph.shapes(input_shape)?;
    let mut inputs: Vec<&[usize]> = alloc::vec![input_shape];
    inputs.extend(shapes.iter().map(Vec::as_slice));
    let mut flops: u64 = 0;
    let mut peak = 0;
    for (i, layer) in graph.layers.iter().enumerate() {
        let (inp, out) = (inputs[i], shapes[i].as_slice());
        let (n_in, n_out) = (numel(inp), numel(out));
        peak = peak.max(n_in + n_out);
        let s = &layer.spec;
        let f = match s.kind {
            LayerKind::Conv1d => n_out * (2 * s.kernel_size * s.in_channels + 1),
            LayerKind::TConv1d => n_in * 2 * s.out_channels * s.kernel_size + n_out,
            LayerKind::Dense => n_out * (2 * n_in + 1),
            LayerKind::LayerNorm => 8 * n_in,
            LayerKind::LeakyRelu => n_in,
            LayerKind::AttentionPool => {
                let t = inp[0];
                t * (4 * s.in_channels + 1) + 3 * t
            }
            LayerKind::MeanPool => n_in + n_out,
            LayerKind::Softmax => 3 * n_in,
        };
        flops += f as u64;
    }
    let params = graph.param_count();
    Ok(ResourceReport {
        params,
        static_bytes: BYTES_PER_VALUE * params,
        runtime_bytes: BYTES_PER_VALUE * peak,
        flops,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{LayerGroup, LayerSpec};

    #[test]
    fn dense_ten_by_ten() {
        let mut g = ModelGraph::new();
        g.push("d", LayerGroup::Mlp, LayerSpec::dense(10, 10), 0).unwrap();
        let r = resource_report(&g, &[10]).unwrap();
        assert_eq!((r.params, r.static_bytes), (110, 440));
        assert_eq!(r.flops, 10 * 21);
    }

    #[test]
    fn conv_counting_rule() {
        let mut g = ModelGraph::new();
        // T_in = 12, K = 3 → T_out = 10
        g.push("c", LayerGroup::Encoder, LayerSpec::conv1d(2, 4, 3, 1), 0)
            .unwrap();
        let r = resource_report(&g, &[12, 2]).unwrap();
        assert_eq!(r.flops, 480 + 40);
        assert_eq!(r.runtime_bytes, 4 * (24 + 40));
    }
}
