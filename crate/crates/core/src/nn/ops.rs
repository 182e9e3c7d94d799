//! Forward and backward kernels for every layer kind.
//!
//! Sequence tensors are `[T × C]` (time-major). Convolution weights are
//! `[K × C_in × C_out]`; transposed-convolution weights are `[K × C_out × C_in]`,
//! which is the same memory layout as the convolution they are the adjoint of.

use alloc::vec;

use crate::{Error, Result, Tensor};

fn mismatch(op: &'static str, expected: &[usize], got: &[usize]) -> Error {
    Error::ShapeMismatch {
        op,
        expected: expected.to_vec(),
        got: got.to_vec(),
    }
}

pub fn conv_out_len(t_in: usize, kernel: usize, stride: usize) -> Option<usize> {
    if stride == 0 || kernel == 0 || t_in < kernel {
        None
    } else {
        Some((t_in - kernel) / stride + 1)
    }
}

pub fn tconv_out_len(t_in: usize, kernel: usize, stride: usize) -> usize {
    (t_in - 1) * stride + kernel
}

fn conv_dims(op: &'static str, input: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<(usize, usize, usize, usize)> {
    let (t_in, c_in) = input.dims2(op)?;
    let [k, wc_in, c_out] = weight.shape()[..] else {
        return Err(mismatch(op, &[0, c_in, 0], weight.shape()));
    };
    if wc_in != c_in {
        return Err(mismatch(op, &[k, c_in, c_out], weight.shape()));
    }
    if bias.shape() != [c_out] {
        return Err(mismatch(op, &[c_out], bias.shape()));
    }
    Ok((t_in, c_in, k, c_out))
}

/// Valid (unpadded) strided cross-correlation.
pub fn conv1d(input: &Tensor, weight: &Tensor, bias: &Tensor, stride: usize) -> Result<Tensor> {
    let (t_in, c_in, k, c_out) = conv_dims("conv1d", input, weight, bias)?;
    let t_out = conv_out_len(t_in, k, stride).ok_or(Error::TooShort {
        op: "conv1d",
        len: t_in,
        required: k,
    })?;
    let x = input.data();
    let w = weight.data();
    let mut out = Tensor::zeros(&[t_out, c_out]);
    let y = out.data_mut();
    for t in 0..t_out {
        let y_row = &mut y[t * c_out..(t + 1) * c_out];
        y_row.copy_from_slice(bias.data());
        for kk in 0..k {
            let x_row = &x[(t * stride + kk) * c_in..(t * stride + kk + 1) * c_in];
            for (c, &xv) in x_row.iter().enumerate() {
                let w_row = &w[(kk * c_in + c) * c_out..(kk * c_in + c + 1) * c_out];
                for (yo, &wo) in y_row.iter_mut().zip(w_row) {
                    *yo += xv * wo;
                }
            }
        }
    }
    Ok(out)
}

/// Gradients of [`conv1d`] w.r.t. input, weight and bias.
pub fn conv1d_backward(
    input: &Tensor,
    weight: &Tensor,
    stride: usize,
    grad_out: &Tensor,
) -> Result<(Tensor, Tensor, Tensor)> {
    let (t_in, c_in) = input.dims2("conv1d_backward")?;
    let [k, _, c_out] = weight.shape()[..] else {
        return Err(mismatch("conv1d_backward", &[0, c_in, 0], weight.shape()));
    };
    let (t_out, g_c) = grad_out.dims2("conv1d_backward")?;
    if g_c != c_out || Some(t_out) != conv_out_len(t_in, k, stride) {
        return Err(mismatch("conv1d_backward", &[t_out, c_out], grad_out.shape()));
    }
    let x = input.data();
    let w = weight.data();
    let g = grad_out.data();
    let mut d_in = Tensor::zeros(input.shape());
    let mut d_w = Tensor::zeros(weight.shape());
    let mut d_b = Tensor::zeros(&[c_out]);
    {
        let dx = d_in.data_mut();
        let dw = d_w.data_mut();
        let db = d_b.data_mut();
        for t in 0..t_out {
            let g_row = &g[t * c_out..(t + 1) * c_out];
            for (b, &gv) in db.iter_mut().zip(g_row) {
                *b += gv;
            }
            for kk in 0..k {
                let base = (t * stride + kk) * c_in;
                for c in 0..c_in {
                    let off = (kk * c_in + c) * c_out;
                    let w_row = &w[off..off + c_out];
                    let dw_row = &mut dw[off..off + c_out];
                    let xv = x[base + c];
                    let mut acc = 0.0;
                    for ((dwo, &wo), &gv) in dw_row.iter_mut().zip(w_row).zip(g_row) {
                        *dwo += xv * gv;
                        acc += wo * gv;
                    }
                    dx[base + c] += acc;
                }
            }
        }
    }
    Ok((d_in, d_w, d_b))
}

fn tconv_dims(input: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<(usize, usize, usize, usize)> {
    let op = "tconv1d";
    let (t_in, c_in) = input.dims2(op)?;
    let [k, c_out, wc_in] = weight.shape()[..] else {
        return Err(mismatch(op, &[0, 0, c_in], weight.shape()));
    };
    if wc_in != c_in {
        return Err(mismatch(op, &[k, c_out, c_in], weight.shape()));
    }
    if bias.shape() != [c_out] {
        return Err(mismatch(op, &[c_out], bias.shape()));
    }
    Ok((t_in, c_in, k, c_out))
}

/// Transposed convolution: input step `t` scatters into outputs `t·S .. t·S+K-1`.
pub fn tconv1d(input: &Tensor, weight: &Tensor, bias: &Tensor, stride: usize) -> Result<Tensor> {
    if stride == 0 {
        return Err(Error::InvalidConfig("tconv1d stride must be >= 1".into()));
    }
    let (t_in, c_in, k, c_out) = tconv_dims(input, weight, bias)?;
    let t_out = tconv_out_len(t_in, k, stride);
    let x = input.data();
    let w = weight.data();
    let mut out = Tensor::zeros(&[t_out, c_out]);
    let y = out.data_mut();
    for row in y.chunks_exact_mut(c_out) {
        row.copy_from_slice(bias.data());
    }
    for t in 0..t_in {
        let x_row = &x[t * c_in..(t + 1) * c_in];
        for kk in 0..k {
            let y_base = (t * stride + kk) * c_out;
            for o in 0..c_out {
                let w_row = &w[(kk * c_out + o) * c_in..(kk * c_out + o + 1) * c_in];
                let acc: f64 = x_row.iter().zip(w_row).map(|(a, b)| a * b).sum();
                y[y_base + o] += acc;
            }
        }
    }
    Ok(out)
}

/// Gradients of [`tconv1d`] w.r.t. input, weight and bias.
pub fn tconv1d_backward(
    input: &Tensor,
    weight: &Tensor,
    stride: usize,
    grad_out: &Tensor,
) -> Result<(Tensor, Tensor, Tensor)> {
    let (t_in, c_in) = input.dims2("tconv1d_backward")?;
    let [k, c_out, _] = weight.shape()[..] else {
        return Err(mismatch("tconv1d_backward", &[0, 0, c_in], weight.shape()));
    };
    let expected = [tconv_out_len(t_in, k, stride), c_out];
    if grad_out.shape() != expected {
        return Err(mismatch("tconv1d_backward", &expected, grad_out.shape()));
    }
    let x = input.data();
    let w = weight.data();
    let g = grad_out.data();
    let mut d_in = Tensor::zeros(input.shape());
    let mut d_w = Tensor::zeros(weight.shape());
    let mut d_b = Tensor::zeros(&[c_out]);
    for row in g.chunks_exact(c_out) {
        for (b, &gv) in d_b.data_mut().iter_mut().zip(row) {
            *b += gv;
        }
    }
    {
        let dx = d_in.data_mut();
        let dw = d_w.data_mut();
        for t in 0..t_in {
            let x_row = &x[t * c_in..(t + 1) * c_in];
            let dx_row = &mut dx[t * c_in..(t + 1) * c_in];
            for kk in 0..k {
                let g_base = (t * stride + kk) * c_out;
                for o in 0..c_out {
                    let gv = g[g_base + o];
                    let off = (kk * c_out + o) * c_in;
                    let w_row = &w[off..off + c_in];
                    let dw_row = &mut dw[off..off + c_in];
                    for c in 0..c_in {
                        dx_row[c] += gv * w_row[c];
                        dw_row[c] += gv * x_row[c];
                    }
                }
            }
        }
    }
    Ok((d_in, d_w, d_b))
}

/// Affine map on the flattened input: `out = xᵀW + b`, `W` is `[F_in × F_out]`.
pub fn dense(input: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let (f_in, f_out) = weight.dims2("dense")?;
    if input.numel() != f_in {
        return Err(mismatch("dense", &[f_in], input.shape()));
    }
    if bias.shape() != [f_out] {
        return Err(mismatch("dense", &[f_out], bias.shape()));
    }
    let w = weight.data();
    let mut out = bias.clone();
    let y = out.data_mut();
    for (i, &xv) in input.data().iter().enumerate() {
        if xv == 0.0 {
            continue;
        }
        for (yo, &wo) in y.iter_mut().zip(&w[i * f_out..(i + 1) * f_out]) {
            *yo += xv * wo;
        }
    }
    Ok(out)
}

pub fn dense_backward(input: &Tensor, weight: &Tensor, grad_out: &Tensor) -> Result<(Tensor, Tensor, Tensor)> {
    let (f_in, f_out) = weight.dims2("dense_backward")?;
    if grad_out.numel() != f_out || input.numel() != f_in {
        return Err(mismatch("dense_backward", &[f_out], grad_out.shape()));
    }
    let w = weight.data();
    let g = grad_out.data();
    let mut d_in = Tensor::zeros(input.shape());
    let mut d_w = Tensor::zeros(weight.shape());
    {
        let dx = d_in.data_mut();
        let dw = d_w.data_mut();
        for (i, &xv) in input.data().iter().enumerate() {
            let w_row = &w[i * f_out..(i + 1) * f_out];
            let dw_row = &mut dw[i * f_out..(i + 1) * f_out];
            let mut acc = 0.0;
            for ((dwo, &wo), &gv) in dw_row.iter_mut().zip(w_row).zip(g) {
                *dwo += xv * gv;
                acc += wo * gv;
            }
            dx[i] = acc;
        }
    }
    let d_b = Tensor::new(vec![f_out], g.to_vec())?;
    Ok((d_in, d_w, d_b))
}

/// Per-row normalization state kept for the backward pass.
#[derive(Debug, Clone)]
pub struct LayerNormCache {
    pub normalized: Tensor,
    pub inv_std: alloc::vec::Vec<f64>,
}

/// Normalizes every time step over its `D` feature channels (biased variance).
pub fn layer_norm(input: &Tensor, gamma: &Tensor, beta: &Tensor, eps: f64) -> Result<(Tensor, LayerNormCache)> {
    let (t, d) = input.dims2("layer_norm")?;
    if gamma.shape() != [d] || beta.shape() != [d] {
        return Err(mismatch("layer_norm", &[d], gamma.shape()));
    }
    let mut normalized = Tensor::zeros(&[t, d]);
    let mut out = Tensor::zeros(&[t, d]);
    let mut inv_std = vec![0.0; t];
    for r in 0..t {
        let x = input.row(r);
        let mean = x.iter().sum::<f64>() / d as f64;
        let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let inv = 1.0 / libm::sqrt(var + eps);
        inv_std[r] = inv;
        let n_row = &mut normalized.data_mut()[r * d..(r + 1) * d];
        for (n, &v) in n_row.iter_mut().zip(x) {
            *n = (v - mean) * inv;
        }
        let o_row = &mut out.data_mut()[r * d..(r + 1) * d];
        for j in 0..d {
            o_row[j] = gamma.data()[j] * normalized.data()[r * d + j] + beta.data()[j];
        }
    }
    Ok((out, LayerNormCache { normalized, inv_std }))
}

pub fn layer_norm_backward(
    cache: &LayerNormCache,
    gamma: &Tensor,
    grad_out: &Tensor,
) -> Result<(Tensor, Tensor, Tensor)> {
    let (t, d) = cache.normalized.dims2("layer_norm_backward")?;
    cache.normalized.same_shape(grad_out, "layer_norm_backward")?;
    let mut d_in = Tensor::zeros(&[t, d]);
    let mut d_gamma = Tensor::zeros(&[d]);
    let mut d_beta = Tensor::zeros(&[d]);
    let xh = cache.normalized.data();
    let g = grad_out.data();
    let gm = gamma.data();
    let mut dxh = vec![0.0; d];
    for r in 0..t {
        let mut sum = 0.0;
        let mut sum_x = 0.0;
        for j in 0..d {
            let idx = r * d + j;
            d_gamma.data_mut()[j] += g[idx] * xh[idx];
            d_beta.data_mut()[j] += g[idx];
            dxh[j] = g[idx] * gm[j];
            sum += dxh[j];
            sum_x += dxh[j] * xh[idx];
        }
        let scale = cache.inv_std[r] / d as f64;
        for j in 0..d {
            let idx = r * d + j;
            d_in.data_mut()[idx] = scale * (d as f64 * dxh[j] - sum - xh[idx] * sum_x);
        }
    }
    Ok((d_in, d_gamma, d_beta))
}

pub fn leaky_relu(input: &Tensor, alpha: f64) -> Tensor {
    let mut out = input.clone();
    for x in out.data_mut() {
        if *x <= 0.0 {
            *x *= alpha;
        }
    }
    out
}

/// Subgradient at exactly zero is `alpha`.
pub fn leaky_relu_backward(input: &Tensor, alpha: f64, grad_out: &Tensor) -> Tensor {
    let mut d = grad_out.clone();
    for (g, &x) in d.data_mut().iter_mut().zip(input.data()) {
        if x <= 0.0 {
            *g *= alpha;
        }
    }
    d
}

pub fn softmax(logits: &Tensor) -> Tensor {
    let z = logits.data();
    let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out = logits.clone();
    let mut sum = 0.0;
    for (p, &v) in out.data_mut().iter_mut().zip(z) {
        *p = libm::exp(v - max);
        sum += *p;
    }
    out.scale(1.0 / sum);
    out
}

/// Vector-Jacobian product of softmax given its output.
pub fn softmax_backward(probs: &Tensor, grad_out: &Tensor) -> Tensor {
    let inner = probs.dot(grad_out);
    let mut d = probs.clone();
    for (di, &g) in d.data_mut().iter_mut().zip(grad_out.data()) {
        *di *= g - inner;
    }
    d
}

/// Single-query additive attention over time steps; returns the context
/// vector and the attention weights.
pub fn attention_pool(features: &Tensor, score_weight: &Tensor, score_bias: f64) -> Result<(Tensor, Tensor)> {
    let (t, d) = features.dims2("attention_pool")?;
    if score_weight.shape() != [d] {
        return Err(mismatch("attention_pool", &[d], score_weight.shape()));
    }
    let scores = Tensor::from_fn(&[t], |r| {
        features
            .row(r)
            .iter()
            .zip(score_weight.data())
            .map(|(a, b)| a * b)
            .sum::<f64>()
            + score_bias
    });
    let weights = softmax(&scores);
    let mut out = Tensor::zeros(&[d]);
    for r in 0..t {
        let a = weights.data()[r];
        for (o, &f) in out.data_mut().iter_mut().zip(features.row(r)) {
            *o += a * f;
        }
    }
    Ok((out, weights))
}

/// Returns gradients w.r.t. features, score weight and score bias (as a `[1]` tensor).
pub fn attention_pool_backward(
    features: &Tensor,
    score_weight: &Tensor,
    weights: &Tensor,
    pooled: &Tensor,
    grad_out: &Tensor,
) -> Result<(Tensor, Tensor, Tensor)> {
    let (t, d) = features.dims2("attention_pool_backward")?;
    let g = grad_out.data();
    let pooled_dot = pooled.dot(grad_out);
    let mut d_feat = Tensor::zeros(&[t, d]);
    let mut d_w = Tensor::zeros(&[d]);
    let mut d_b = 0.0;
    for r in 0..t {
        let f = features.row(r);
        let a = weights.data()[r];
        let f_dot: f64 = f.iter().zip(g).map(|(x, y)| x * y).sum();
        let ds = a * (f_dot - pooled_dot);
        d_b += ds;
        let df = &mut d_feat.data_mut()[r * d..(r + 1) * d];
        for j in 0..d {
            df[j] = a * g[j] + ds * score_weight.data()[j];
            d_w.data_mut()[j] += ds * f[j];
        }
    }
    Ok((d_feat, d_w, Tensor::from_vec(vec![d_b])?))
}

/// Unweighted time-mean (global average pooling).
pub fn mean_pool(features: &Tensor) -> Result<Tensor> {
    let (t, d) = features.dims2("mean_pool")?;
    let mut out = Tensor::zeros(&[d]);
    for r in 0..t {
        for (o, &f) in out.data_mut().iter_mut().zip(features.row(r)) {
            *o += f;
        }
    }
    out.scale(1.0 / t as f64);
    Ok(out)
}

pub fn mean_pool_backward(t: usize, grad_out: &Tensor) -> Tensor {
    let d = grad_out.numel();
    Tensor::from_fn(&[t, d], |i| grad_out.data()[i % d] / t as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec::Vec;

    fn seq(v: &[f64], c: usize) -> Tensor {
        Tensor::new(vec![v.len() / c, c], v.to_vec()).unwrap()
    }

    fn kern(v: &[f64]) -> Tensor {
        Tensor::new(vec![v.len(), 1, 1], v.to_vec()).unwrap()
    }

    fn zero_bias(c: usize) -> Tensor {
        Tensor::zeros(&[c])
    }

    /// Direct sliding-window evaluation written independently of the kernel loops.
    fn conv_oracle(x: &[f64], k: &[f64], s: usize) -> Vec<f64> {
        let mut out = Vec::new();
        let mut off = 0;
        while off + k.len() <= x.len() {
            out.push(x[off..off + k.len()].iter().zip(k).map(|(a, b)| a * b).sum());
            off += s;
        }
        out
    }

    #[test]
    fn conv_examples() {
        let y = conv1d(&seq(&[1., 2., 3., 4.], 1), &kern(&[1., 0., -1.]), &zero_bias(1), 1).unwrap();
        assert_eq!(y.data(), &[-2., -2.]);
        assert_eq!(conv_oracle(&[1., 2., 3., 4.], &[1., 0., -1.], 1), y.data());

        let x = seq(&[1., 2., 3., 4., 5.], 1);
        let y = conv1d(&x, &kern(&[1., 1., 1.]), &zero_bias(1), 2).unwrap();
        assert_eq!(y.data(), &[6., 12.]);

        let y = conv1d(&x, &kern(&[1.]), &zero_bias(1), 1).unwrap();
        assert_eq!(y.data(), x.data());
    }

    #[test]
    fn conv_too_short_is_error() {
        let err = conv1d(&seq(&[1., 2.], 1), &kern(&[1., 1., 1.]), &zero_bias(1), 1);
        assert!(matches!(err, Err(Error::TooShort { .. })));
    }

    #[test]
    fn conv_channel_mismatch() {
        let w = Tensor::zeros(&[3, 2, 1]);
        assert!(matches!(
            conv1d(&seq(&[1., 2., 3.], 1), &w, &zero_bias(1), 1),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn tconv_examples() {
        let y = tconv1d(&seq(&[1., 2.], 1), &kern(&[1., 1.]), &zero_bias(1), 2).unwrap();
        assert_eq!(y.data(), &[1., 1., 2., 2.]);
        let x = seq(&[3., -1., 2.], 1);
        let y = tconv1d(&x, &kern(&[1.]), &zero_bias(1), 1).unwrap();
        assert_eq!(y.data(), x.data());
    }

    #[test]
    fn dense_examples() {
        let x = Tensor::from_vec(vec![1., 2.]).unwrap();
        let w = Tensor::new(vec![2, 2], vec![1., 0., 0., 2.]).unwrap();
        let b = Tensor::from_vec(vec![1., 1.]).unwrap();
        assert_eq!(dense(&x, &w, &b).unwrap().data(), &[2., 5.]);
        let eye = Tensor::new(vec![2, 2], vec![1., 0., 0., 1.]).unwrap();
        assert_eq!(dense(&x, &eye, &zero_bias(2)).unwrap().data(), x.data());
        let z = Tensor::zeros(&[2]);
        assert_eq!(dense(&z, &w, &b).unwrap().data(), b.data());
    }

    #[test]
    fn layer_norm_examples() {
        let one = Tensor::full(&[2], 1.0);
        let (y, _) = layer_norm(&seq(&[1., 3.], 2), &one, &zero_bias(2), 1e-12).unwrap();
        assert!((y.data()[0] + 1.0).abs() < 1e-9 && (y.data()[1] - 1.0).abs() < 1e-9);

        let beta = Tensor::from_vec(vec![0.5, -0.25]).unwrap();
        let (y, _) = layer_norm(&seq(&[4., 4.], 2), &one, &beta, 1e-5).unwrap();
        assert_eq!(y.data(), beta.data());

        let (y, _) = layer_norm(&seq(&[1., 7., -2., 3.], 2), &zero_bias(2), &beta, 1e-5).unwrap();
        assert_eq!(y.data(), &[0.5, -0.25, 0.5, -0.25]);
    }

    #[test]
    fn leaky_relu_examples() {
        let y = leaky_relu(&Tensor::from_vec(vec![-2.0, 5.0]).unwrap(), 0.3);
        assert!((y.data()[0] + 0.6).abs() < 1e-15);
        assert_eq!(y.data()[1], 5.0);
        let y = leaky_relu(&Tensor::from_vec(vec![-1., 0., 1.]).unwrap(), 0.01);
        assert_eq!(y.data(), &[-0.01, 0.0, 1.0]);
        let g = leaky_relu_backward(&Tensor::from_vec(vec![0.0]).unwrap(), 0.3, &Tensor::full(&[1], 1.0));
        assert_eq!(g.data(), &[0.3]);
    }

    #[test]
    fn softmax_examples() {
        let p = softmax(&Tensor::from_vec(vec![0., 0.]).unwrap());
        assert_eq!(p.data(), &[0.5, 0.5]);
        let p = softmax(&Tensor::from_vec(vec![core::f64::consts::LN_2, 0.]).unwrap());
        assert!((p.data()[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((p.data()[1] - 1.0 / 3.0).abs() < 1e-15);
        let a = softmax(&Tensor::from_vec(vec![0.3, -1.2, 2.0]).unwrap());
        let b = softmax(&Tensor::from_vec(vec![100.3, 98.8, 102.0]).unwrap());
        for (x, y) in a.data().iter().zip(b.data()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn attention_examples() {
        let f = seq(&[1., 2., 3., 6.], 2);
        let (y, _) = attention_pool(&f, &Tensor::zeros(&[2]), 0.7).unwrap();
        assert_eq!(y.data(), mean_pool(&f).unwrap().data());

        let single = seq(&[4., -1.], 2);
        let w = Tensor::from_vec(vec![3.0, 1.0]).unwrap();
        let (y, _) = attention_pool(&single, &w, -2.0).unwrap();
        assert_eq!(y.data(), single.data());

        // scores [0, 20]
        let w = Tensor::from_vec(vec![20.0, 0.0]).unwrap();
        let f = seq(&[0.0, 0.0, 1.0, 0.25], 2);
        let (y, _) = attention_pool(&f, &w, 0.0).unwrap();
        assert!((y.data()[0] - 1.0).abs() < 1e-8);
        assert!((y.data()[1] - 0.25).abs() < 1e-8);
    }
}
