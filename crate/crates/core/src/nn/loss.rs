//! Reconstruction, sparsity and classification losses with their gradients.

use crate::{Error, Result, Tensor};

pub const PROB_FLOOR: f64 = 1e-12;

/// Mean over elements of `(x - x_hat)^2`.
pub fn mse_loss(x: &Tensor, x_hat: &Tensor) -> Result<f64> {
    x.same_shape(x_hat, "mse_loss")?;
    let n = x.numel() as f64;
    Ok(x.data()
        .iter()
        .zip(x_hat.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / n)
}

/// Gradient of [`mse_loss`] w.r.t. `x_hat`.
pub fn mse_grad(x: &Tensor, x_hat: &Tensor) -> Result<Tensor> {
    x.same_shape(x_hat, "mse_grad")?;
    let n = x.numel() as f64;
    Ok(Tensor::from_fn(x.shape(), |i| {
        2.0 * (x_hat.data()[i] - x.data()[i]) / n
    }))
}

/// `lambda * sum |z|`.
pub fn l1_activity(z: &Tensor, lambda: f64) -> Result<f64> {
    if !(lambda >= 0.0) {
        return Err(Error::InvalidConfig("l1 lambda must be >= 0".into()));
    }
    if lambda == 0.0 {
        return Ok(0.0);
    }
    Ok(lambda * z.data().iter().map(|v| v.abs()).sum::<f64>())
}

/// Subgradient of [`l1_activity`]; zero at exactly zero.
pub fn l1_grad(z: &Tensor, lambda: f64) -> Tensor {
    Tensor::from_fn(z.shape(), |i| {
        let v = z.data()[i];
        if v > 0.0 {
            lambda
        } else if v < 0.0 {
            -lambda
        } else {
            0.0
        }
    })
}

/// `-sum y log p`, with `p` clamped to `[1e-12, 1]`.
pub fn cross_entropy(probs: &Tensor, one_hot: &Tensor) -> Result<f64> {
    probs.same_shape(one_hot, "cross_entropy")?;
    Ok(-probs
        .data()
        .iter()
        .zip(one_hot.data())
        .filter(|(_, &y)| y != 0.0)
        .map(|(&p, &y)| y * libm::log(p.clamp(PROB_FLOOR, 1.0)))
        .sum::<f64>())
}

/// Gradient of [`cross_entropy`] w.r.t. the probabilities.
pub fn cross_entropy_grad(probs: &Tensor, one_hot: &Tensor) -> Result<Tensor> {
    probs.same_shape(one_hot, "cross_entropy_grad")?;
    Ok(Tensor::from_fn(probs.shape(), |i| {
        let y = one_hot.data()[i];
        if y == 0.0 {
            0.0
        } else {
            -y / probs.data()[i].clamp(PROB_FLOOR, 1.0)
        }
    }))
}

pub fn one_hot(label: usize, classes: usize) -> Result<Tensor> {
    if label >= classes {
        return Err(Error::LabelOutOfRange { label, classes });
    }
    Ok(Tensor::from_fn(&[classes], |i| if i == label { 1.0 } else { 0.0 }))
}

/// Fused softmax + cross-entropy gradient on the logits: `p - y`.
pub fn softmax_ce_logit_grad(probs: &Tensor, label: usize) -> Result<Tensor> {
    let y = one_hot(label, probs.numel())?;
    Ok(Tensor::from_fn(probs.shape(), |i| probs.data()[i] - y.data()[i]))
}
