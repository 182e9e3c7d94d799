//! AdamW with decoupled weight decay.

use alloc::collections::BTreeMap;
use alloc::string::String;

use super::graph::{Gradients, ModelGraph, Params};
use crate::{Error, Result, Tensor};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamWConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Moments {
    m: Params,
    v: Params,
}

/// Optimizer state: moments per layer name, one step counter per instance.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamW {
    pub config: AdamWConfig,
    step: u64,
    moments: BTreeMap<String, Moments>,
}

fn update(w: &mut Tensor, g: &Tensor, m: &mut Tensor, v: &mut Tensor, cfg: &AdamWConfig, c1: f64, c2: f64) {
    let lr = cfg.learning_rate;
    for i in 0..w.numel() {
        let gi = g.data()[i];
        let mi = cfg.beta1 * m.data()[i] + (1.0 - cfg.beta1) * gi;
        let vi = cfg.beta2 * v.data()[i] + (1.0 - cfg.beta2) * gi * gi;
        m.data_mut()[i] = mi;
        v.data_mut()[i] = vi;
        let m_hat = mi / c1;
        let v_hat = vi / c2;
        let wi = w.data()[i];
        w.data_mut()[i] = wi - lr * (m_hat / (libm::sqrt(v_hat) + cfg.eps) + cfg.weight_decay * wi);
    }
}

impl AdamW {
    pub fn new(config: AdamWConfig) -> Self {
        Self {
            config,
            step: 0,
            moments: BTreeMap::new(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn set_learning_rate(&mut self, lr: f64) {
        self.config.learning_rate = lr;
    }

    /// Applies one update to every trainable layer of `graph`.
    pub fn step(&mut self, graph: &mut ModelGraph, grads: &Gradients) -> Result<()> {
        if grads.layers.len() != graph.layers.len() {
            return Err(Error::ShapeMismatch {
                op: "adamw_step",
                expected: alloc::vec![graph.layers.len()],
                got: alloc::vec![grads.layers.len()],
            });
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - libm::pow(self.config.beta1, t as f64);
        let c2 = 1.0 - libm::pow(self.config.beta2, t as f64);
        let cfg = self.config;
        for (layer, grad) in graph.layers.iter_mut().zip(&grads.layers) {
            let (Some(p), Some(g)) = (layer.params.as_mut(), grad.as_ref()) else {
                continue;
            };
            if !layer.spec.trainable {
                continue;
            }
            p.weight.same_shape(&g.weight, "adamw_step")?;
            p.bias.same_shape(&g.bias, "adamw_step")?;
            let st = self.moments.entry(layer.name.clone()).or_insert_with(|| Moments {
                m: Params {
                    weight: Tensor::zeros(p.weight.shape()),
                    bias: Tensor::zeros(p.bias.shape()),
                },
                v: Params {
                    weight: Tensor::zeros(p.weight.shape()),
                    bias: Tensor::zeros(p.bias.shape()),
                },
            });
            update(
                &mut p.weight,
                &g.weight,
                &mut st.m.weight,
                &mut st.v.weight,
                &cfg,
                c1,
                c2,
            );
            update(&mut p.bias, &g.bias, &mut st.m.bias, &mut st.v.bias, &cfg, c1, c2);
        }
        Ok(())
    }
}
