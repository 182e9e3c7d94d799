//! Mini-batch training loop shared by the autoencoders and classifiers:
//! AdamW, reduce-on-plateau learning-rate decay and early stopping with
//! best-weight restoration.

use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::nn::{AdamW, AdamWConfig, Gradients, ModelGraph};
use crate::rng::derive_seed;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub early_stop_patience: usize,
    pub plateau_patience: usize,
    pub plateau_factor: f64,
    pub min_lr: f64,
    pub weight_decay: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            batch_size: 32,
            max_epochs: 300,
            early_stop_patience: 20,
            plateau_patience: 8,
            plateau_factor: 0.5,
            min_lr: 1e-6,
            weight_decay: 1e-4,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        if !(self.learning_rate > 0.0) {
            return bad("learning_rate must be > 0");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1");
        }
        if self.early_stop_patience == 0 || self.plateau_patience == 0 {
            return bad("patience values must be >= 1");
        }
        if !(self.plateau_factor > 0.0 && self.plateau_factor < 1.0) {
            return bad("plateau_factor must lie in (0, 1)");
        }
        if !(self.min_lr >= 0.0 && self.min_lr <= self.learning_rate) {
            return bad("min_lr must lie in [0, learning_rate]");
        }
        if !(self.weight_decay >= 0.0) {
            return bad("weight_decay must be >= 0");
        }
        Ok(())
    }
}

/// Wall-clock source; `()` reads as zero, which keeps pure runs deterministic.
pub trait Clock {
    fn seconds(&self) -> f64;
}

impl Clock for () {
    fn seconds(&self) -> f64 {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    /// Learning rate used during this epoch.
    pub lr: f64,
    pub wall_clock: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    EarlyStop,
    MaxEpochs,
}

impl StopReason {
    pub fn name(self) -> &'static str {
        match self {
            StopReason::EarlyStop => "early_stop",
            StopReason::MaxEpochs => "max_epochs",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainLog {
    pub epochs: Vec<EpochRecord>,
    /// Index into `epochs` of the lowest validation loss.
    pub best_epoch: Option<usize>,
    pub stop_reason: StopReason,
}

impl TrainLog {
    pub fn best_val_loss(&self) -> Option<f64> {
        self.best_epoch.map(|i| self.epochs[i].val_loss)
    }
}

/// Runs the loop. `batch_grad` returns the batch-mean loss and gradients for
/// the given training indices; `validate` returns the validation loss.
/// On return `graph` holds the parameters of the best validation epoch.
pub fn fit(
    graph: &mut ModelGraph,
    n_train: usize,
    cfg: &TrainConfig,
    clock: &dyn Clock,
    mut batch_grad: impl FnMut(&ModelGraph, &[usize]) -> Result<(f64, Gradients)>,
    mut validate: impl FnMut(&ModelGraph) -> Result<f64>,
) -> Result<TrainLog> {
    cfg.validate()?;
    if n_train == 0 {
        return Err(Error::EmptyInput("training set"));
    }
    let mut opt = AdamW::new(AdamWConfig {
        learning_rate: cfg.learning_rate,
        weight_decay: cfg.weight_decay,
        ..AdamWConfig::default()
    });
    let mut order: Vec<usize> = (0..n_train).collect();
    let mut log = TrainLog {
        epochs: Vec::new(),
        best_epoch: None,
        stop_reason: StopReason::MaxEpochs,
    };
    let mut best: Option<(f64, ModelGraph)> = None;
    let mut stale = 0;
    let mut plateau = 0;
    let mut lr = cfg.learning_rate;
    let t0 = clock.seconds();

    for epoch in 0..cfg.max_epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, epoch as u64));
        order.shuffle(&mut rng);
        opt.set_learning_rate(lr);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let (loss, grads) = batch_grad(graph, batch)?;
            if !loss.is_finite() {
                return Err(Error::NonFinite(alloc::format!("training loss at epoch {epoch}")));
            }
            opt.step(graph, &grads)?;
            total += loss * batch.len() as f64;
        }
        let val_loss = validate(graph)?;
        if !val_loss.is_finite() {
            return Err(Error::NonFinite(alloc::format!("validation loss at epoch {epoch}")));
        }
        log.epochs.push(EpochRecord {
            epoch,
            train_loss: total / n_train as f64,
            val_loss,
            lr,
            wall_clock: clock.seconds() - t0,
        });
        if best.as_ref().is_none_or(|(b, _)| val_loss < *b) {
            best = Some((val_loss, graph.clone()));
            log.best_epoch = Some(epoch);
            stale = 0;
            plateau = 0;
        } else {
            stale += 1;
            plateau += 1;
            if stale >= cfg.early_stop_patience {
                log.stop_reason = StopReason::EarlyStop;
                break;
            }
            if plateau >= cfg.plateau_patience {
                lr = (lr * cfg.plateau_factor).max(cfg.min_lr);
                plateau = 0;
            }
        }
    }
    if let Some((_, g)) = best {
        *graph = g;
    }
    Ok(log)
}

/// Sums per-sample `(loss, grads)` over a batch and returns their means.
pub fn batch_mean(
    graph: &ModelGraph,
    batch: &[usize],
    mut per_sample: impl FnMut(usize, &mut Gradients) -> Result<f64>,
) -> Result<(f64, Gradients)> {
    let mut grads = Gradients::zeros_like(graph);
    let mut loss = 0.0;
    for &i in batch {
        loss += per_sample(i, &mut grads)?;
    }
    let inv = 1.0 / batch.len() as f64;
    grads.scale(inv);
    Ok((loss * inv, grads))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{LayerGroup, LayerSpec};

    fn one_weight() -> ModelGraph {
        let mut g = ModelGraph::new();
        g.push("w", LayerGroup::Mlp, LayerSpec::dense(1, 1), 1).unwrap();
        g
    }

    #[test]
    fn zero_epochs_leave_graph_unchanged() {
        let mut g = one_weight();
        let before = g.clone();
        let cfg = TrainConfig {
            max_epochs: 0,
            ..Default::default()
        };
        let log = fit(
            &mut g,
            4,
            &cfg,
            &(),
            |g, _| Ok((1.0, Gradients::zeros_like(g))),
            |_| Ok(1.0),
        )
        .unwrap();
        assert!(log.epochs.is_empty());
        assert_eq!(g, before);
    }

    #[test]
    fn worsening_validation_triggers_early_stop_and_restores_best() {
        let mut g = one_weight();
        let cfg = TrainConfig {
            max_epochs: 50,
            early_stop_patience: 3,
            plateau_patience: 2,
            learning_rate: 0.1,
            ..Default::default()
        };
        let mut calls = 0.0;
        let mut seen = Vec::new();
        let log = fit(
            &mut g,
            2,
            &cfg,
            &(),
            |g, _| {
                let mut gr = Gradients::zeros_like(g);
                gr.layers[0].as_mut().unwrap().weight.data_mut()[0] = 1.0;
                Ok((0.5, gr))
            },
            |g| {
                calls += 1.0;
                seen.push(g.layers[0].params.as_ref().unwrap().weight.clone());
                Ok(calls)
            },
        )
        .unwrap();
        assert_eq!(log.stop_reason, StopReason::EarlyStop);
        assert_eq!(log.epochs.len(), 4);
        assert_eq!(log.best_epoch, Some(0));
        assert_eq!(g.layers[0].params.as_ref().unwrap().weight, seen[0]);
        // plateau halves the rate after two stale epochs
        assert_eq!(log.epochs[3].lr, 0.05);
        assert!(log.epochs.windows(2).all(|w| w[1].lr <= w[0].lr));
    }

    #[test]
    fn non_finite_loss_aborts() {
        let mut g = one_weight();
        let r = fit(
            &mut g,
            1,
            &TrainConfig::default(),
            &(),
            |g, _| Ok((f64::NAN, Gradients::zeros_like(g))),
            |_| Ok(0.0),
        );
        assert!(matches!(r, Err(Error::NonFinite(_))));
    }

    #[test]
    fn config_validation() {
        let base = TrainConfig::default();
        assert!(base.validate().is_ok());
        assert!(TrainConfig {
            plateau_factor: 1.0,
            ..base
        }
        .validate()
        .is_err());
        assert!(TrainConfig {
            early_stop_patience: 0,
            ..base
        }
        .validate()
        .is_err());
        assert!(TrainConfig { batch_size: 0, ..base }.validate().is_err());
    }
}
