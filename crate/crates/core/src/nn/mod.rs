//! Differentiable layer kernel: ops, graphs, losses, initialisation and AdamW.

pub mod gradcheck;
pub mod graph;
pub mod init;
pub mod loss;
pub mod ops;
pub mod optim;

pub use gradcheck::{
    gradient_check, leaky_relu_signs, Coverage, Differentiable, GradCheckReport, GraphLoss, OutputLoss,
};
pub use graph::{Gradients, Layer, LayerGroup, LayerKind, LayerSpec, ModelGraph, Params, Trace};
pub use init::he_normal;
pub use optim::{AdamW, AdamWConfig};
