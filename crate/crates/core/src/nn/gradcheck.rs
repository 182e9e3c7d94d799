//! Central finite-difference verification of analytic gradients.

use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::graph::{Gradients, LayerKind, ModelGraph, Trace};
use super::loss;
use crate::{Error, Result, Tensor};

/// Denominator floor for the relative error, so exactly-zero gradients
/// (e.g. the shift-invariant attention bias) compare on an absolute scale.
pub const REL_FLOOR: f64 = 1e-6;

/// Something with a scalar loss of an input and analytic gradients for both
/// its graph parameters and the input.
pub trait Differentiable {
    fn graph(&self) -> &ModelGraph;
    fn graph_mut(&mut self) -> &mut ModelGraph;
    fn loss(&self, input: &Tensor) -> Result<f64>;
    fn loss_and_grad(&self, input: &Tensor) -> Result<(f64, Tensor, Gradients)>;

    /// Sign of every value the loss is non-smooth in. Two points with equal
    /// patterns lie on one smooth piece of the loss.
    fn kink_pattern(&self, input: &Tensor) -> Result<Vec<bool>> {
        let trace = self.graph().trace(input)?;
        Ok(leaky_relu_signs(self.graph(), &trace, 0..self.graph().len()))
    }
}

/// Signs of the inputs to every LeakyReLU layer in `range`.
pub fn leaky_relu_signs(graph: &ModelGraph, trace: &Trace, range: core::ops::Range<usize>) -> Vec<bool> {
    range
        .filter(|&i| graph.layers[i].spec.kind == LayerKind::LeakyRelu)
        .flat_map(|i| trace.input_of(i).data().iter().map(|&v| v >= 0.0))
        .collect()
}

/// Loss applied to the final output of a plain graph.
#[derive(Debug, Clone)]
pub enum OutputLoss {
    /// `sum r*y`, exact under central differences.
    Linear(Tensor),
    /// `sum r*y + 0.5 sum y^2`
    Probe(Tensor),
    Mse(Tensor),
    CrossEntropy(usize),
}

#[derive(Debug, Clone)]
pub struct GraphLoss {
    pub graph: ModelGraph,
    pub loss: OutputLoss,
}

impl GraphLoss {
    fn value_and_grad(&self, y: &Tensor) -> Result<(f64, Tensor)> {
        match &self.loss {
            OutputLoss::Linear(r) => Ok((r.dot(y), r.clone())),
            OutputLoss::Probe(r) => {
                let l = r.dot(y) + 0.5 * y.dot(y);
                let mut g = r.clone();
                g.add_assign(y);
                Ok((l, g))
            }
            OutputLoss::Mse(target) => Ok((loss::mse_loss(target, y)?, loss::mse_grad(target, y)?)),
            OutputLoss::CrossEntropy(label) => {
                let yh = loss::one_hot(*label, y.numel())?;
                Ok((loss::cross_entropy(y, &yh)?, loss::cross_entropy_grad(y, &yh)?))
            }
        }
    }
}

impl Differentiable for GraphLoss {
    fn graph(&self) -> &ModelGraph {
        &self.graph
    }

    fn graph_mut(&mut self) -> &mut ModelGraph {
        &mut self.graph
    }

    fn loss(&self, input: &Tensor) -> Result<f64> {
        let y = self.graph.forward(input)?;
        Ok(self.value_and_grad(&y)?.0)
    }

    fn loss_and_grad(&self, input: &Tensor) -> Result<(f64, Tensor, Gradients)> {
        let trace = self.graph.trace(input)?;
        let (l, g) = self.value_and_grad(trace.output())?;
        let mut grads = Gradients::zeros_like(&self.graph);
        let dx = self.graph.backward(&trace, &g, &mut grads)?;
        Ok((l, dx, grads))
    }
}

/// Which coordinates to probe.
#[derive(Debug, Clone, Copy)]
pub enum Coverage {
    All,
    /// At most `per_tensor` random coordinates from every tensor.
    Sample {
        per_tensor: usize,
        seed: u64,
    },
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    /// `(layer name, max relative error)` for every parameterised layer.
    pub per_layer: Vec<(String, f64)>,
    pub input_rel_error: f64,
    pub max_rel_error: f64,
    pub checked: usize,
    /// Coordinates skipped because every probe step crossed a kink.
    pub kinked: usize,
    pub passed: bool,
}

pub fn rel_error(analytic: f64, numeric: f64) -> f64 {
    rel_error_floor(analytic, numeric, REL_FLOOR)
}

fn rel_error_floor(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Steps `h / 10^i` tried per coordinate.
const PROBE_STEPS: usize = 5;

/// At most one coordinate in this many may go unchecked for lack of a kink-free step.
const MAX_KINKED_FRACTION: usize = 20;

/// Kink-free steps compared before stopping.
const USABLE_STEPS: usize = 3;

/// Denominator floor at which an absolute error of ten times the rounding noise
/// of a difference quotient, `eps * |loss| / h`, still passes `tol`.
fn noise_floor(loss: f64, h: f64, tol: f64) -> f64 {
    (10.0 * f64::EPSILON * loss.abs().max(1.0) / (h * tol)).max(REL_FLOOR)
}

fn pick(n: usize, coverage: Coverage, salt: u64) -> Vec<usize> {
    match coverage {
        Coverage::All => (0..n).collect(),
        Coverage::Sample { per_tensor, seed } if per_tensor < n => {
            let mut rng = ChaCha8Rng::seed_from_u64(crate::rng::derive_seed(seed, salt));
            let mut v = sample(&mut rng, n, per_tensor).into_vec();
            v.sort_unstable();
            v
        }
        Coverage::Sample { .. } => (0..n).collect(),
    }
}

/// Loss and kink pattern at one probe point.
type Probe = (f64, Vec<bool>);

/// Relative error of `analytic` against central differences at shrinking steps.
/// Steps whose endpoints leave the smooth piece of `x0` are discarded; of the
/// first [`USABLE_STEPS`] that remain the best agreement counts, since rounding
/// still corrupts small steps on a flat coordinate. `None` if no step is usable.
fn probe_error<F: FnMut(f64) -> Result<Probe>>(
    mut f: F,
    x0: f64,
    h: f64,
    analytic: f64,
    floor: &[f64; PROBE_STEPS],
) -> Result<Option<f64>> {
    let here = f(x0)?.1;
    let mut best: Option<f64> = None;
    let mut used = 0;
    let mut step = h;
    for fl in floor {
        let (plus, kp) = f(x0 + step)?;
        let (minus, km) = f(x0 - step)?;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::NonFinite("gradient_check probe loss".into()));
        }
        if kp == here && km == here {
            let err = rel_error_floor(analytic, (plus - minus) / (2.0 * step), *fl);
            best = Some(best.map_or(err, |b| b.min(err)));
            used += 1;
            if used == USABLE_STEPS || err == 0.0 {
                break;
            }
        }
        step /= 10.0;
    }
    Ok(best)
}

/// Compares analytic gradients against `(f(w+h) - f(w-h)) / 2h` for parameters
/// and input elements (see [`probe_error`]); passes iff the maximum relative
/// error is below `tol` and at most a fraction of coordinates had only kinked steps.
pub fn gradient_check<M: Differentiable>(
    model: &mut M,
    input: &Tensor,
    h: f64,
    tol: f64,
    coverage: Coverage,
) -> Result<GradCheckReport> {
    let (l0, d_input, grads) = model.loss_and_grad(input)?;
    if !l0.is_finite() {
        return Err(Error::NonFinite("gradient_check loss".into()));
    }
    let floor: [f64; PROBE_STEPS] = core::array::from_fn(|i| noise_floor(l0, h / libm::pow(10.0, i as f64), tol));
    let mut per_layer = Vec::new();
    let mut checked = 0;
    let mut kinked = 0;
    for li in 0..model.graph().layers.len() {
        let Some(g) = grads.layers[li].clone() else {
            continue;
        };
        let mut worst: f64 = 0.0;
        for (which, analytic) in [(0usize, &g.weight), (1, &g.bias)] {
            for idx in pick(analytic.numel(), coverage, (li * 2 + which) as u64) {
                let read = |m: &M| {
                    let p = m.graph().layers[li].params.as_ref().unwrap();
                    if which == 0 {
                        p.weight.data()[idx]
                    } else {
                        p.bias.data()[idx]
                    }
                };
                let x0 = read(model);
                let err = probe_error(
                    |v| {
                        let p = model.graph_mut().layers[li].params.as_mut().unwrap();
                        let t = if which == 0 { &mut p.weight } else { &mut p.bias };
                        t.data_mut()[idx] = v;
                        Ok((model.loss(input)?, model.kink_pattern(input)?))
                    },
                    x0,
                    h,
                    analytic.data()[idx],
                    &floor,
                )?;
                let p = model.graph_mut().layers[li].params.as_mut().unwrap();
                let t = if which == 0 { &mut p.weight } else { &mut p.bias };
                t.data_mut()[idx] = x0;
                match err {
                    Some(e) => worst = worst.max(e),
                    None => kinked += 1,
                }
                checked += 1;
            }
        }
        per_layer.push((model.graph().layers[li].name.clone(), worst));
    }
    let mut probe = input.clone();
    let mut input_rel: f64 = 0.0;
    for idx in pick(input.numel(), coverage, u64::MAX) {
        let x0 = probe.data()[idx];
        let err = probe_error(
            |v| {
                probe.data_mut()[idx] = v;
                Ok((model.loss(&probe)?, model.kink_pattern(&probe)?))
            },
            x0,
            h,
            d_input.data()[idx],
            &floor,
        )?;
        probe.data_mut()[idx] = x0;
        match err {
            Some(e) => input_rel = input_rel.max(e),
            None => kinked += 1,
        }
        checked += 1;
    }
    let max_rel = per_layer.iter().map(|(_, e)| *e).fold(input_rel, f64::max);
    Ok(GradCheckReport {
        per_layer,
        input_rel_error: input_rel,
        max_rel_error: max_rel,
        checked,
        kinked,
        passed: max_rel < tol && kinked * MAX_KINKED_FRACTION <= checked,
    })
}
