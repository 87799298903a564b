//! Small feed-forward networks with reverse-mode gradients.
//!
//! Batches are row-major: one sample per row. Every layer computes
//! `act(x · Wᵀ + b)`; each output entry is one in-order dot product, so a
//! sample's result is bitwise independent of what else is in the batch.

mod io;
mod loss;

use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use io::{read_mlp, write_mlp, MLP_FORMAT_VERSION, MLP_MAGIC};
pub use loss::{argmax_rows, softmax_rows, LossKind, Targets};

use crate::error::{shape_err, Error, Result};
use crate::matrix::{dot, DenseMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Relu,
    Tanh,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Identity => z,
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative at pre-activation `z`, given the activated value `a`.
    #[inline]
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - a * a,
        }
    }

    pub(crate) fn tag(self) -> u8 {
        match self {
            Activation::Identity => 0,
            Activation::Relu => 1,
            Activation::Tanh => 2,
        }
    }

    pub(crate) fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Activation::Identity),
            1 => Some(Activation::Relu),
            2 => Some(Activation::Tanh),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    weights: DenseMatrix,
    bias: Vec<f64>,
    activation: Activation,
}

impl DenseLayer {
    /// `weights` is `out × in`.
    pub fn new(weights: DenseMatrix, bias: Vec<f64>, activation: Activation) -> Result<Self> {
        if bias.len() != weights.rows() {
            return Err(shape_err("DenseLayer::new", weights.rows(), bias.len()));
        }
        if weights.rows() == 0 || weights.cols() == 0 {
            return Err(Error::InvalidArgument("layer dimensions must be positive".into()));
        }
        if let Some(index) = bias.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self {
            weights,
            bias,
            activation,
        })
    }

    /// Uniform init in `±sqrt(6 / (in + out))`, zero bias.
    pub fn random(input: usize, output: usize, activation: Activation, rng: &mut impl Rng) -> Self {
        let bound = (6.0 / (input + output) as f64).sqrt();
        let weights = DenseMatrix::from_fn(output, input, |_, _| rng.random_range(-bound..=bound));
        Self {
            weights,
            bias: vec![0.0; output],
            activation,
        }
    }

    pub fn weights(&self) -> &DenseMatrix {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn input_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.rows()
    }

    pub fn param_count(&self) -> usize {
        self.weights.rows() * self.weights.cols() + self.bias.len()
    }

    fn pre_activation(&self, x: &DenseMatrix) -> DenseMatrix {
        let mut z = DenseMatrix::zeros(x.rows(), self.output_dim());
        for i in 0..x.rows() {
            let xi = x.row(i);
            let zi = z.row_mut(i);
            for (j, out) in zi.iter_mut().enumerate() {
                *out = dot(xi, self.weights.row(j)) + self.bias[j];
            }
        }
        z
    }
}

static NEXT_NET_ID: AtomicU64 = AtomicU64::new(1);

fn fresh_id() -> u64 {
    NEXT_NET_ID.fetch_add(1, Ordering::Relaxed)
}

/// An ordered stack of dense layers with a freeze flag per layer.
#[derive(Debug, Clone)]
pub struct Mlp {
    layers: Vec<DenseLayer>,
    frozen: Vec<bool>,
    // Identifies the parameter state a tape was recorded against.
    id: u64,
}

impl PartialEq for Mlp {
    fn eq(&self, other: &Self) -> bool {
        self.layers == other.layers && self.frozen == other.frozen
    }
}

impl Mlp {
    pub fn new(layers: Vec<DenseLayer>, frozen: Vec<bool>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidArgument("network needs at least one layer".into()));
        }
        if frozen.len() != layers.len() {
            return Err(shape_err("Mlp::new frozen flags", layers.len(), frozen.len()));
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].output_dim() != pair[1].input_dim() {
                return Err(shape_err(
                    "Mlp::new layer chain",
                    format!("layer {} input {}", i + 1, pair[0].output_dim()),
                    pair[1].input_dim(),
                ));
            }
        }
        Ok(Self {
            layers,
            frozen,
            id: fresh_id(),
        })
    }

    pub fn unfrozen(layers: Vec<DenseLayer>) -> Result<Self> {
        let n = layers.len();
        Self::new(layers, vec![false; n])
    }

    /// Randomly initialised network with widths `dims[0] → … → dims[last]`,
    /// `hidden` activation between layers and `output` on the last layer.
    pub fn random(dims: &[usize], hidden: Activation, output: Activation, rng: &mut impl Rng) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(Error::InvalidArgument(format!("bad layer widths {dims:?}")));
        }
        let last = dims.len() - 2;
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(i, w)| DenseLayer::random(w[0], w[1], if i == last { output } else { hidden }, rng))
            .collect();
        Self::unfrozen(layers)
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].output_dim()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(DenseLayer::param_count).sum()
    }

    pub fn is_frozen(&self, layer: usize) -> bool {
        self.frozen[layer]
    }

    pub fn frozen_flags(&self) -> &[bool] {
        &self.frozen
    }

    pub fn set_frozen(&mut self, layer: usize, frozen: bool) {
        self.frozen[layer] = frozen;
    }

    pub fn freeze_all(mut self) -> Self {
        self.frozen.iter_mut().for_each(|f| *f = true);
        self
    }

    pub fn unfreeze_all(mut self) -> Self {
        self.frozen.iter_mut().for_each(|f| *f = false);
        self
    }

    /// Layers of `self` followed by layers of `tail`.
    pub fn chain(&self, tail: &Mlp) -> Result<Mlp> {
        let mut layers = self.layers.clone();
        layers.extend(tail.layers.iter().cloned());
        let mut frozen = self.frozen.clone();
        frozen.extend(&tail.frozen);
        Mlp::new(layers, frozen)
    }

    /// Little-endian bytes of every parameter, in layer order.
    pub fn parameter_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.param_count() * 8);
        for l in &self.layers {
            for v in l.weights.as_slice().iter().chain(&l.bias) {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    fn check_input(&self, x: &DenseMatrix) -> Result<()> {
        if x.cols() != self.input_dim() {
            return Err(shape_err("forward input", format!("{} columns", self.input_dim()), x.cols()));
        }
        Ok(())
    }

    /// Forward pass without recording a tape.
    pub fn predict(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        self.check_input(x)?;
        let mut h = x.clone();
        for layer in &self.layers {
            let act = layer.activation;
            h = layer.pre_activation(&h).map(|z| act.apply(z));
        }
        Ok(h)
    }
}

/// Intermediates of one forward pass, consumed by one backward pass.
#[derive(Debug)]
pub struct GradTape {
    net_id: u64,
    inputs: Vec<DenseMatrix>,
    pre: Vec<DenseMatrix>,
    outputs: DenseMatrix,
}

impl GradTape {
    pub fn outputs(&self) -> &DenseMatrix {
        &self.outputs
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrads {
    pub d_weights: DenseMatrix,
    pub d_bias: Vec<f64>,
}

impl LayerGrads {
    fn sum_sq(&self) -> f64 {
        self.d_weights.frobenius_sq() + self.d_bias.iter().map(|v| v * v).sum::<f64>()
    }

    fn scale(&mut self, alpha: f64) {
        self.d_weights = self.d_weights.scale(alpha);
        self.d_bias.iter_mut().for_each(|v| *v *= alpha);
    }
}

/// Per-layer gradients of one network.
pub type Grads = Vec<LayerGrads>;

pub fn grad_norm(grads: &[LayerGrads]) -> f64 {
    grads.iter().map(LayerGrads::sum_sq).sum::<f64>().sqrt()
}

/// Rescales `grads` in place so their joint norm is at most `max_norm`.
pub fn clip_grad_norm(grads: &mut [LayerGrads], max_norm: f64) -> f64 {
    let norm = grad_norm(grads);
    if norm > max_norm && norm > 0.0 {
        let s = max_norm / norm;
        grads.iter_mut().for_each(|g| g.scale(s));
    }
    norm
}

/// Elementwise sum of two gradient sets.
pub fn add_grads(a: &[LayerGrads], b: &[LayerGrads]) -> Result<Grads> {
    if a.len() != b.len() {
        return Err(shape_err("add_grads", a.len(), b.len()));
    }
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d_bias = x.d_bias.iter().zip(&y.d_bias).map(|(p, q)| p + q).collect();
            Ok(LayerGrads {
                d_weights: x.d_weights.add(&y.d_weights)?,
                d_bias,
            })
        })
        .collect()
}

/// Forward pass recording everything backward needs.
pub fn forward(net: &Mlp, x: &DenseMatrix) -> Result<(DenseMatrix, GradTape)> {
    net.check_input(x)?;
    let mut inputs = Vec::with_capacity(net.len());
    let mut pre = Vec::with_capacity(net.len());
    let mut h = x.clone();
    for layer in &net.layers {
        let z = layer.pre_activation(&h);
        let act = layer.activation;
        let a = z.map(|v| act.apply(v));
        inputs.push(h);
        pre.push(z);
        h = a;
    }
    let tape = GradTape {
        net_id: net.id,
        inputs,
        pre,
        outputs: h.clone(),
    };
    Ok((h, tape))
}

/// Propagates `d_output` (gradient of a scalar loss with respect to the
/// network output) back through every layer. Returns per-layer parameter
/// gradients, frozen layers included, and the gradient with respect to the
/// network input.
pub fn backward_from_output(net: &Mlp, tape: GradTape, d_output: &DenseMatrix) -> Result<(Grads, DenseMatrix)> {
    if tape.net_id != net.id || tape.inputs.len() != net.len() {
        return Err(Error::StaleTape);
    }
    if d_output.shape() != tape.outputs.shape() {
        return Err(shape_err(
            "backward d_output",
            format!("{:?}", tape.outputs.shape()),
            format!("{:?}", d_output.shape()),
        ));
    }
    let GradTape {
        inputs, pre, outputs, ..
    } = tape;
    let mut grads: Vec<LayerGrads> = Vec::with_capacity(net.len());
    let mut upstream = d_output.clone();
    let mut activated = outputs;
    for (idx, layer) in net.layers.iter().enumerate().rev() {
        let z = &pre[idx];
        let act = layer.activation;
        // dL/dz = dL/da ⊙ act'(z)
        let mut dz = upstream;
        if act != Activation::Identity {
            for ((g, &zv), &av) in dz.as_mut_slice().iter_mut().zip(z.as_slice()).zip(activated.as_slice()) {
                *g *= act.derivative(zv, av);
            }
        }
        let d_weights = dz.transa_matmul(&inputs[idx])?;
        let mut d_bias = vec![0.0; layer.output_dim()];
        for r in 0..dz.rows() {
            for (b, g) in d_bias.iter_mut().zip(dz.row(r)) {
                *b += g;
            }
        }
        upstream = dz.matmul(&layer.weights)?;
        activated = inputs[idx].clone();
        grads.push(LayerGrads { d_weights, d_bias });
    }
    grads.reverse();
    Ok((grads, upstream))
}

/// Mean batch loss and per-layer gradients.
pub fn backward(net: &Mlp, tape: GradTape, loss: LossKind, targets: &Targets) -> Result<(f64, Grads)> {
    if tape.net_id != net.id {
        return Err(Error::StaleTape);
    }
    let (value, d_out) = loss.evaluate(&tape.outputs, targets)?;
    let (grads, _) = backward_from_output(net, tape, &d_out)?;
    Ok((value, grads))
}

/// One SGD step: unfrozen layers move by `−learning_rate · grad`, frozen
/// layers are copied through untouched.
pub fn apply_grads(net: &Mlp, grads: &[LayerGrads], learning_rate: f64) -> Result<Mlp> {
    if grads.len() != net.len() {
        return Err(shape_err("apply_grads layer count", net.len(), grads.len()));
    }
    if !(learning_rate > 0.0 && learning_rate.is_finite()) {
        return Err(Error::InvalidArgument(format!("learning rate {learning_rate} must be > 0")));
    }
    let mut layers = Vec::with_capacity(net.len());
    for (i, (layer, g)) in net.layers.iter().zip(grads).enumerate() {
        if g.d_weights.shape() != layer.weights.shape() || g.d_bias.len() != layer.bias.len() {
            return Err(shape_err(
                "apply_grads",
                format!("layer {i} {:?}", layer.weights.shape()),
                format!("{:?}", g.d_weights.shape()),
            ));
        }
        if net.frozen[i] {
            layers.push(layer.clone());
            continue;
        }
        let mut weights = layer.weights.clone();
        weights.axpy(-learning_rate, &g.d_weights)?;
        let bias = layer
            .bias
            .iter()
            .zip(&g.d_bias)
            .map(|(b, d)| b - learning_rate * d)
            .collect();
        layers.push(DenseLayer {
            weights,
            bias,
            activation: layer.activation,
        });
    }
    Ok(Mlp {
        layers,
        frozen: net.frozen.clone(),
        id: fresh_id(),
    })
}

/// Splits into layers `[0, b)` and `[b, len)`.
pub fn split_at(net: &Mlp, b: usize) -> Result<(Mlp, Mlp)> {
    if b == 0 || b >= net.len() {
        return Err(Error::IndexOutOfRange {
            index: b,
            valid: format!("1..{}", net.len()),
        });
    }
    let head = Mlp::new(net.layers[..b].to_vec(), net.frozen[..b].to_vec())?;
    let tail = Mlp::new(net.layers[b..].to_vec(), net.frozen[b..].to_vec())?;
    Ok((head, tail))
}
