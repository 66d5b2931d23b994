use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::tensorcore::Tensor;

/// Hidden-layer activation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    x
                } else {
                    0.0
                }
            }
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative expressed in terms of the pre-activation input.
    fn derivative(self, pre: f64) -> f64 {
        match self {
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => {
                let t = pre.tanh();
                1.0 - t * t
            }
        }
    }
}

/// Final-layer activation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputActivation {
    Sigmoid,
    Identity,
}

impl OutputActivation {
    fn apply(self, x: f64) -> f64 {
        match self {
            OutputActivation::Sigmoid => 1.0 / (1.0 + (-x).exp()),
            OutputActivation::Identity => x,
        }
    }

    fn derivative_from_output(self, out: f64) -> f64 {
        match self {
            OutputActivation::Sigmoid => out * (1.0 - out),
            OutputActivation::Identity => 1.0,
        }
    }
}

/// One affine layer: `weight` is `out x in` row-major, `bias` has length `out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Layer {
    pub fn new(weight: Tensor, bias: Tensor) -> Result<Self> {
        if weight.shape().len() != 2 {
            return Err(Error::shape(
                "Layer::new",
                "rank-2 weight",
                format!("rank {}", weight.shape().len()),
            ));
        }
        if bias.len() != weight.rows() {
            return Err(Error::shape(
                "Layer::new",
                format!("bias of length {}", weight.rows()),
                format!("length {}", bias.len()),
            ));
        }
        Ok(Layer { weight, bias })
    }

    pub fn out_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn in_dim(&self) -> usize {
        self.weight.cols()
    }
}

/// Weights and biases of the layered decoder, together with its activations.
///
/// The decoder is the composition of affine layers with the hidden activation
/// between them and the output activation after the last layer. Adjacent layer
/// dimensions must chain.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderParams {
    pub layers: Vec<Layer>,
    pub activation: Activation,
    pub output_activation: OutputActivation,
}

impl DecoderParams {
    pub fn new(
        layers: Vec<Layer>,
        activation: Activation,
        output_activation: OutputActivation,
    ) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Config("decoder needs at least one layer".into()));
        }
        for (l, pair) in layers.windows(2).enumerate() {
            if pair[1].in_dim() != pair[0].out_dim() {
                return Err(Error::shape(
                    format!("decoder layer {}", l + 1),
                    format!("input width {}", pair[0].out_dim()),
                    format!("input width {}", pair[1].in_dim()),
                ));
            }
        }
        Ok(DecoderParams {
            layers,
            activation,
            output_activation,
        })
    }

    /// Glorot-uniform initialization (bounds `±sqrt(6/(fan_in+fan_out))`),
    /// deterministic in the seed. `dims` lists layer widths input-first,
    /// e.g. `[d, 256, 256, p]`.
    pub fn seeded(
        dims: &[usize],
        activation: Activation,
        output_activation: OutputActivation,
        seed: u64,
    ) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::Config(
                "decoder widths need at least input and output".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::with_capacity(dims.len() - 1);
        for w in dims.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let weight: Vec<f64> = (0..fan_in * fan_out)
                .map(|_| rng.gen_range(-bound..bound))
                .collect();
            layers.push(Layer {
                weight: Tensor::matrix(fan_out, fan_in, weight)?,
                bias: Tensor::zeros(vec![fan_out]),
            });
        }
        DecoderParams::new(layers, activation, output_activation)
    }

    /// Single-layer identity decoder of width `d` (identity output activation).
    pub fn identity(d: usize) -> Self {
        let mut w = vec![0.0; d * d];
        for i in 0..d {
            w[i * d + i] = 1.0;
        }
        DecoderParams {
            layers: vec![Layer {
                weight: Tensor::matrix(d, d, w).unwrap(),
                bias: Tensor::zeros(vec![d]),
            }],
            activation: Activation::Relu,
            output_activation: OutputActivation::Identity,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    /// Total number of scalar parameters.
    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.len() + l.bias.len())
            .sum()
    }

    /// Decodes one latent vector.
    pub fn forward(&self, z: &[f64]) -> Result<Vec<f64>> {
        self.check_input(z.len())?;
        let mut cur = z.to_vec();
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let mut next = affine(layer, &cur);
            if l == last {
                for v in next.iter_mut() {
                    *v = self.output_activation.apply(*v);
                }
            } else {
                for v in next.iter_mut() {
                    *v = self.activation.apply(*v);
                }
            }
            cur = next;
        }
        Ok(cur)
    }

    /// Tensor-typed wrapper over [`DecoderParams::forward`].
    pub fn forward_tensor(&self, z: &Tensor) -> Result<Tensor> {
        Tensor::vector(self.forward(z.data())?)
    }

    /// Forward pass retaining per-layer pre-activations and activations.
    fn forward_trace(&self, z: &[f64]) -> Result<ForwardTrace> {
        self.check_input(z.len())?;
        let last = self.layers.len() - 1;
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut post = Vec::with_capacity(self.layers.len());
        let mut cur = z.to_vec();
        for (l, layer) in self.layers.iter().enumerate() {
            let p = affine(layer, &cur);
            let a: Vec<f64> = if l == last {
                p.iter().map(|&v| self.output_activation.apply(v)).collect()
            } else {
                p.iter().map(|&v| self.activation.apply(v)).collect()
            };
            pre.push(p);
            cur = a.clone();
            post.push(a);
        }
        Ok(ForwardTrace { pre, post })
    }

    /// Reverse-mode gradients of `forward` by the chain rule.
    ///
    /// Returns the gradients with respect to every weight and bias plus the
    /// gradient with respect to the latent input, for an upstream gradient
    /// `grad_out` on the decoder output.
    pub fn backward(&self, z: &[f64], grad_out: &[f64]) -> Result<(DecoderGrads, Vec<f64>)> {
        if grad_out.len() != self.output_dim() {
            return Err(Error::shape(
                "backward",
                format!("grad_out of length {}", self.output_dim()),
                format!("length {}", grad_out.len()),
            ));
        }
        let trace = self.forward_trace(z)?;
        let mut grads = DecoderGrads::zeros_like(self);
        let last = self.layers.len() - 1;

        // delta = dL/d(pre-activation of current layer)
        let mut delta: Vec<f64> = grad_out
            .iter()
            .zip(trace.post[last].iter())
            .map(|(&g, &out)| g * self.output_activation.derivative_from_output(out))
            .collect();

        for l in (0..self.layers.len()).rev() {
            let input: &[f64] = if l == 0 { z } else { &trace.post[l - 1] };
            let layer = &self.layers[l];
            let (out_dim, in_dim) = (layer.out_dim(), layer.in_dim());

            {
                let gw = grads.layers[l].weight.data_mut();
                for o in 0..out_dim {
                    let base = o * in_dim;
                    for i in 0..in_dim {
                        gw[base + i] = delta[o] * input[i];
                    }
                }
                grads.layers[l].bias.data_mut().copy_from_slice(&delta);
            }

            // propagate to the layer input
            let w = layer.weight.data();
            let mut grad_in = vec![0.0; in_dim];
            for o in 0..out_dim {
                let base = o * in_dim;
                let d = delta[o];
                for i in 0..in_dim {
                    grad_in[i] += d * w[base + i];
                }
            }

            if l > 0 {
                let prev_pre = &trace.pre[l - 1];
                delta = grad_in
                    .iter()
                    .zip(prev_pre.iter())
                    .map(|(&g, &p)| g * self.activation.derivative(p))
                    .collect();
            } else {
                delta = grad_in;
            }
        }

        Ok((grads, delta))
    }

    fn check_input(&self, len: usize) -> Result<()> {
        if len != self.input_dim() {
            return Err(Error::shape(
                "decoder layer 0",
                format!("input of length {}", self.input_dim()),
                format!("length {len}"),
            ));
        }
        Ok(())
    }
}

struct ForwardTrace {
    pre: Vec<Vec<f64>>,
    post: Vec<Vec<f64>>,
}

fn affine(layer: &Layer, x: &[f64]) -> Vec<f64> {
    let (out_dim, in_dim) = (layer.out_dim(), layer.in_dim());
    let w = layer.weight.data();
    let b = layer.bias.data();
    let mut y = Vec::with_capacity(out_dim);
    for o in 0..out_dim {
        let base = o * in_dim;
        let mut acc = b[o];
        for i in 0..in_dim {
            acc += w[base + i] * x[i];
        }
        y.push(acc);
    }
    y
}

/// Per-layer gradient (or moment) buffers mirroring [`DecoderParams`] shapes.
#[derive(Debug, Clone)]
pub struct DecoderGrads {
    pub layers: Vec<Layer>,
}

impl DecoderGrads {
    pub fn zeros_like(params: &DecoderParams) -> Self {
        let layers = params
            .layers
            .iter()
            .map(|l| Layer {
                weight: Tensor::zeros(l.weight.shape().to_vec()),
                bias: Tensor::zeros(l.bias.shape().to_vec()),
            })
            .collect();
        DecoderGrads { layers }
    }

    pub fn add_assign(&mut self, other: &DecoderGrads) {
        for (a, b) in self.layers.iter_mut().zip(other.layers.iter()) {
            for (x, y) in a.weight.data_mut().iter_mut().zip(b.weight.data()) {
                *x += y;
            }
            for (x, y) in a.bias.data_mut().iter_mut().zip(b.bias.data()) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for l in self.layers.iter_mut() {
            for x in l.weight.data_mut() {
                *x *= factor;
            }
            for x in l.bias.data_mut() {
                *x *= factor;
            }
        }
    }

    /// Euclidean norm over all entries.
    pub fn global_norm(&self) -> f64 {
        let mut acc = 0.0;
        for l in &self.layers {
            for &x in l.weight.data() {
                acc += x * x;
            }
            for &x in l.bias.data() {
                acc += x * x;
            }
        }
        acc.sqrt()
    }
}

/// Decodes every row of `codes` (an `n x d` tensor), one forward pass per row.
///
/// Rows are processed in parallel into disjoint output slices, so the result
/// is bitwise identical regardless of thread count.
pub fn decode_rows(params: &DecoderParams, codes: &Tensor) -> Result<Tensor> {
    let n = codes.rows();
    let d = codes.cols();
    if d != params.input_dim() {
        return Err(Error::shape(
            "decode_rows",
            format!("code width {}", params.input_dim()),
            format!("width {d}"),
        ));
    }
    let p = params.output_dim();
    let mut out = vec![0.0; n * p];
    out.par_chunks_mut(p).enumerate().try_for_each(|(i, dst)| {
        let y = params.forward(codes.row(i))?;
        dst.copy_from_slice(&y);
        Ok::<(), Error>(())
    })?;
    Tensor::matrix(n, p, out)
}
