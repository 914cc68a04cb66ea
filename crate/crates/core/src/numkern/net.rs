//! Small fully connected networks with hand-written reverse-mode gradients.

use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use super::{Matrix, SeededRng};
use crate::error::{Error, Result};

static NEXT_NET_ID: AtomicU64 = AtomicU64::new(1);

fn fresh_id() -> u64 {
    NEXT_NET_ID.fetch_add(1, Ordering::Relaxed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Sigmoid,
    /// `ln(1 + e^x)`.
    Softplus,
    Identity,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Sigmoid => sigmoid(x),
            Activation::Softplus => x.max(0.0) + (-x.abs()).exp().ln_1p(),
            Activation::Identity => x,
        }
    }

    /// Derivative expressed through the activation's output `y`.
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Softplus => -(-y).exp_m1(),
            Activation::Identity => 1.0,
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// One affine map followed by an activation. `weights` is `in × out`,
/// `bias` is `1 × out`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub weights: Matrix,
    pub bias: Matrix,
    pub activation: Activation,
}

impl DenseLayer {
    pub fn fan_in(&self) -> usize {
        self.weights.rows()
    }

    pub fn fan_out(&self) -> usize {
        self.weights.cols()
    }
}

/// A feed-forward MLP over row-batched inputs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DenseNet {
    layers: Vec<DenseLayer>,
    #[serde(skip, default = "fresh_id")]
    id: u64,
    #[serde(skip)]
    generation: u64,
}

impl PartialEq for DenseNet {
    fn eq(&self, other: &Self) -> bool {
        self.layers == other.layers
    }
}

/// Per-layer activations retained by [`DenseNet::forward`] for backprop.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    net_id: u64,
    generation: u64,
    /// `inputs[l]` is the input fed to layer `l`; `outputs[l]` its activated output.
    inputs: Vec<Matrix>,
    outputs: Vec<Matrix>,
}

impl ForwardCache {
    pub fn output(&self) -> &Matrix {
        self.outputs.last().expect("net has at least one layer")
    }
}

/// Gradients for every layer, in layer order.
#[derive(Debug, Clone, PartialEq)]
pub struct NetGrads {
    pub weights: Vec<Matrix>,
    pub biases: Vec<Matrix>,
}

impl NetGrads {
    /// Interleaved `[w0, b0, w1, b1, ...]`, matching [`DenseNet::param_blocks_mut`].
    pub fn blocks(&self) -> Vec<&Matrix> {
        self.weights
            .iter()
            .zip(&self.biases)
            .flat_map(|(w, b)| [w, b])
            .collect()
    }

    pub fn scale(&mut self, s: f64) {
        for m in self.weights.iter_mut().chain(self.biases.iter_mut()) {
            m.map_inplace(|v| v * s);
        }
    }

    pub fn add_assign(&mut self, other: &NetGrads) -> Result<()> {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            a.add_assign(b)?;
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            a.add_assign(b)?;
        }
        Ok(())
    }
}

impl DenseNet {
    /// Xavier-uniform weights, zero biases. `sizes` lists layer widths from
    /// input to output; one activation per affine layer.
    pub fn new(sizes: &[usize], activations: &[Activation], rng: &mut SeededRng) -> Result<Self> {
        if sizes.len() < 2 {
            return Err(Error::Spec(format!(
                "network needs at least input and output sizes, got {sizes:?}"
            )));
        }
        if activations.len() != sizes.len() - 1 {
            return Err(Error::Spec(format!(
                "{} layer sizes need {} activations, got {}",
                sizes.len(),
                sizes.len() - 1,
                activations.len()
            )));
        }
        if sizes.contains(&0) {
            return Err(Error::Spec(format!("zero-width layer in {sizes:?}")));
        }
        let layers = sizes
            .windows(2)
            .zip(activations)
            .map(|(w, &activation)| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                DenseLayer {
                    weights: rng.uniform_matrix(fan_in, fan_out, -limit, limit),
                    bias: Matrix::zeros(1, fan_out),
                    activation,
                }
            })
            .collect();
        Ok(DenseNet {
            layers,
            id: fresh_id(),
            generation: 0,
        })
    }

    /// Wraps explicit layers after checking that consecutive widths agree.
    pub fn from_layers(layers: Vec<DenseLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Spec("network has no layers".into()));
        }
        for (l, layer) in layers.iter().enumerate() {
            if layer.bias.shape() != (1, layer.fan_out()) {
                return Err(Error::Shape {
                    op: "layer bias",
                    left: layer.weights.shape(),
                    right: layer.bias.shape(),
                });
            }
            if l > 0 && layers[l - 1].fan_out() != layer.fan_in() {
                return Err(Error::Shape {
                    op: "layer chain",
                    left: layers[l - 1].weights.shape(),
                    right: layer.weights.shape(),
                });
            }
        }
        Ok(DenseNet {
            layers,
            id: fresh_id(),
            generation: 0,
        })
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn input_size(&self) -> usize {
        self.layers[0].fan_in()
    }

    pub fn output_size(&self) -> usize {
        self.layers.last().map(|l| l.fan_out()).unwrap_or(0)
    }

    /// Layer widths from input to output.
    pub fn sizes(&self) -> Vec<usize> {
        std::iter::once(self.input_size())
            .chain(self.layers.iter().map(|l| l.fan_out()))
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    /// Names matching [`DenseNet::param_blocks_mut`] order.
    pub fn param_names(&self, prefix: &str) -> Vec<String> {
        (0..self.layers.len())
            .flat_map(|l| [format!("{prefix}.w{l}"), format!("{prefix}.b{l}")])
            .collect()
    }

    pub fn param_blocks(&self) -> Vec<&Matrix> {
        self.layers
            .iter()
            .flat_map(|l| [&l.weights, &l.bias])
            .collect()
    }

    /// Mutable parameter blocks. Invalidates outstanding forward caches.
    pub fn param_blocks_mut(&mut self) -> Vec<&mut Matrix> {
        self.generation += 1;
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.weights, &mut l.bias])
            .collect()
    }

    fn check_input(&self, input: &Matrix) -> Result<()> {
        if input.cols() != self.input_size() {
            return Err(Error::Shape {
                op: "net_forward",
                left: input.shape(),
                right: self.layers[0].weights.shape(),
            });
        }
        Ok(())
    }

    fn affine(layer: &DenseLayer, x: &Matrix) -> Result<Matrix> {
        let mut z = x.matmul(&layer.weights)?;
        let b = layer.bias.as_slice();
        for i in 0..z.rows() {
            for (v, bj) in z.row_mut(i).iter_mut().zip(b) {
                *v = layer.activation.apply(*v + bj);
            }
        }
        Ok(z)
    }

    /// Forward pass without keeping activations.
    pub fn predict(&self, input: &Matrix) -> Result<Matrix> {
        self.check_input(input)?;
        let mut x = Self::affine(&self.layers[0], input)?;
        for layer in &self.layers[1..] {
            x = Self::affine(layer, &x)?;
        }
        Ok(x)
    }

    /// Forward pass; rows of `input` are independent samples.
    pub fn forward(&self, input: &Matrix) -> Result<(Matrix, ForwardCache)> {
        self.check_input(input)?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut outputs = Vec::with_capacity(self.layers.len());
        let mut x = input.clone();
        for layer in &self.layers {
            let y = Self::affine(layer, &x)?;
            inputs.push(x);
            x = y.clone();
            outputs.push(y);
        }
        Ok((
            x,
            ForwardCache {
                net_id: self.id,
                generation: self.generation,
                inputs,
                outputs,
            },
        ))
    }

    /// Reverse pass. `output_grad` is dL/d(output); returns parameter
    /// gradients and dL/d(input).
    pub fn backward(&self, cache: &ForwardCache, output_grad: &Matrix) -> Result<(NetGrads, Matrix)> {
        if cache.net_id != self.id || cache.generation != self.generation {
            return Err(Error::Usage(
                "forward cache does not belong to this network state (stale or foreign cache)".into(),
            ));
        }
        output_grad.check_same_shape("net_backward", cache.output())?;
        let n = self.layers.len();
        let mut wgrads = Vec::with_capacity(n);
        let mut bgrads = Vec::with_capacity(n);
        let mut grad = output_grad.clone();
        for l in (0..n).rev() {
            let layer = &self.layers[l];
            let delta = cache.outputs[l].zip_map(&grad, |y, g| {
                g * layer.activation.derivative_from_output(y)
            })?;
            wgrads.push(cache.inputs[l].t_matmul(&delta)?);
            bgrads.push(delta.sum_rows());
            grad = delta.matmul_t(&layer.weights)?;
        }
        wgrads.reverse();
        bgrads.reverse();
        Ok((
            NetGrads {
                weights: wgrads,
                biases: bgrads,
            },
            grad,
        ))
    }

    pub fn zero_grads(&self) -> NetGrads {
        NetGrads {
            weights: self
                .layers
                .iter()
                .map(|l| Matrix::zeros(l.fan_in(), l.fan_out()))
                .collect(),
            biases: self
                .layers
                .iter()
                .map(|l| Matrix::zeros(1, l.fan_out()))
                .collect(),
        }
    }
}
