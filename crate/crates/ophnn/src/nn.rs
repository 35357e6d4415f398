//! Multi-layer feedforward networks with tanh hidden layers, plus the
//! analytic input-gradient of a scalar-output network.
//!
//! The input gradient is built as an explicit closed-form graph (chain of
//! layer weights and activation derivatives). Running ordinary reverse mode
//! over that graph yields the second-derivative path needed when the
//! Hamiltonian's state gradient sits inside a training loss.

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Graph, NodeId, Tensor};
use crate::error::{Error, Result};

/// Final-layer activation. Hidden layers are always tanh.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FinalAct {
    Linear,
    Elu,
}

impl FinalAct {
    pub fn name(self) -> &'static str {
        match self {
            FinalAct::Linear => "linear",
            FinalAct::Elu => "elu",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(FinalAct::Linear),
            "elu" => Ok(FinalAct::Elu),
            other => Err(Error::invalid(format!("unknown final activation '{other}'"))),
        }
    }
}

/// Architecture of a feedforward network.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub output_dim: usize,
    /// Hidden layer widths; empty means a plain affine map.
    pub hidden: Vec<usize>,
    pub final_act: FinalAct,
}

impl MlpSpec {
    pub fn new(input_dim: usize, hidden: Vec<usize>, output_dim: usize, final_act: FinalAct) -> Result<Self> {
        if input_dim == 0 || output_dim == 0 || hidden.iter().any(|&h| h == 0) {
            return Err(Error::invalid("mlp spec: all dimensions must be >= 1"));
        }
        Ok(Self {
            input_dim,
            output_dim,
            hidden,
            final_act,
        })
    }

    /// Layer dimensions as (fan_in, fan_out) pairs.
    fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden.len() + 1);
        let mut prev = self.input_dim;
        for &h in &self.hidden {
            dims.push((prev, h));
            prev = h;
        }
        dims.push((prev, self.output_dim));
        dims
    }
}

/// One affine layer: weight `[out × in]`, bias `[out]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub w: Tensor,
    pub b: Tensor,
}

/// A network: architecture plus parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub spec: MlpSpec,
    pub layers: Vec<DenseLayer>,
}

/// Parameter leaves of an [`Mlp`] inside a graph, in layer order.
#[derive(Debug, Clone)]
pub struct MlpLeaves {
    pub w: Vec<NodeId>,
    pub b: Vec<NodeId>,
}

impl Mlp {
    /// Glorot-uniform weights (`±√(6/(fan_in+fan_out))`), zero biases,
    /// deterministic in `seed`.
    pub fn init(spec: MlpSpec, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = spec
            .layer_dims()
            .iter()
            .map(|&(fan_in, fan_out)| {
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let dist = Uniform::new(-limit, limit);
                let w_data: Vec<f64> = (0..fan_in * fan_out).map(|_| dist.sample(&mut rng)).collect();
                DenseLayer {
                    w: Tensor::from_parts_unchecked(vec![fan_out, fan_in], w_data),
                    b: Tensor::zeros(&[fan_out]),
                }
            })
            .collect();
        Self { spec, layers }
    }

    /// Builds an MLP from explicit layer tensors, validating the shape chain.
    pub fn from_layers(spec: MlpSpec, layers: Vec<DenseLayer>) -> Result<Self> {
        let dims = spec.layer_dims();
        if layers.len() != dims.len() {
            return Err(Error::invalid(format!(
                "mlp: expected {} layers, got {}",
                dims.len(),
                layers.len()
            )));
        }
        for (layer, &(fan_in, fan_out)) in layers.iter().zip(&dims) {
            if layer.w.shape() != [fan_out, fan_in] || layer.b.shape() != [fan_out] {
                return Err(Error::invalid(format!(
                    "mlp: layer shapes {:?}/{:?} do not match spec ({fan_out}x{fan_in})",
                    layer.w.shape(),
                    layer.b.shape()
                )));
            }
        }
        Ok(Self { spec, layers })
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    /// Registers every layer tensor as a parameter leaf.
    pub fn leaves(&self, g: &mut Graph) -> MlpLeaves {
        let mut w = Vec::with_capacity(self.layers.len());
        let mut b = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            w.push(g.param(layer.w.clone()));
            b.push(g.param(layer.b.clone()));
        }
        MlpLeaves { w, b }
    }

    /// Forward pass on the graph; `x` is `[B × input_dim]`.
    pub fn forward_graph(&self, g: &mut Graph, leaves: &MlpLeaves, x: NodeId) -> Result<NodeId> {
        self.check_input(g.value(x).cols())?;
        let last = self.layers.len() - 1;
        let mut h = x;
        for l in 0..=last {
            let z = g.linear(h, leaves.w[l], leaves.b[l])?;
            h = if l < last {
                g.tanh(z)
            } else {
                match self.spec.final_act {
                    FinalAct::Linear => z,
                    FinalAct::Elu => g.elu(z),
                }
            };
        }
        Ok(h)
    }

    /// Forward pass and the exact input gradient `∂out/∂x`, both as graph
    /// nodes. Requires a scalar output. The gradient node has shape
    /// `[B × input_dim]` and remains differentiable w.r.t. the parameters.
    pub fn forward_with_input_grad(
        &self,
        g: &mut Graph,
        leaves: &MlpLeaves,
        x: NodeId,
    ) -> Result<(NodeId, NodeId)> {
        if self.spec.output_dim != 1 {
            return Err(Error::invalid(format!(
                "input gradient requires scalar output, spec has output_dim {}",
                self.spec.output_dim
            )));
        }
        self.check_input(g.value(x).cols())?;
        let batch = g.value(x).rows();
        let last = self.layers.len() - 1;

        // Forward, keeping pre-activations and tanh outputs.
        let mut h = x;
        let mut z_last = x; // overwritten below
        let mut tanh_nodes = Vec::with_capacity(last);
        for l in 0..=last {
            let z = g.linear(h, leaves.w[l], leaves.b[l])?;
            if l < last {
                let t = g.tanh(z);
                tanh_nodes.push(t);
                h = t;
            } else {
                z_last = z;
                h = match self.spec.final_act {
                    FinalAct::Linear => z,
                    FinalAct::Elu => g.elu(z),
                };
            }
        }
        let out = h;

        // Backward chain written with forward ops: delta over layer inputs.
        let mut delta = match self.spec.final_act {
            FinalAct::Linear => {
                let ones = g.leaf(Tensor::from_parts_unchecked(vec![batch, 1], vec![1.0; batch]));
                g.matmul(ones, leaves.w[last])?
            }
            FinalAct::Elu => {
                let d = g.elu_prime(z_last);
                g.matmul(d, leaves.w[last])?
            }
        };
        for l in (0..last).rev() {
            // tanh'(z) = 1 - tanh(z)^2, taken from the cached tanh output
            let sq = g.square(tanh_nodes[l]);
            let dact = g.affine_scalar(sq, -1.0, 1.0);
            let gated = g.mul(delta, dact)?;
            delta = g.matmul(gated, leaves.w[l])?;
        }
        Ok((out, delta))
    }

    /// Plain (tape-free) single-sample forward pass.
    pub fn forward_plain(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.spec.input_dim, "mlp input width");
        let last = self.layers.len() - 1;
        let mut h = x.to_vec();
        for (l, layer) in self.layers.iter().enumerate() {
            let out_dim = layer.b.len();
            let mut z = layer.b.data().to_vec();
            crate::autodiff::matops::matvec(out_dim, h.len(), layer.w.data(), &h, &mut z);
            if l < last {
                for v in &mut z {
                    *v = v.tanh();
                }
            } else if self.spec.final_act == FinalAct::Elu {
                for v in &mut z {
                    if *v <= 0.0 {
                        *v = v.exp() - 1.0;
                    }
                }
            }
            h = z;
        }
        h
    }

    /// Plain single-sample input gradient of a scalar-output network.
    pub fn input_gradient_plain(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(self.spec.output_dim, 1, "input gradient requires scalar output");
        assert_eq!(x.len(), self.spec.input_dim, "mlp input width");
        let last = self.layers.len() - 1;

        let mut h = x.to_vec();
        let mut tanh_outs: Vec<Vec<f64>> = Vec::with_capacity(last);
        let mut z_last = 0.0;
        for (l, layer) in self.layers.iter().enumerate() {
            let out_dim = layer.b.len();
            let mut z = layer.b.data().to_vec();
            crate::autodiff::matops::matvec(out_dim, h.len(), layer.w.data(), &h, &mut z);
            if l < last {
                for v in &mut z {
                    *v = v.tanh();
                }
                tanh_outs.push(z.clone());
                h = z;
            } else {
                z_last = z[0];
            }
        }

        let dfinal = match self.spec.final_act {
            FinalAct::Linear => 1.0,
            FinalAct::Elu => {
                if z_last > 0.0 {
                    1.0
                } else {
                    z_last.exp()
                }
            }
        };
        let wl = &self.layers[last].w;
        let mut delta: Vec<f64> = wl.data().iter().map(|&v| dfinal * v).collect();
        for l in (0..last).rev() {
            for (d, t) in delta.iter_mut().zip(&tanh_outs[l]) {
                *d *= 1.0 - t * t;
            }
            let layer = &self.layers[l];
            let mut next = vec![0.0; layer.w.cols()];
            crate::autodiff::matops::matvec_t(layer.w.rows(), layer.w.cols(), layer.w.data(), &delta, &mut next);
            delta = next;
        }
        delta
    }

    fn check_input(&self, got: usize) -> Result<()> {
        if got != self.spec.input_dim {
            return Err(Error::invalid(format!(
                "mlp input width {got} does not match spec input_dim {}",
                self.spec.input_dim
            )));
        }
        Ok(())
    }
}
