//! Small MLP embedding network with L2-normalized output rows.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;
use crate::NORM_EPS;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Activation {
    Relu,
}

/// Layer-structure description of the embedding network.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct MlpConfig {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub embedding_dim: usize,
    pub activation: Activation,
    pub seed: u64,
}

impl MlpConfig {
    /// Desk-scale default: 32 -> 64 -> 32.
    pub fn desk_default(seed: u64) -> Self {
        Self {
            input_dim: 32,
            hidden_dims: vec![64],
            embedding_dim: 32,
            activation: Activation::Relu,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::Config("input_dim must be positive".into()));
        }
        if self.embedding_dim < 2 {
            return Err(Error::Config(format!(
                "embedding_dim must be >= 2, got {}",
                self.embedding_dim
            )));
        }
        if self.hidden_dims.iter().any(|&d| d == 0) {
            return Err(Error::Config("hidden_dims must be positive".into()));
        }
        Ok(())
    }

    /// (fan_in, fan_out) per layer, input through embedding.
    fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden_dims.len() + 1);
        let mut prev = self.input_dim;
        for &h in &self.hidden_dims {
            dims.push((prev, h));
            prev = h;
        }
        dims.push((prev, self.embedding_dim));
        dims
    }
}

/// One affine layer: `weight` is fan_in x fan_out, `bias` is fan_out.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weight: Tensor,
    pub bias: Tensor,
}

/// Trainable parameters of the embedding network.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    layers: Vec<Layer>,
    activation: Activation,
}

/// Tape handles for one training step's registration of [`MlpParams`].
pub struct MlpVars {
    layers: Vec<(Var, Var)>,
    activation: Activation,
}

impl MlpParams {
    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.rows()
    }

    pub fn embedding_dim(&self) -> usize {
        self.layers.last().unwrap().weight.cols()
    }

    /// Parameter tensors in update order: w0, b0, w1, b1, ...
    pub fn tensors(&self) -> Vec<&Tensor> {
        self.layers
            .iter()
            .flat_map(|l| [&l.weight, &l.bias])
            .collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.weight, &mut l.bias])
            .collect()
    }

    /// Rebuilds params from raw buffers (checkpoint loading).
    pub fn from_buffers(cfg: &MlpConfig, mut buffers: Vec<Vec<f64>>) -> Result<Self> {
        cfg.validate()?;
        let dims = cfg.layer_dims();
        if buffers.len() != dims.len() * 2 {
            return Err(Error::Config(format!(
                "expected {} parameter buffers, got {}",
                dims.len() * 2,
                buffers.len()
            )));
        }
        let mut layers = Vec::with_capacity(dims.len());
        for (fan_in, fan_out) in dims {
            let wdata = buffers.remove(0);
            let bdata = buffers.remove(0);
            layers.push(Layer {
                weight: Tensor::matrix(fan_in, fan_out, wdata)?,
                bias: Tensor::new(vec![fan_out], bdata)?,
            });
        }
        Ok(Self {
            layers,
            activation: cfg.activation,
        })
    }

    /// Registers every layer on a tape with `requires_grad = true`.
    pub fn register(&self, tape: &mut Tape) -> MlpVars {
        MlpVars {
            layers: self
                .layers
                .iter()
                .map(|l| {
                    (
                        tape.leaf(l.weight.clone(), true),
                        tape.leaf(l.bias.clone(), true),
                    )
                })
                .collect(),
            activation: self.activation,
        }
    }
}

impl MlpVars {
    pub fn layers(&self) -> &[(Var, Var)] {
        &self.layers
    }

    /// Vars in the same order as [`MlpParams::tensors`].
    pub fn vars(&self) -> Vec<Var> {
        self.layers.iter().flat_map(|&(w, b)| [w, b]).collect()
    }
}

/// Rebuilds registration handles from a `w0, b0, w1, b1, ...` var slice
/// (the inverse of [`MlpVars::vars`]; used by gradient checks).
pub fn vars_from_slice(vars: &[Var], activation: Activation) -> MlpVars {
    debug_assert!(!vars.is_empty() && vars.len() % 2 == 0);
    MlpVars {
        layers: vars.chunks(2).map(|c| (c[0], c[1])).collect(),
        activation,
    }
}

/// Kaiming-uniform weights (bound `sqrt(6 / fan_in)`), zero biases,
/// deterministic from the config seed.
pub fn init_params(cfg: &MlpConfig) -> Result<MlpParams> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let layers = cfg
        .layer_dims()
        .into_iter()
        .map(|(fan_in, fan_out)| {
            let bound = crate::fmath::sqrt(6.0 / fan_in as f64);
            let wdata: Vec<f64> = (0..fan_in * fan_out)
                .map(|_| rng.random_range(-bound..=bound))
                .collect();
            Layer {
                weight: Tensor::matrix(fan_in, fan_out, wdata).unwrap(),
                bias: Tensor::zeros(vec![fan_out]),
            }
        })
        .collect();
    Ok(MlpParams {
        layers,
        activation: cfg.activation,
    })
}

/// Differentiable forward pass: affine/ReLU chain, final affine, then
/// row-wise L2 normalization. Every output row has unit norm (up to the
/// eps guard on zero rows).
pub fn embed(tape: &mut Tape, vars: &MlpVars, x: Var) -> Result<Var> {
    let expected = tape.value(vars.layers[0].0).rows();
    let got = tape.value(x).shape().to_vec();
    if got.len() != 2 || got[1] != expected {
        return Err(Error::ShapeMismatch {
            op: "embed",
            lhs: got,
            rhs: vec![expected],
        });
    }
    let mut h = x;
    let last = vars.layers.len() - 1;
    for (i, &(w, b)) in vars.layers.iter().enumerate() {
        h = tape.affine(h, w, b)?;
        if i < last {
            h = match vars.activation {
                Activation::Relu => tape.relu(h),
            };
        }
    }
    tape.l2_normalize_rows(h, NORM_EPS)
}

/// Forward pass without gradient tracking; returns the embedding matrix.
pub fn embed_inference(params: &MlpParams, x: &Tensor) -> Result<Tensor> {
    let mut tape = Tape::new();
    let vars = MlpVars {
        layers: params
            .layers
            .iter()
            .map(|l| {
                (
                    tape.leaf(l.weight.clone(), false),
                    tape.leaf(l.bias.clone(), false),
                )
            })
            .collect(),
        activation: params.activation,
    };
    let xv = tape.leaf(x.clone(), false);
    let z = embed(&mut tape, &vars, xv)?;
    Ok(tape.value(z).clone())
}
