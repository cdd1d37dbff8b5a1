//! Learnable class proxies and their initialization strategies.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::mlp::{embed_inference, MlpParams};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum ProxyInit {
    Random,
    Precomputed,
}

/// One learnable proxy row per class (C x D).
///
/// Similarity computations always use the L2-normalized view (see
/// [`normalized`]); the stored rows are the raw parameters. Precomputed
/// proxies store the raw class mean without renormalization, so both
/// initialization paths feed the same normalization step.
#[derive(Debug, Clone, PartialEq)]
pub struct ProxyBank {
    proxies: Tensor,
    init_kind: ProxyInit,
}

impl ProxyBank {
    /// Kaiming-uniform rows with `fan_in = dim`; deterministic from `seed`.
    pub fn init_random(num_classes: usize, dim: usize, seed: u64) -> Result<Self> {
        if num_classes < 2 {
            return Err(Error::Config(format!(
                "need >= 2 classes for an impostor set, got {num_classes}"
            )));
        }
        if dim < 2 {
            return Err(Error::Config(format!("need proxy dim >= 2, got {dim}")));
        }
        let bound = crate::fmath::sqrt(6.0 / dim as f64);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data: Vec<f64> = (0..num_classes * dim)
            .map(|_| rng.random_range(-bound..=bound))
            .collect();
        Ok(Self {
            proxies: Tensor::matrix(num_classes, dim, data)?,
            init_kind: ProxyInit::Random,
        })
    }

    /// One forward pass over the dataset; proxy c is the arithmetic mean of
    /// the normalized embeddings of class c (not renormalized).
    pub fn init_precomputed(params: &MlpParams, dataset: &LabeledDataset) -> Result<Self> {
        let class_count = dataset.class_count;
        if class_count < 2 {
            return Err(Error::Config(format!(
                "need >= 2 classes for an impostor set, got {class_count}"
            )));
        }
        let sizes = dataset.class_sizes();
        if let Some(class) = sizes.iter().position(|&s| s == 0) {
            return Err(Error::MissingClass { class });
        }

        let embeddings = embed_inference(params, &dataset.features)?;
        let dim = embeddings.cols();
        let mut sums = vec![0.0f64; class_count * dim];
        for (i, &label) in dataset.labels.iter().enumerate() {
            let row = embeddings.row(i);
            for d in 0..dim {
                sums[label * dim + d] += row[d];
            }
        }
        for (class, &count) in sizes.iter().enumerate() {
            let inv = 1.0 / count as f64;
            for d in 0..dim {
                sums[class * dim + d] *= inv;
            }
        }
        for class in 0..class_count {
            let norm: f64 = sums[class * dim..(class + 1) * dim]
                .iter()
                .map(|x| x * x)
                .sum::<f64>();
            if crate::fmath::sqrt(norm) < crate::NORM_EPS {
                log::warn!("precomputed proxy for class {class} has near-zero norm");
            }
        }
        Ok(Self {
            proxies: Tensor::matrix(class_count, dim, sums)?,
            init_kind: ProxyInit::Precomputed,
        })
    }

    /// Rebuilds a bank from a raw buffer (checkpoint loading).
    pub fn from_buffer(
        num_classes: usize,
        dim: usize,
        data: Vec<f64>,
        init_kind: ProxyInit,
    ) -> Result<Self> {
        Ok(Self {
            proxies: Tensor::matrix(num_classes, dim, data)?,
            init_kind,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.proxies.rows()
    }

    pub fn dim(&self) -> usize {
        self.proxies.cols()
    }

    pub fn init_kind(&self) -> ProxyInit {
        self.init_kind
    }

    pub fn proxies(&self) -> &Tensor {
        &self.proxies
    }

    pub fn proxies_mut(&mut self) -> &mut Tensor {
        &mut self.proxies
    }

    /// Registers the proxy matrix on a tape with `requires_grad = true`.
    pub fn register(&self, tape: &mut Tape) -> Var {
        tape.leaf(self.proxies.clone(), true)
    }
}

/// L2-normalized view of registered proxies, differentiable back into the
/// bank. Rows with norm below `eps` keep their scale and are logged.
pub fn normalized(tape: &mut Tape, proxies: Var, eps: f64) -> Result<Var> {
    let t = tape.value(proxies);
    let (rows, cols) = (t.rows(), t.cols());
    for r in 0..rows {
        let norm: f64 = t.row(r).iter().map(|x| x * x).sum::<f64>();
        if crate::fmath::sqrt(norm) < eps {
            log::warn!("proxy row {r} of {rows}x{cols} bank has norm below {eps}");
        }
    }
    tape.l2_normalize_rows(proxies, eps)
}
