//! Labeled feature datasets: synthetic spherical clusters and stratified
//! train/validation splitting. File ingestion lives in the CLI crate.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::fmath;
use crate::tensor::Tensor;

/// In-memory dataset: an n x dim feature matrix and one label per row.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub features: Tensor,
    pub labels: Vec<usize>,
    pub class_count: usize,
    pub name: String,
    /// Generator seed; 0 for ingested data.
    pub seed: u64,
}

impl LabeledDataset {
    pub fn new(
        features: Tensor,
        labels: Vec<usize>,
        class_count: usize,
        name: String,
        seed: u64,
    ) -> Result<Self> {
        if features.shape().len() != 2 {
            return Err(Error::Config("features must be a rank-2 matrix".into()));
        }
        if features.rows() != labels.len() {
            return Err(Error::Config(format!(
                "{} feature rows vs {} labels",
                features.rows(),
                labels.len()
            )));
        }
        if let Some((index, &label)) = labels
            .iter()
            .enumerate()
            .find(|(_, &l)| l >= class_count)
        {
            return Err(Error::LabelOutOfRange {
                index,
                label,
                class_count,
            });
        }
        Ok(Self {
            features,
            labels,
            class_count,
            name,
            seed,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.features.cols()
    }

    /// Sample count per class.
    pub fn class_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0usize; self.class_count];
        for &l in &self.labels {
            sizes[l] += 1;
        }
        sizes
    }

    /// Copies the given rows into a new dataset with the same class space.
    pub fn subset(&self, indices: &[usize], name: String) -> Self {
        let dim = self.input_dim();
        let mut data = Vec::with_capacity(indices.len() * dim);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            data.extend_from_slice(self.features.row(i));
            labels.push(self.labels[i]);
        }
        Self {
            features: Tensor::matrix(indices.len(), dim, data).unwrap(),
            labels,
            class_count: self.class_count,
            name,
            seed: self.seed,
        }
    }
}

/// Generates `classes` clusters: class directions drawn uniformly on the
/// unit sphere, samples = direction + `noise_sigma` * standard Gaussian.
/// Deterministic from `seed`; samples are ordered class by class.
pub fn gen_synthetic(
    classes: usize,
    per_class: usize,
    dim: usize,
    noise_sigma: f64,
    seed: u64,
) -> Result<LabeledDataset> {
    if classes < 2 {
        return Err(Error::Config(format!("need >= 2 classes, got {classes}")));
    }
    if per_class < 2 {
        return Err(Error::Config(format!(
            "need >= 2 samples per class, got {per_class}"
        )));
    }
    if dim < 2 {
        return Err(Error::Config(format!("need dim >= 2, got {dim}")));
    }
    if noise_sigma < 0.0 {
        return Err(Error::Config("noise_sigma must be >= 0".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut directions = Vec::with_capacity(classes);
    for _ in 0..classes {
        loop {
            let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
            let norm = fmath::sqrt(v.iter().map(|x| x * x).sum());
            if norm > 1e-12 {
                directions.push(v.iter().map(|x| x / norm).collect::<Vec<f64>>());
                break;
            }
        }
    }

    let n = classes * per_class;
    let mut data = Vec::with_capacity(n * dim);
    let mut labels = Vec::with_capacity(n);
    for (c, dir) in directions.iter().enumerate() {
        for _ in 0..per_class {
            for &d in dir {
                let noise: f64 = rng.sample(StandardNormal);
                data.push(d + noise_sigma * noise);
            }
            labels.push(c);
        }
    }

    LabeledDataset::new(
        Tensor::matrix(n, dim, data)?,
        labels,
        classes,
        format!("synthetic-c{classes}-n{per_class}-d{dim}"),
        seed,
    )
}

/// Stratified split: per class, `ceil(val_fraction * n_c)` samples go to
/// validation (capped at `n_c - 1` so both splits keep every class).
/// Single-sample classes stay in train with a warning. Deterministic from
/// `seed`; row order of the original dataset is preserved in both halves.
pub fn split(
    ds: &LabeledDataset,
    val_fraction: f64,
    seed: u64,
) -> Result<(LabeledDataset, LabeledDataset)> {
    if !(val_fraction > 0.0 && val_fraction < 1.0) {
        return Err(Error::Config(format!(
            "val_fraction must be in (0, 1), got {val_fraction}"
        )));
    }

    let mut per_class: Vec<Vec<usize>> = vec![Vec::new(); ds.class_count];
    for (i, &l) in ds.labels.iter().enumerate() {
        per_class[l].push(i);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut is_val = vec![false; ds.len()];
    for (class, members) in per_class.iter_mut().enumerate() {
        if members.len() == 1 {
            log::warn!("class {class} has a single sample; keeping it in train");
            continue;
        }
        if members.is_empty() {
            continue;
        }
        let take = fmath::ceil(val_fraction * members.len() as f64) as usize;
        let take = take.min(members.len() - 1);
        members.shuffle(&mut rng);
        for &i in members.iter().take(take) {
            is_val[i] = true;
        }
    }

    let train_idx: Vec<usize> = (0..ds.len()).filter(|&i| !is_val[i]).collect();
    let val_idx: Vec<usize> = (0..ds.len()).filter(|&i| is_val[i]).collect();
    Ok((
        ds.subset(&train_idx, format!("{}-train", ds.name)),
        ds.subset(&val_idx, format!("{}-val", ds.name)),
    ))
}
