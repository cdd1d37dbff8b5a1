//! Loss functions over L2-normalized embeddings: the proxy-decidability
//! loss plus the D-Loss, ProxyNCA and batch-all triplet baselines.
//!
//! All of them are built on the [`Tape`] ops, so gradients flow into both
//! the embeddings and (where applicable) the proxy bank, including through
//! the distribution means and variances.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::fmath;
use crate::proxy;
use crate::tape::{Tape, Var};
use crate::NORM_EPS;

/// Shared loss hyperparameters.
///
/// `tau` is the similarity temperature; `eps1`/`eps2` keep the two log
/// arguments of the proxy-decidability loss positive; `alpha` is the
/// triplet margin; `d_loss_eps` guards the D-Loss denominator.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct LossConfig {
    pub tau: f64,
    pub eps1: f64,
    pub eps2: f64,
    pub alpha: f64,
    pub d_loss_eps: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            tau: 1.0,
            eps1: 1e-6,
            eps2: 1e-6,
            alpha: 0.2,
            d_loss_eps: 1e-6,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if self.tau <= 0.0 {
            return Err(Error::Config(format!("tau must be > 0, got {}", self.tau)));
        }
        for (name, eps) in [("eps1", self.eps1), ("eps2", self.eps2)] {
            if !(eps > 0.0 && eps <= 1e-2) {
                return Err(Error::Config(format!(
                    "{name} must be in (0, 1e-2], got {eps}"
                )));
            }
        }
        if self.d_loss_eps <= 0.0 {
            return Err(Error::Config(format!(
                "d_loss_eps must be > 0, got {}",
                self.d_loss_eps
            )));
        }
        Ok(())
    }
}

/// Genuine and impostor similarity sets pulled out of a batch.
///
/// `genuine` holds one entry per sample (its similarity to its own class
/// proxy); `impostor` holds `batch * (classes - 1)` entries in (sample,
/// class) lexicographic order.
#[derive(Debug, Clone, Copy)]
pub struct SimilarityPartition {
    pub genuine: Var,
    pub impostor: Var,
}

/// Differentiable means and population variances of the two sets.
#[derive(Debug, Clone, Copy)]
pub struct DistributionStats {
    pub mu_gen: Var,
    pub var_gen: Var,
    pub mu_imp: Var,
    pub var_imp: Var,
}

/// Scaled sample-proxy similarities `S[i][c] = (z_i . p_c / ||p_c||) / tau`.
///
/// Embedding rows are expected to be unit-norm already (the backbone
/// normalizes); proxies are normalized here, differentiably.
pub fn scaled_similarities(tape: &mut Tape, z: Var, proxies: Var, tau: f64) -> Result<Var> {
    if tau <= 0.0 {
        return Err(Error::Config(format!("tau must be > 0, got {tau}")));
    }
    let zd = tape.value(z).cols();
    let pd = tape.value(proxies).cols();
    if zd != pd {
        return Err(Error::ShapeMismatch {
            op: "scaled_similarities",
            lhs: tape.value(z).shape().to_vec(),
            rhs: tape.value(proxies).shape().to_vec(),
        });
    }
    let p_norm = proxy::normalized(tape, proxies, NORM_EPS)?;
    let sims = tape.matmul_nt(z, p_norm)?;
    Ok(tape.mul_scalar(sims, 1.0 / tau))
}

/// Splits a similarity matrix into the genuine entry per row and the
/// impostor entries in (row, class) lexicographic order.
pub fn partition_similarities(
    tape: &mut Tape,
    sims: Var,
    labels: &[usize],
) -> Result<SimilarityPartition> {
    let (batch, classes) = (tape.value(sims).rows(), tape.value(sims).cols());
    if classes == 0 {
        return Err(Error::EmptySet {
            what: "partition_similarities",
        });
    }
    if batch != labels.len() {
        return Err(Error::ShapeMismatch {
            op: "partition_similarities",
            lhs: vec![batch, classes],
            rhs: vec![labels.len()],
        });
    }
    if let Some((index, &label)) = labels.iter().enumerate().find(|(_, &l)| l >= classes) {
        return Err(Error::LabelOutOfRange {
            index,
            label,
            class_count: classes,
        });
    }

    let mut genuine_idx = Vec::with_capacity(batch);
    let mut impostor_idx = Vec::with_capacity(batch * (classes - 1));
    for (i, &label) in labels.iter().enumerate() {
        genuine_idx.push(i * classes + label);
        for c in 0..classes {
            if c != label {
                impostor_idx.push(i * classes + c);
            }
        }
    }

    let genuine = tape.gather(sims, genuine_idx, vec![batch])?;
    let impostor = tape.gather(sims, impostor_idx, vec![batch * (classes - 1)])?;
    Ok(SimilarityPartition { genuine, impostor })
}

/// Means and population variances of both similarity sets.
pub fn batch_stats(tape: &mut Tape, partition: &SimilarityPartition) -> Result<DistributionStats> {
    Ok(DistributionStats {
        mu_gen: tape.mean(partition.genuine)?,
        var_gen: tape.variance(partition.genuine)?,
        mu_imp: tape.mean(partition.impostor)?,
        var_imp: tape.variance(partition.impostor)?,
    })
}

/// The proxy-decidability loss
/// `-ln(mu_gen - mu_imp + eps1) + 0.5 ln(var_gen + var_imp + eps2)`.
///
/// Both logs are floored at their eps with a straight-through slope, so a
/// batch that starts with `mu_gen < mu_imp` still gets a useful gradient.
pub fn pd_loss(tape: &mut Tape, stats: &DistributionStats, eps1: f64, eps2: f64) -> Result<Var> {
    if eps1 <= 0.0 || eps2 <= 0.0 {
        return Err(Error::Config("eps1 and eps2 must be > 0".into()));
    }
    let sep = tape.sub(stats.mu_gen, stats.mu_imp)?;
    let sep = tape.add_scalar(sep, eps1);
    let ln_sep = tape.ln_clamped(sep, eps1);

    let spread = tape.add(stats.var_gen, stats.var_imp)?;
    let spread = tape.add_scalar(spread, eps2);
    let ln_spread = tape.ln_clamped(spread, eps2);

    let half_spread = tape.mul_scalar(ln_spread, 0.5);
    tape.sub(half_spread, ln_sep)
}

/// Plain-f64 evaluation of the proxy-decidability formula (no gradients).
pub fn pd_loss_value(
    mu_gen: f64,
    var_gen: f64,
    mu_imp: f64,
    var_imp: f64,
    eps1: f64,
    eps2: f64,
) -> f64 {
    let sep = (mu_gen - mu_imp + eps1).max(eps1);
    let spread = (var_gen + var_imp + eps2).max(eps2);
    0.5 * fmath::ln(spread) - fmath::ln(sep)
}

/// Full pipeline: scaled similarities -> partition -> stats -> loss.
pub fn pd_loss_from_batch(
    tape: &mut Tape,
    z: Var,
    labels: &[usize],
    proxies: Var,
    cfg: &LossConfig,
) -> Result<Var> {
    let sims = scaled_similarities(tape, z, proxies, cfg.tau)?;
    let partition = partition_similarities(tape, sims, labels)?;
    let stats = batch_stats(tape, &partition)?;
    pd_loss(tape, &stats, cfg.eps1, cfg.eps2)
}

/// Pair indices (i < j) of a batch split by label agreement.
fn pair_split(labels: &[usize]) -> (Vec<(usize, usize)>, Vec<(usize, usize)>) {
    let mut genuine = Vec::new();
    let mut impostor = Vec::new();
    for i in 0..labels.len() {
        for j in (i + 1)..labels.len() {
            if labels[i] == labels[j] {
                genuine.push((i, j));
            } else {
                impostor.push((i, j));
            }
        }
    }
    (genuine, impostor)
}

/// Within-batch decidability loss over all sample pairs:
/// `sqrt((var_gen + var_imp) / 2) / (|mu_imp - mu_gen| + eps)` computed on
/// cosine similarities. Needs at least one genuine and one impostor pair.
pub fn d_loss_batch(tape: &mut Tape, z: Var, labels: &[usize], eps: f64) -> Result<Var> {
    if eps <= 0.0 {
        return Err(Error::Config("d_loss eps must be > 0".into()));
    }
    let batch = tape.value(z).rows();
    if batch != labels.len() {
        return Err(Error::ShapeMismatch {
            op: "d_loss_batch",
            lhs: vec![batch],
            rhs: vec![labels.len()],
        });
    }
    let (genuine_pairs, impostor_pairs) = pair_split(labels);
    if genuine_pairs.is_empty() || impostor_pairs.is_empty() {
        return Err(Error::BatchComposition(format!(
            "d_loss needs genuine and impostor pairs; batch of {batch} has {} genuine and {} impostor",
            genuine_pairs.len(),
            impostor_pairs.len()
        )));
    }

    let zn = tape.l2_normalize_rows(z, NORM_EPS)?;
    let gram = tape.matmul_nt(zn, zn)?;
    let gather_pairs = |tape: &mut Tape, pairs: &[(usize, usize)]| -> Result<Var> {
        let idx: Vec<usize> = pairs.iter().map(|&(i, j)| i * batch + j).collect();
        let n = idx.len();
        tape.gather(gram, idx, vec![n])
    };
    let genuine = gather_pairs(tape, &genuine_pairs)?;
    let impostor = gather_pairs(tape, &impostor_pairs)?;

    let mu_gen = tape.mean(genuine)?;
    let var_gen = tape.variance(genuine)?;
    let mu_imp = tape.mean(impostor)?;
    let var_imp = tape.variance(impostor)?;

    let spread = tape.add(var_gen, var_imp)?;
    let spread = tape.mul_scalar(spread, 0.5);
    let numerator = tape.sqrt(spread);

    let gap = tape.sub(mu_imp, mu_gen)?;
    let gap = tape.abs(gap);
    let denominator = tape.add_scalar(gap, eps);
    tape.div(numerator, denominator)
}

/// ProxyNCA with squared Euclidean distance on normalized vectors
/// (`d = 2 - 2 cos`); the denominator sums over wrong-class proxies only.
/// Mean-reduced over the batch.
pub fn proxy_nca_loss(tape: &mut Tape, z: Var, labels: &[usize], proxies: Var) -> Result<Var> {
    let classes = tape.value(proxies).rows();
    if classes < 2 {
        return Err(Error::Config(format!(
            "proxy_nca needs >= 2 classes, got {classes}"
        )));
    }
    let zn = tape.l2_normalize_rows(z, NORM_EPS)?;
    let pn = proxy::normalized(tape, proxies, NORM_EPS)?;
    let sims = tape.matmul_nt(zn, pn)?;
    let scaled = tape.mul_scalar(sims, -2.0);
    let dists = tape.add_scalar(scaled, 2.0);

    let partition = partition_similarities(tape, dists, labels)?;
    let batch = labels.len();
    let genuine = partition.genuine;
    // impostor distances, reshaped to batch x (classes - 1) for the
    // per-sample log-sum-exp
    let impostor_flat = partition.impostor;
    let impostor = {
        let idx: Vec<usize> = (0..batch * (classes - 1)).collect();
        tape.gather(impostor_flat, idx, vec![batch, classes - 1])?
    };

    let neg_impostor = tape.mul_scalar(impostor, -1.0);
    let lse = tape.row_log_sum_exp(neg_impostor)?;
    let per_sample = tape.add(genuine, lse)?;
    tape.mean(per_sample)
}

/// Batch-all triplet loss on normalized embeddings:
/// mean over all ordered (anchor, positive) pairs and negatives of
/// `max(0, d_ap^2 - d_an^2 + alpha)` with squared Euclidean distances.
pub fn triplet_loss_batch_all(tape: &mut Tape, z: Var, labels: &[usize], alpha: f64) -> Result<Var> {
    let batch = tape.value(z).rows();
    if batch != labels.len() {
        return Err(Error::ShapeMismatch {
            op: "triplet_loss_batch_all",
            lhs: vec![batch],
            rhs: vec![labels.len()],
        });
    }

    let mut ap_idx = Vec::new();
    let mut an_idx = Vec::new();
    for a in 0..batch {
        for p in 0..batch {
            if p == a || labels[p] != labels[a] {
                continue;
            }
            for n in 0..batch {
                if labels[n] != labels[a] {
                    ap_idx.push(a * batch + p);
                    an_idx.push(a * batch + n);
                }
            }
        }
    }
    if ap_idx.is_empty() {
        return Err(Error::BatchComposition(format!(
            "triplet loss needs at least one valid (anchor, positive, negative); batch of {batch} has none"
        )));
    }

    let zn = tape.l2_normalize_rows(z, NORM_EPS)?;
    let gram = tape.matmul_nt(zn, zn)?;
    let scaled = tape.mul_scalar(gram, -2.0);
    let sq_dists = tape.add_scalar(scaled, 2.0);

    let count = ap_idx.len();
    let d_ap = tape.gather(sq_dists, ap_idx, vec![count])?;
    let d_an = tape.gather(sq_dists, an_idx, vec![count])?;
    let diff = tape.sub(d_ap, d_an)?;
    let margin = tape.add_scalar(diff, alpha);
    let violations = tape.relu(margin);
    tape.mean(violations)
}
