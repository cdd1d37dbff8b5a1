//! Named finite-difference checks over every tape op and every loss
//! pipeline; backs the `gradcheck` CLI command.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::fdcheck::finite_diff_check_multi;
use crate::losses::{self, LossConfig};
use crate::mlp::{self, Activation, MlpConfig};
use crate::proxy::ProxyBank;
use crate::tensor::Tensor;

/// Max relative error of one named check across all its seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckReport {
    pub name: String,
    pub max_rel_err: f64,
}

fn random_tensor(shape: &[usize], rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> Tensor {
    let len = shape.iter().product();
    let data: Vec<f64> = (0..len).map(|_| rng.random_range(lo..hi)).collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

/// Random unit rows, bounded away from the zero vector.
fn random_unit_rows(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Tensor {
    let mut data = vec![0.0; rows * cols];
    for r in 0..rows {
        loop {
            let row: Vec<f64> = (0..cols).map(|_| rng.random_range(-1.0..1.0)).collect();
            let norm: f64 = crate::fmath::sqrt(row.iter().map(|x| x * x).sum());
            if norm > 1e-2 {
                for c in 0..cols {
                    data[r * cols + c] = row[c] / norm;
                }
                break;
            }
        }
    }
    Tensor::matrix(rows, cols, data).unwrap()
}

fn random_labels(batch: usize, classes: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    // ensure at least two distinct classes and a repeated one, so every
    // loss's batch precondition holds
    loop {
        let labels: Vec<usize> = (0..batch).map(|_| rng.random_range(0..classes)).collect();
        let mut sorted = labels.clone();
        sorted.sort_unstable();
        let has_pair = sorted.windows(2).any(|w| w[0] == w[1]);
        let distinct = {
            sorted.dedup();
            sorted.len()
        };
        if has_pair && distinct >= 2 {
            return labels;
        }
    }
}

type Check = fn(&mut ChaCha8Rng, f64) -> Result<f64>;

fn check_matmul(rng: &mut ChaCha8Rng, h: f64) -> Result<f64> {
    let a = random_tensor(&[3, 2], rng, -1.0, 1.0);
    let b = random_tensor(&[2, 4], rng, -1.0, 1.0);
    finite_diff_check_multi(
        |tape, vars| {
            let c = tape.matmul(vars[0], vars[1])?;
            tape.sum(c)
        },
        &[a, b],
        h,
    )
}

fn check_matmul_nt(rng: &mut ChaCha8Rng, h: f64) -> Result<f64> {
    let a = random_tensor(&[3, 4], rng, -1.0, 1.0);
    let b = random_tensor(&[5, 4], rng, -1.0, 1.0);
    finite_diff_check_multi(
        |tape, vars| {
            let c = tape.matmul_nt(vars[0], vars[1])?;
            let sq = tape.mul(c, c)?;
            tape.sum(sq)
        },
        &[a, b],
        h,
    )
}

fn check_affine(rng: &mut ChaCha8Rng, h: f64) -> Result<f64> {
    let x = random_tensor(&[4, 3], rng, -1.0, 1.0);
    let w = random_tensor(&[3, 5], rng, -1.0, 1.0);
    let b = random_tensor(&[5], rng, -1.0, 1.0);
    finite_diff_check_multi(
        |tape, vars| {
            let y = tape.affine(vars[0], vars[1], vars[2])?;
            let sq = tape.mul(y, y)?;
            tape.sum(sq)
        },
        &[x, w, b],
        h,
    )
}

fn check_relu(rng: &mut ChaCha8Rng, h: f64) -> Result<f64> {
    // keep inputs away from the kink at 0
    let mut x = random_tensor(&[12], rng, 0.1, 1.5);
    for (i, v) in x.data_mut().iter_mut().enumerate() {
        if i % 2 == 0 {
            *v = -*v;
        }
    }
    finite_diff_check_multi(
        |tape, vars| {
            let y = tape.relu(vars[0]);
            let sq = tape.mul(y, y)?;
            tape.sum(sq)
        },
        core::slice::from_ref(&x),
        h,
    )
}

fn check_l2_normalize(rng: &mut ChaCha8Rng, h: f64) -> Result<f64> {
    // plain sum: sum of squared normalized entries would be constant
    let x = random_tensor(&[4, 8], rng, -1.0, 1.0);
    finite_diff_check_multi(
        |tape, vars| {
            let y = tape.l2_normalize_rows(vars[0], 1e-12)?;
            tape.sum(y)
        },
        core::slice::from_ref(&x),
        h,
    )
}

fn check_mean(rng: &mut ChaCha8Rng, h: f64) -> Result<f64> {
    let x = random_tensor(&[9], rng, -2.0, 2.0);
    finite_diff_check_multi(
        |tape, vars| {
            let m = tape.mean(vars[0])?;
            let sq = tape.mul(m, m)?;
            tape.sum(sq)
        },
        core::slice::from_ref(&x),
        h,
    )
}

fn check_variance(rng: &mut ChaCha8Rng, h: f64) -> Result<f64> {
    let x = random_tensor(&[16], rng, -2.0, 2.0);
    finite_diff_check_multi(|tape, vars| tape.variance(vars[0]), core::slice::from_ref(&x), h)
}

fn check_ln_clamped(rng: &mut ChaCha8Rng, h: f64) -> Result<f64> {
    // positive inputs well above the floor
    let x = random_tensor(&[8], rng, 0.2, 3.0);
    finite_diff_check_multi(
        |tape, vars| {
            let y = tape.ln_clamped(vars[0], 1e-9);
            tape.sum(y)
        },
        core::slice::from_ref(&x),
        h,
    )
}

fn check_row_log_sum_exp(rng: &mut ChaCha8Rng, h: f64) -> Result<f64> {
    let x = random_tensor(&[3, 5], rng, -2.0, 2.0);
    finite_diff_check_multi(
        |tape, vars| {
            let l = tape.row_log_sum_exp(vars[0])?;
            tape.sum(l)
        },
        core::slice::from_ref(&x),
        h,
    )
}

fn check_elementwise(rng: &mut ChaCha8Rng, h: f64) -> Result<f64> {
    // add, sub, mul, div, add_scalar, mul_scalar composed into one scalar
    let a = random_tensor(&[6], rng, 0.5, 2.0);
    let b = random_tensor(&[6], rng, 0.5, 2.0);
    finite_diff_check_multi(
        |tape, vars| {
            let s = tape.add(vars[0], vars[1])?;
            let d = tape.sub(vars[0], vars[1])?;
            let p = tape.mul(s, d)?;
            let q = tape.div(p, vars[1])?;
            let shifted = tape.add_scalar(q, 0.75);
            let scaled = tape.mul_scalar(shifted, -1.25);
            tape.sum(scaled)
        },
        &[a, b],
        h,
    )
}

fn check_abs_sqrt(rng: &mut ChaCha8Rng, h: f64) -> Result<f64> {
    // abs away from 0, sqrt away from 0
    let mut x = random_tensor(&[10], rng, 0.3, 2.0);
    for (i, v) in x.data_mut().iter_mut().enumerate() {
        if i % 3 == 0 {
            *v = -*v;
        }
    }
    finite_diff_check_multi(
        |tape, vars| {
            let a = tape.abs(vars[0]);
            let r = tape.sqrt(a);
            tape.sum(r)
        },
        core::slice::from_ref(&x),
        h,
    )
}

fn check_gather(rng: &mut ChaCha8Rng, h: f64) -> Result<f64> {
    let x = random_tensor(&[3, 4], rng, -1.0, 1.0);
    finite_diff_check_multi(
        |tape, vars| {
            let picked = tape.gather(vars[0], vec![0, 5, 5, 11, 3], vec![5])?;
            let sq = tape.mul(picked, picked)?;
            tape.sum(sq)
        },
        core::slice::from_ref(&x),
        h,
    )
}

/// Margin that keeps finite-difference probes away from ReLU / abs /
/// clamp kinks.
const KINK_MARGIN: f64 = 1e-3;

fn check_embed(rng: &mut ChaCha8Rng, h: f64) -> Result<f64> {
    let seed = rng.random_range(0..u64::MAX / 2);
    let cfg = MlpConfig {
        input_dim: 5,
        hidden_dims: vec![6],
        embedding_dim: 4,
        activation: Activation::Relu,
        seed,
    };
    let params = mlp::init_params(&cfg)?;

    // Reject inputs whose hidden preactivations sit near the ReLU kink,
    // and rows with fewer than two active units: a single active unit
    // makes the normalized output scale-invariant, so the row's true input
    // gradient is an exact zero that finite differences can only see as
    // noise against the 1e-8 denominator floor.
    let x = loop {
        let x = random_tensor(&[4, 5], rng, -1.0, 1.0);
        let w0 = &params.layers()[0].weight;
        let mut ok = true;
        for r in 0..4 {
            let mut active = 0;
            for c in 0..w0.cols() {
                let preact: f64 = (0..5).map(|k| x.at(r, k) * w0.at(k, c)).sum();
                if preact.abs() < KINK_MARGIN {
                    ok = false;
                }
                if preact > 0.0 {
                    active += 1;
                }
            }
            if active < 2 {
                ok = false;
            }
        }
        if ok {
            break x;
        }
    };

    let mut inputs: Vec<Tensor> = params.tensors().into_iter().cloned().collect();
    inputs.push(x);
    finite_diff_check_multi(
        |tape, vars| {
            let mlp_vars = mlp::vars_from_slice(&vars[..4], Activation::Relu);
            let z = mlp::embed(tape, &mlp_vars, vars[4])?;
            tape.sum(z)
        },
        &inputs,
        h,
    )
}

/// Normalizes rows into a plain buffer (filter helper, no tape involved).
fn normalize_rows_plain(t: &Tensor) -> Vec<f64> {
    let (rows, cols) = (t.rows(), t.cols());
    let mut out = vec![0.0; rows * cols];
    for r in 0..rows {
        let norm: f64 = crate::fmath::sqrt(t.row(r).iter().map(|x| x * x).sum());
        for c in 0..cols {
            out[r * cols + c] = t.at(r, c) / norm.max(crate::NORM_EPS);
        }
    }
    out
}

fn check_pd_pipeline(rng: &mut ChaCha8Rng, h: f64) -> Result<f64> {
    let (batch, classes, dim) = (8, 3, 16);
    let cfg = LossConfig::default();

    // The first log is clamped once mu_gen - mu_imp + eps1 falls to eps1;
    // a finite-difference check is only meaningful on the smooth side, so
    // reject draws whose mean gap is non-positive or tiny.
    let (z, bank, labels) = loop {
        let z = random_unit_rows(batch, dim, rng);
        let bank = ProxyBank::init_random(classes, dim, rng.random_range(0..u64::MAX / 2))?;
        let labels = random_labels(batch, classes, rng);

        let pn = normalize_rows_plain(bank.proxies());
        let mut gen_sum = 0.0;
        let mut imp_sum = 0.0;
        for (i, &label) in labels.iter().enumerate() {
            for c in 0..classes {
                let dot: f64 = (0..dim).map(|k| z.at(i, k) * pn[c * dim + k]).sum();
                if c == label {
                    gen_sum += dot / cfg.tau;
                } else {
                    imp_sum += dot / cfg.tau;
                }
            }
        }
        let gap = gen_sum / batch as f64 - imp_sum / (batch * (classes - 1)) as f64;
        if gap > KINK_MARGIN {
            break (z, bank, labels);
        }
    };

    finite_diff_check_multi(
        |tape, vars| losses::pd_loss_from_batch(tape, vars[0], &labels, vars[1], &cfg),
        &[z, bank.proxies().clone()],
        h,
    )
}

fn check_d_loss(rng: &mut ChaCha8Rng, h: f64) -> Result<f64> {
    // reject mean gaps near the abs kink
    let (z, labels) = loop {
        let z = random_unit_rows(8, 8, rng);
        let labels = random_labels(8, 3, rng);
        let zn = normalize_rows_plain(&z);
        let mut gen = Vec::new();
        let mut imp = Vec::new();
        for i in 0..8 {
            for j in (i + 1)..8 {
                let dot: f64 = (0..8).map(|k| zn[i * 8 + k] * zn[j * 8 + k]).sum();
                if labels[i] == labels[j] {
                    gen.push(dot);
                } else {
                    imp.push(dot);
                }
            }
        }
        let gap = imp.iter().sum::<f64>() / imp.len() as f64
            - gen.iter().sum::<f64>() / gen.len() as f64;
        if gap.abs() > KINK_MARGIN {
            break (z, labels);
        }
    };
    finite_diff_check_multi(
        |tape, vars| losses::d_loss_batch(tape, vars[0], &labels, 1e-6),
        core::slice::from_ref(&z),
        h,
    )
}

fn check_proxy_nca(rng: &mut ChaCha8Rng, h: f64) -> Result<f64> {
    let (batch, classes, dim) = (6, 4, 8);
    let z = random_unit_rows(batch, dim, rng);
    let bank = ProxyBank::init_random(classes, dim, rng.random_range(0..u64::MAX / 2))?;
    let labels = random_labels(batch, classes, rng);
    finite_diff_check_multi(
        |tape, vars| losses::proxy_nca_loss(tape, vars[0], &labels, vars[1]),
        &[z, bank.proxies().clone()],
        h,
    )
}

fn check_triplet(rng: &mut ChaCha8Rng, h: f64) -> Result<f64> {
    // reject draws with a triplet margin near the hinge at 0
    let (batch, dim, alpha) = (8, 6, 0.2);
    let (z, labels) = loop {
        let z = random_unit_rows(batch, dim, rng);
        let labels = random_labels(batch, 3, rng);
        let zn = normalize_rows_plain(&z);
        let sq = |i: usize, j: usize| -> f64 {
            let dot: f64 = (0..dim).map(|k| zn[i * dim + k] * zn[j * dim + k]).sum();
            2.0 - 2.0 * dot
        };
        let mut near_hinge = false;
        for a in 0..batch {
            for p in 0..batch {
                if p == a || labels[p] != labels[a] {
                    continue;
                }
                for n in 0..batch {
                    if labels[n] != labels[a] {
                        let margin = sq(a, p) - sq(a, n) + alpha;
                        if margin.abs() < KINK_MARGIN {
                            near_hinge = true;
                        }
                    }
                }
            }
        }
        if !near_hinge {
            break (z, labels);
        }
    };
    finite_diff_check_multi(
        |tape, vars| losses::triplet_loss_batch_all(tape, vars[0], &labels, alpha),
        core::slice::from_ref(&z),
        h,
    )
}

const CHECKS: &[(&str, Check)] = &[
    ("op/matmul", check_matmul),
    ("op/matmul_nt", check_matmul_nt),
    ("op/affine", check_affine),
    ("op/relu", check_relu),
    ("op/l2_normalize_rows", check_l2_normalize),
    ("op/mean", check_mean),
    ("op/variance", check_variance),
    ("op/ln_clamped", check_ln_clamped),
    ("op/row_log_sum_exp", check_row_log_sum_exp),
    ("op/elementwise", check_elementwise),
    ("op/abs_sqrt", check_abs_sqrt),
    ("op/gather", check_gather),
    ("backbone/embed", check_embed),
    ("loss/pd", check_pd_pipeline),
    ("loss/dloss", check_d_loss),
    ("loss/proxynca", check_proxy_nca),
    ("loss/triplet", check_triplet),
];

/// Number of random instances per check.
pub const SEEDS_PER_CHECK: usize = 5;

/// Runs every check on [`SEEDS_PER_CHECK`] seeded instances; deterministic
/// from `base_seed`.
pub fn run_full_suite(base_seed: u64, step: f64) -> Result<Vec<CheckReport>> {
    let mut reports = Vec::with_capacity(CHECKS.len());
    for (name, check) in CHECKS {
        let mut worst = 0.0f64;
        for round in 0..SEEDS_PER_CHECK {
            let mut rng =
                ChaCha8Rng::seed_from_u64(base_seed.wrapping_add(round as u64));
            worst = worst.max(check(&mut rng, step)?);
        }
        reports.push(CheckReport {
            name: (*name).into(),
            max_rel_err: worst,
        });
    }
    Ok(reports)
}
