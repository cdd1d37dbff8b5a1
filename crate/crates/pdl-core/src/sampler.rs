//! Epoch batch sampling: seeded uniform shuffle (drop-last) and
//! class-balanced P x K batches.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum SamplerKind {
    /// Seeded shuffle, full batches only; the remainder is dropped.
    Uniform,
    /// Each batch draws `classes_per_batch` distinct classes and
    /// `samples_per_class` samples from each (with replacement only when a
    /// class is smaller than requested).
    ClassBalanced {
        classes_per_batch: usize,
        samples_per_class: usize,
    },
}

/// Epoch-specific RNG: one stream per epoch so epochs are independent but
/// (seed, epoch) is fully reproducible.
fn epoch_rng(seed: u64, epoch: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64 + 1);
    rng
}

/// Builds the index batches for one epoch.
pub fn sample_batches(
    labels: &[usize],
    batch_size: usize,
    sampler: &SamplerKind,
    seed: u64,
    epoch: usize,
) -> Result<Vec<Vec<usize>>> {
    let n = labels.len();
    if batch_size < 2 {
        return Err(Error::Sampler(format!(
            "batch_size must be >= 2, got {batch_size}"
        )));
    }
    if batch_size > n {
        return Err(Error::Sampler(format!(
            "batch_size {batch_size} exceeds dataset size {n}"
        )));
    }
    let num_batches = n / batch_size;
    let mut rng = epoch_rng(seed, epoch);

    match *sampler {
        SamplerKind::Uniform => {
            let mut indices: Vec<usize> = (0..n).collect();
            indices.shuffle(&mut rng);
            Ok(indices
                .chunks_exact(batch_size)
                .map(|c| c.to_vec())
                .collect())
        }
        SamplerKind::ClassBalanced {
            classes_per_batch,
            samples_per_class,
        } => {
            if classes_per_batch == 0 || samples_per_class == 0 {
                return Err(Error::Sampler(
                    "class_balanced needs positive class and sample counts".into(),
                ));
            }
            if classes_per_batch * samples_per_class != batch_size {
                return Err(Error::Sampler(format!(
                    "class_balanced: {classes_per_batch} x {samples_per_class} != batch_size {batch_size}"
                )));
            }
            let class_count = labels.iter().copied().max().map_or(0, |m| m + 1);
            let mut members: Vec<Vec<usize>> = vec![Vec::new(); class_count];
            for (i, &l) in labels.iter().enumerate() {
                members[l].push(i);
            }
            let populated: Vec<usize> = (0..class_count)
                .filter(|&c| !members[c].is_empty())
                .collect();
            if populated.len() < classes_per_batch {
                return Err(Error::Sampler(format!(
                    "class_balanced needs {classes_per_batch} populated classes, found {}",
                    populated.len()
                )));
            }

            let mut batches = Vec::with_capacity(num_batches);
            for _ in 0..num_batches {
                let mut classes = populated.clone();
                classes.shuffle(&mut rng);
                classes.truncate(classes_per_batch);

                let mut batch = Vec::with_capacity(batch_size);
                for &c in &classes {
                    let pool = &members[c];
                    if pool.len() >= samples_per_class {
                        let mut picks = pool.clone();
                        picks.shuffle(&mut rng);
                        batch.extend_from_slice(&picks[..samples_per_class]);
                    } else {
                        for _ in 0..samples_per_class {
                            batch.push(pool[rng.random_range(0..pool.len())]);
                        }
                    }
                }
                batches.push(batch);
            }
            Ok(batches)
        }
    }
}
