//! Non-differentiable embedding-space analysis: decidability index over
//! score sets, all-pairs genuine/impostor distributions, histograms, and
//! Recall@K.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::fmath;
use crate::sums::{exact_mean, exact_population_variance};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum ScoreKind {
    Similarity,
    Distance,
}

/// Genuine and impostor score lists of one embedding space.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreSet {
    pub genuine: Vec<f64>,
    pub impostor: Vec<f64>,
    pub kind: ScoreKind,
}

/// Recall@K over a set of k values.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RecallReport {
    pub k_values: Vec<usize>,
    pub recall: BTreeMap<usize, f64>,
    pub num_queries: usize,
    /// Queries skipped because their class has no other member.
    pub num_excluded: usize,
}

/// Uniform-bin histogram; `edges` has one more entry than `counts`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

/// Decidability index `|mu_imp - mu_gen| / sqrt((var_gen + var_imp) / 2)`
/// with population variances.
///
/// Degenerate cases: equal means with zero variances give 0; differing
/// means with zero variances give the +inf sentinel.
pub fn decidability_index(scores: &ScoreSet) -> Result<f64> {
    for (name, list) in [("genuine", &scores.genuine), ("impostor", &scores.impostor)] {
        if list.len() < 2 {
            return Err(Error::InsufficientData {
                what: name,
                needed: 2,
                got: list.len(),
            });
        }
    }
    let mu_gen = exact_mean(&scores.genuine);
    let mu_imp = exact_mean(&scores.impostor);
    let var_gen = exact_population_variance(&scores.genuine);
    let var_imp = exact_population_variance(&scores.impostor);

    let gap = fmath::abs(mu_imp - mu_gen);
    let spread = fmath::sqrt((var_gen + var_imp) / 2.0);
    if spread == 0.0 {
        return Ok(if gap == 0.0 { 0.0 } else { f64::INFINITY });
    }
    Ok(gap / spread)
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let na = fmath::sqrt(a.iter().map(|x| x * x).sum());
    let nb = fmath::sqrt(b.iter().map(|x| x * x).sum());
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    dot / (na.max(crate::NORM_EPS) * nb.max(crate::NORM_EPS))
}

/// Enumerates all i < j pairs and collects cosine scores (similarity, or
/// `1 - cos` for [`ScoreKind::Distance`]) into genuine/impostor lists.
pub fn genuine_impostor_scores(
    embeddings: &Tensor,
    labels: &[usize],
    kind: ScoreKind,
) -> Result<ScoreSet> {
    let n = embeddings.rows();
    if n != labels.len() {
        return Err(Error::ShapeMismatch {
            op: "genuine_impostor_scores",
            lhs: vec![n],
            rhs: vec![labels.len()],
        });
    }
    if n < 2 {
        return Err(Error::InsufficientData {
            what: "embeddings",
            needed: 2,
            got: n,
        });
    }

    let mut genuine = Vec::new();
    let mut impostor = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let cos = cosine(embeddings.row(i), embeddings.row(j));
            let score = match kind {
                ScoreKind::Similarity => cos,
                ScoreKind::Distance => 1.0 - cos,
            };
            if labels[i] == labels[j] {
                genuine.push(score);
            } else {
                impostor.push(score);
            }
        }
    }
    if genuine.is_empty() {
        return Err(Error::BatchComposition(
            "no genuine pairs: every sample has a distinct class".into(),
        ));
    }
    if impostor.is_empty() {
        return Err(Error::BatchComposition(
            "no impostor pairs: all samples share one class".into(),
        ));
    }
    Ok(ScoreSet {
        genuine,
        impostor,
        kind,
    })
}

/// Recall@K by cosine distance with deterministic tie-break on ascending
/// sample index; the query itself is excluded. Queries whose class has a
/// single member are excluded and counted in `num_excluded`.
pub fn recall_at_k(embeddings: &Tensor, labels: &[usize], k_values: &[usize]) -> Result<RecallReport> {
    let n = embeddings.rows();
    if n != labels.len() {
        return Err(Error::ShapeMismatch {
            op: "recall_at_k",
            lhs: vec![n],
            rhs: vec![labels.len()],
        });
    }
    if k_values.is_empty() {
        return Err(Error::EmptySet { what: "k_values" });
    }
    let max_k = *k_values.iter().max().unwrap();
    if max_k == 0 || max_k >= n {
        return Err(Error::Config(alloc::format!(
            "k values must satisfy 1 <= k < n = {n}, got max k = {max_k}"
        )));
    }

    let mut class_sizes = BTreeMap::new();
    for &l in labels {
        *class_sizes.entry(l).or_insert(0usize) += 1;
    }

    let mut hits: BTreeMap<usize, usize> = k_values.iter().map(|&k| (k, 0)).collect();
    let mut num_queries = 0usize;
    let mut num_excluded = 0usize;

    let mut order: Vec<usize> = Vec::with_capacity(n - 1);
    for q in 0..n {
        if class_sizes[&labels[q]] < 2 {
            num_excluded += 1;
            continue;
        }
        num_queries += 1;

        order.clear();
        order.extend((0..n).filter(|&i| i != q));
        let qrow = embeddings.row(q);
        let mut dists: Vec<f64> = vec![0.0; n];
        for &i in order.iter() {
            dists[i] = 1.0 - cosine(qrow, embeddings.row(i));
        }
        order.sort_by(|&a, &b| dists[a].total_cmp(&dists[b]).then(a.cmp(&b)));

        for (&k, hit) in hits.iter_mut() {
            if order[..k].iter().any(|&i| labels[i] == labels[q]) {
                *hit += 1;
            }
        }
    }

    if num_queries == 0 {
        return Err(Error::InsufficientData {
            what: "recall queries",
            needed: 1,
            got: 0,
        });
    }

    let recall: BTreeMap<usize, f64> = hits
        .into_iter()
        .map(|(k, h)| (k, h as f64 / num_queries as f64))
        .collect();
    Ok(RecallReport {
        k_values: k_values.to_vec(),
        recall,
        num_queries,
        num_excluded,
    })
}

/// Uniform bins over `[lo, hi)` with the final bin closed; out-of-range
/// scores are clamped into the edge bins, so counts always sum to the
/// input length.
pub fn histogram(scores: &[f64], num_bins: usize, range: (f64, f64)) -> Result<Histogram> {
    let (lo, hi) = range;
    if scores.is_empty() {
        return Err(Error::EmptySet { what: "histogram" });
    }
    if num_bins == 0 {
        return Err(Error::Config("histogram needs at least one bin".into()));
    }
    if !(lo < hi) {
        return Err(Error::Config(alloc::format!(
            "histogram range must satisfy lo < hi, got ({lo}, {hi})"
        )));
    }

    let width = (hi - lo) / num_bins as f64;
    let mut counts = vec![0usize; num_bins];
    for &s in scores {
        let raw = fmath::floor((s - lo) / width);
        let idx = if raw < 0.0 {
            0
        } else {
            (raw as usize).min(num_bins - 1)
        };
        counts[idx] += 1;
    }
    let edges = (0..=num_bins).map(|i| lo + i as f64 * width).collect();
    Ok(Histogram { edges, counts })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Gaussian-ish scores rescaled to exact sample statistics.
    pub(crate) fn scores_with_stats(n: usize, mean: f64, std: f64, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let raw: Vec<f64> = (0..n)
            .map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal))
            .collect();
        let mu = exact_mean(&raw);
        let sigma = exact_population_variance(&raw).sqrt();
        raw.iter().map(|&x| (x - mu) / sigma * std + mean).collect()
    }

    #[test]
    fn matches_reported_separability_example() {
        let set = ScoreSet {
            genuine: scores_with_stats(4000, 0.47, 0.22, 1),
            impostor: scores_with_stats(4000, 0.82, 0.04, 2),
            kind: ScoreKind::Distance,
        };
        let d = decidability_index(&set).unwrap();
        let expected = (0.82 - 0.47) / ((0.22f64.powi(2) + 0.04f64.powi(2)) / 2.0).sqrt();
        assert!((d - expected).abs() < 1e-9, "d' = {d}");
        assert!((d - 2.21).abs() < 0.03, "d' = {d} should be near 2.21");
    }

    #[test]
    fn equal_means_give_zero() {
        let set = ScoreSet {
            genuine: vec![0.5, 0.7, 0.3],
            impostor: vec![0.4, 0.6, 0.5],
            kind: ScoreKind::Similarity,
        };
        assert_eq!(decidability_index(&set).unwrap(), 0.0);
    }

    #[test]
    fn zero_variance_sentinels() {
        let diff = ScoreSet {
            genuine: vec![0.2, 0.2],
            impostor: vec![0.9, 0.9],
            kind: ScoreKind::Similarity,
        };
        assert_eq!(decidability_index(&diff).unwrap(), f64::INFINITY);

        let same = ScoreSet {
            genuine: vec![0.5, 0.5],
            impostor: vec![0.5, 0.5],
            kind: ScoreKind::Similarity,
        };
        assert_eq!(decidability_index(&same).unwrap(), 0.0);
    }

    #[test]
    fn too_few_scores_is_an_error() {
        let set = ScoreSet {
            genuine: vec![0.5],
            impostor: vec![0.4, 0.6],
            kind: ScoreKind::Similarity,
        };
        assert!(matches!(
            decidability_index(&set),
            Err(Error::InsufficientData { what: "genuine", .. })
        ));
    }

    #[test]
    fn matches_brute_force_formula_on_large_sets() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let genuine: Vec<f64> = (0..1000).map(|_| rng.random_range(0.0..1.0)).collect();
        let impostor: Vec<f64> = (0..1000).map(|_| rng.random_range(0.5..2.0)).collect();

        let stats = |v: &[f64]| {
            let m = v.iter().sum::<f64>() / v.len() as f64;
            let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64;
            (m, var)
        };
        let (mg, vg) = stats(&genuine);
        let (mi, vi) = stats(&impostor);
        let expected = (mi - mg).abs() / ((vg + vi) / 2.0).sqrt();

        let set = ScoreSet {
            genuine,
            impostor,
            kind: ScoreKind::Similarity,
        };
        assert!((decidability_index(&set).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn affine_map_leaves_d_prime_unchanged() {
        let set = ScoreSet {
            genuine: scores_with_stats(500, 0.3, 0.1, 3),
            impostor: scores_with_stats(500, 0.8, 0.2, 4),
            kind: ScoreKind::Similarity,
        };
        let base = decidability_index(&set).unwrap();
        for (a, b) in [(2.0, 0.0), (-1.5, 3.0), (0.1, -0.7)] {
            let mapped = ScoreSet {
                genuine: set.genuine.iter().map(|&x| a * x + b).collect(),
                impostor: set.impostor.iter().map(|&x| a * x + b).collect(),
                kind: set.kind,
            };
            let d = decidability_index(&mapped).unwrap();
            assert!((d - base).abs() < 1e-10, "affine ({a}, {b}): {d} vs {base}");
        }
    }

    #[test]
    fn pair_counting_small_case() {
        let z = Tensor::matrix(3, 2, vec![1.0, 0.0, 0.9, 0.1, 0.0, 1.0]).unwrap();
        let set = genuine_impostor_scores(&z, &[0, 0, 1], ScoreKind::Distance).unwrap();
        assert_eq!(set.genuine.len(), 1);
        assert_eq!(set.impostor.len(), 2);
    }

    #[test]
    fn identical_embeddings_have_zero_distances() {
        let z = Tensor::matrix(4, 3, vec![0.5; 12]).unwrap();
        let set = genuine_impostor_scores(&z, &[0, 1, 0, 1], ScoreKind::Distance).unwrap();
        for s in set.genuine.iter().chain(&set.impostor) {
            assert!(s.abs() < 1e-12);
        }
    }

    #[test]
    fn pair_counts_match_combinatorics() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 24;
        let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..4)).collect();
        let data: Vec<f64> = (0..n * 5).map(|_| rng.random_range(-1.0..1.0)).collect();
        let z = Tensor::matrix(n, 5, data).unwrap();
        let set = genuine_impostor_scores(&z, &labels, ScoreKind::Similarity).unwrap();

        let mut per_class = [0usize; 4];
        for &l in &labels {
            per_class[l] += 1;
        }
        let genuine_pairs: usize = per_class.iter().map(|&c| c * (c - 1) / 2).sum();
        assert_eq!(set.genuine.len(), genuine_pairs);
        assert_eq!(set.genuine.len() + set.impostor.len(), n * (n - 1) / 2);
    }

    #[test]
    fn missing_pair_kind_is_named() {
        let z = Tensor::matrix(3, 2, vec![1.0, 0.0, 0.5, 0.5, 0.0, 1.0]).unwrap();
        let err = genuine_impostor_scores(&z, &[0, 1, 2], ScoreKind::Distance).unwrap_err();
        match err {
            Error::BatchComposition(msg) => assert!(msg.contains("genuine")),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn perfectly_separated_clusters_have_perfect_recall() {
        let z = Tensor::matrix(
            4,
            2,
            vec![1.0, 0.0, 0.99, 0.01, 0.0, 1.0, 0.01, 0.99],
        )
        .unwrap();
        let report = recall_at_k(&z, &[0, 0, 1, 1], &[1]).unwrap();
        assert_eq!(report.recall[&1], 1.0);
        assert_eq!(report.num_queries, 4);
    }

    #[test]
    fn recall_is_monotone_in_k() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 20;
        let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..3)).collect();
        let data: Vec<f64> = (0..n * 6).map(|_| rng.random_range(-1.0..1.0)).collect();
        let z = Tensor::matrix(n, 6, data).unwrap();
        let report = recall_at_k(&z, &labels, &[1, 2, 4, 8]).unwrap();
        assert!(report.recall[&1] <= report.recall[&2]);
        assert!(report.recall[&2] <= report.recall[&4]);
        assert!(report.recall[&4] <= report.recall[&8]);
    }

    #[test]
    fn degenerate_ties_break_by_index() {
        // All embeddings identical: neighbors are simply ascending indices.
        let z = Tensor::matrix(5, 2, vec![0.7; 10]).unwrap();
        let labels = [0usize, 1, 0, 1, 0];
        let report = recall_at_k(&z, &labels, &[1, 2]).unwrap();
        // query 0 -> neighbor 1 (label 1): miss at k=1; neighbors {1,2}: hit at k=2
        // query 1 -> neighbor 0: miss; {0,2}: miss at k=2 (label 0,0) -> still miss
        // query 2 -> neighbor 0 (label 0): hit
        // query 3 -> neighbor 0: miss; {0,1}: hit
        // query 4 -> neighbor 0: hit
        assert_eq!(report.recall[&1], 2.0 / 5.0);
        assert_eq!(report.recall[&2], 4.0 / 5.0);
    }

    #[test]
    fn single_member_class_is_excluded_and_counted() {
        let z = Tensor::matrix(5, 2, vec![1.0, 0.0, 0.9, 0.1, 0.8, 0.2, 0.0, 1.0, 0.1, 0.9])
            .unwrap();
        let labels = [0usize, 0, 0, 1, 2];
        let report = recall_at_k(&z, &labels, &[1]).unwrap();
        assert_eq!(report.num_excluded, 2);
        assert_eq!(report.num_queries, 3);
    }

    #[test]
    fn histogram_edge_placement() {
        let h = histogram(&[0.5], 2, (0.0, 1.0)).unwrap();
        assert_eq!(h.counts, vec![0, 1]);
        assert_eq!(h.edges, vec![0.0, 0.5, 1.0]);
    }

    #[test]
    fn histogram_uniform_grid_is_flat() {
        let scores: Vec<f64> = (0..100).map(|i| (i as f64 + 0.5) / 100.0).collect();
        let h = histogram(&scores, 10, (0.0, 1.0)).unwrap();
        assert!(h.counts.iter().all(|&c| c == 10), "{:?}", h.counts);
    }

    #[test]
    fn histogram_clamps_and_conserves_counts() {
        let scores = [-5.0, 0.1, 0.9, 27.0, 1.0, 0.4999];
        let h = histogram(&scores, 4, (0.0, 1.0)).unwrap();
        assert_eq!(h.counts.iter().sum::<usize>(), scores.len());
        assert_eq!(h.counts[0], 2); // -5.0 clamped + 0.1
        assert_eq!(h.counts[3], 3); // 27.0 clamped + 0.9 + 1.0
    }

    #[test]
    fn histogram_of_nothing_is_an_error() {
        assert!(matches!(
            histogram(&[], 4, (0.0, 1.0)),
            Err(Error::EmptySet { .. })
        ));
    }
}
