//! Ranking metrics (Recall@K, NDCG@K, MAP@K), k-means clustering, and the
//! intra/inter cosine cohesion analysis of the learned embedding space.

use alloc::collections::BTreeSet;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::linalg::{cosine, Mat};
use crate::rng::{stream_rng, Stream};
use crate::Real;

/// |top-K ∩ relevant| / |relevant|. Callers skip queries with empty
/// relevance before getting here.
pub fn recall_at_k(ranked: &[u32], relevant: &BTreeSet<u32>, k: usize) -> f64 {
    assert!(!relevant.is_empty());
    let hits = ranked
        .iter()
        .take(k)
        .filter(|i| relevant.contains(i))
        .count();
    hits as f64 / relevant.len() as f64
}

/// Binary-relevance NDCG@K: DCG with gain 1/log₂(rank+1), normalized by the
/// ideal DCG over min(|relevant|, K) slots.
pub fn ndcg_at_k(ranked: &[u32], relevant: &BTreeSet<u32>, k: usize) -> f64 {
    assert!(!relevant.is_empty());
    let log2 = |x: f64| x.ln() / core::f64::consts::LN_2;
    let mut dcg = 0.0;
    for (pos, item) in ranked.iter().take(k).enumerate() {
        if relevant.contains(item) {
            dcg += 1.0 / log2((pos + 2) as f64);
        }
    }
    let ideal_slots = relevant.len().min(k);
    let idcg: f64 = (0..ideal_slots).map(|pos| 1.0 / log2((pos + 2) as f64)).sum();
    if idcg == 0.0 {
        0.0
    } else {
        dcg / idcg
    }
}

/// Truncated average precision: (Σ over hit ranks r ≤ K of precision@r)
/// divided by min(|relevant|, K).
pub fn map_at_k(ranked: &[u32], relevant: &BTreeSet<u32>, k: usize) -> f64 {
    assert!(!relevant.is_empty());
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (pos, item) in ranked.iter().take(k).enumerate() {
        if relevant.contains(item) {
            hits += 1;
            sum += hits as f64 / (pos + 1) as f64;
        }
    }
    sum / relevant.len().min(k) as f64
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ClusterError {
    TooManyClusters { k: usize, n: usize },
}

impl core::fmt::Display for ClusterError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            ClusterError::TooManyClusters { k, n } => {
                write!(f, "k-means with K={k} clusters but only {n} points")
            }
        }
    }
}

fn sq_dist<F: Real>(a: &[F], b: &[F]) -> F {
    a.iter()
        .zip(b.iter())
        .map(|(&x, &y)| (x - y) * (x - y))
        .sum()
}

/// k-means with k-means++ seeding and Lloyd iterations until the total
/// centroid shift drops below 1e-6 or 300 iterations pass. Empty clusters
/// are re-seeded to the point farthest from its centroid. Deterministic for
/// a fixed seed.
pub fn kmeans<F: Real>(
    embeddings: &Mat<F>,
    k: usize,
    seed: u64,
) -> Result<Vec<usize>, ClusterError> {
    let n = embeddings.rows;
    if k > n {
        return Err(ClusterError::TooManyClusters { k, n });
    }
    let d = embeddings.cols;
    let mut rng = stream_rng(seed, Stream::KMeans);

    // k-means++ seeding
    let mut centroids = Mat::zeros(k, d);
    let first = rng.random_range(0..n);
    centroids.row_mut(0).copy_from_slice(embeddings.row(first));
    let mut min_d2: Vec<F> = (0..n)
        .map(|i| sq_dist(embeddings.row(i), centroids.row(0)))
        .collect();
    for c in 1..k {
        let total: F = min_d2.iter().copied().sum();
        let pick = if total > F::zero() {
            let mut target = F::from_f64(rng.random::<f64>()) * total;
            let mut chosen = n - 1;
            for (i, &d2) in min_d2.iter().enumerate() {
                if target < d2 {
                    chosen = i;
                    break;
                }
                target -= d2;
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        centroids.row_mut(c).copy_from_slice(embeddings.row(pick));
        for i in 0..n {
            let d2 = sq_dist(embeddings.row(i), centroids.row(c));
            if d2 < min_d2[i] {
                min_d2[i] = d2;
            }
        }
    }

    let mut assign = vec![0usize; n];
    let tol = F::from_f64(1e-6);
    for _ in 0..300 {
        // assignment step; ties to the smaller cluster index
        for i in 0..n {
            let mut best = 0usize;
            let mut best_d = sq_dist(embeddings.row(i), centroids.row(0));
            for c in 1..k {
                let d2 = sq_dist(embeddings.row(i), centroids.row(c));
                if d2 < best_d {
                    best_d = d2;
                    best = c;
                }
            }
            assign[i] = best;
        }
        // update step
        let mut sums: Mat<F> = Mat::zeros(k, d);
        let mut counts = vec![0usize; k];
        for i in 0..n {
            counts[assign[i]] += 1;
            for (s, &v) in sums.row_mut(assign[i]).iter_mut().zip(embeddings.row(i)) {
                *s += v;
            }
        }
        let mut shift = F::zero();
        for c in 0..k {
            if counts[c] == 0 {
                // re-seed to the point farthest from its current centroid
                let mut far = 0usize;
                let mut far_d = F::neg_infinity();
                for i in 0..n {
                    let d2 = sq_dist(embeddings.row(i), centroids.row(assign[i]));
                    if d2 > far_d {
                        far_d = d2;
                        far = i;
                    }
                }
                shift += sq_dist(centroids.row(c), embeddings.row(far)).sqrt();
                centroids.row_mut(c).copy_from_slice(embeddings.row(far));
                assign[far] = c;
                continue;
            }
            let inv = F::one() / F::from_usize(counts[c]);
            let old = centroids.row(c).to_vec();
            for (dst, &s) in centroids.row_mut(c).iter_mut().zip(sums.row(c)) {
                *dst = s * inv;
            }
            shift += sq_dist(&old, centroids.row(c)).sqrt();
        }
        if shift < tol {
            break;
        }
    }
    Ok(assign)
}

/// Cohesion of one embedding source under a clustering: mean same-cluster
/// pairwise cosine, mean cross-cluster cosine, and their gap. `intra` is
/// None when every cluster is a singleton.
#[derive(Debug, Clone)]
pub struct Cohesion {
    pub intra: Option<f64>,
    pub inter: Option<f64>,
    pub gap: Option<f64>,
}

/// Pair means are exact for N ≤ 5000 and estimated from a seeded sample of
/// 10⁶ pairs above that.
pub fn cohesion<F: Real>(embeddings: &Mat<F>, assignments: &[usize], seed: u64) -> Cohesion {
    let n = embeddings.rows;
    assert_eq!(assignments.len(), n);
    let mut intra_sum = 0.0f64;
    let mut intra_n = 0u64;
    let mut inter_sum = 0.0f64;
    let mut inter_n = 0u64;
    if n <= 5000 {
        for i in 0..n {
            for j in (i + 1)..n {
                let s = cosine(embeddings.row(i), embeddings.row(j)).to_f64_val();
                if assignments[i] == assignments[j] {
                    intra_sum += s;
                    intra_n += 1;
                } else {
                    inter_sum += s;
                    inter_n += 1;
                }
            }
        }
    } else {
        let mut rng = stream_rng(seed, Stream::Cohesion);
        for _ in 0..1_000_000u64 {
            let i = rng.random_range(0..n);
            let j = rng.random_range(0..n);
            if i == j {
                continue;
            }
            let s = cosine(embeddings.row(i), embeddings.row(j)).to_f64_val();
            if assignments[i] == assignments[j] {
                intra_sum += s;
                intra_n += 1;
            } else {
                inter_sum += s;
                inter_n += 1;
            }
        }
    }
    let intra = (intra_n > 0).then(|| intra_sum / intra_n as f64);
    let inter = (inter_n > 0).then(|| inter_sum / inter_n as f64);
    let gap = match (intra, inter) {
        (Some(a), Some(b)) => Some(a - b),
        _ => None,
    };
    Cohesion { intra, inter, gap }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn rel(items: &[u32]) -> BTreeSet<u32> {
        items.iter().copied().collect()
    }

    #[test]
    fn recall_examples() {
        let ranked: Vec<u32> = (0..10).collect();
        assert_eq!(recall_at_k(&ranked, &rel(&[3, 99]), 10), 0.5);
        assert_eq!(recall_at_k(&ranked, &rel(&[1, 2]), 10), 1.0);
    }

    #[test]
    fn ndcg_examples() {
        let ranked = [7u32, 3, 9];
        assert_eq!(ndcg_at_k(&ranked, &rel(&[7]), 3), 1.0);
        // single relevant at rank 2 → 1/log₂3
        let got = ndcg_at_k(&ranked, &rel(&[3]), 3);
        assert!((got - 1.0 / 3.0f64.log2()).abs() < 1e-9);
        assert!((got - 0.6309).abs() < 1e-4);
        assert_eq!(ndcg_at_k(&ranked, &rel(&[42]), 3), 0.0);
    }

    #[test]
    fn map_examples() {
        // hits at ranks 1 and 3, |relevant| = 2, K = 5 → (1 + 2/3)/2
        let ranked = [5u32, 6, 7, 8, 9];
        let got = map_at_k(&ranked, &rel(&[5, 7]), 5);
        assert!((got - (1.0 + 2.0 / 3.0) / 2.0).abs() < 1e-9);
        assert_eq!(map_at_k(&ranked, &rel(&[5]), 5), 1.0);
        assert_eq!(map_at_k(&ranked, &rel(&[42]), 5), 0.0);
    }

    #[test]
    fn metrics_match_set_oracle_randomized() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(31);
        for _ in 0..200 {
            let n = rng.random_range(5..50);
            let ranked: Vec<u32> = (0..n as u32).collect();
            let relevant: BTreeSet<u32> = (0..n as u32)
                .filter(|_| rng.random::<f64>() < 0.3)
                .collect();
            if relevant.is_empty() {
                continue;
            }
            let k = rng.random_range(1..=n);
            // set-intersection oracle for recall
            let inter = ranked
                .iter()
                .take(k)
                .filter(|i| relevant.contains(i))
                .count();
            assert_eq!(
                recall_at_k(&ranked, &relevant, k),
                inter as f64 / relevant.len() as f64
            );
            // monotonicity of recall in K
            let mut prev = 0.0;
            for kk in 1..=n {
                let r = recall_at_k(&ranked, &relevant, kk);
                assert!(r >= prev);
                prev = r;
            }
            // bounds
            let nd = ndcg_at_k(&ranked, &relevant, k);
            assert!((0.0..=1.0).contains(&nd));
            let m = map_at_k(&ranked, &relevant, k);
            assert!((0.0..=1.0).contains(&m));
        }
    }

    fn two_blobs(n_per: usize, seed: u64) -> (Mat<f64>, Vec<usize>) {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let d = 4;
        let mut data = Vec::new();
        let mut labels = Vec::new();
        for i in 0..2 * n_per {
            let label = i / n_per;
            labels.push(label);
            for k in 0..d {
                let center = if (k < 2) == (label == 0) { 5.0 } else { 0.0 };
                data.push(center + (rng.random::<f64>() - 0.5) * 0.2);
            }
        }
        (Mat::from_rows(2 * n_per, d, data), labels)
    }

    #[test]
    fn kmeans_recovers_planted_blobs() {
        let (m, labels) = two_blobs(20, 41);
        let assign = kmeans(&m, 2, 0).unwrap();
        // match up to relabeling
        let flip = assign[0] != labels[0];
        for (a, l) in assign.iter().zip(labels.iter()) {
            let mapped = if flip { 1 - a } else { *a };
            assert_eq!(mapped, *l);
        }
    }

    #[test]
    fn kmeans_k_equals_n() {
        let m = Mat::from_rows(4, 2, vec![0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        let assign = kmeans(&m, 4, 3).unwrap();
        let distinct: BTreeSet<usize> = assign.iter().copied().collect();
        assert_eq!(distinct.len(), 4);
        // inertia 0: every point sits on its own centroid
    }

    #[test]
    fn kmeans_deterministic_and_k_too_large() {
        let (m, _) = two_blobs(10, 44);
        let a = kmeans(&m, 3, 7).unwrap();
        let b = kmeans(&m, 3, 7).unwrap();
        assert_eq!(a, b);
        assert!(kmeans(&m, 21, 0).is_err());
    }

    #[test]
    fn cohesion_identical_vectors() {
        let m = Mat::from_rows(4, 2, vec![1.0f64, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0]);
        let c = cohesion(&m, &[0, 0, 1, 1], 0);
        assert!((c.intra.unwrap() - 1.0).abs() < 1e-9);
        assert!((c.inter.unwrap() - 1.0).abs() < 1e-9);
        assert!(c.gap.unwrap().abs() < 1e-9);
    }

    #[test]
    fn cohesion_orthogonal_clusters_gap_one() {
        let mut data = Vec::new();
        for i in 0..8 {
            if i < 4 {
                data.extend_from_slice(&[1.0f64, 0.0]);
            } else {
                data.extend_from_slice(&[0.0, 1.0]);
            }
        }
        let m = Mat::from_rows(8, 2, data);
        let assign = vec![0, 0, 0, 0, 1, 1, 1, 1];
        let c = cohesion(&m, &assign, 0);
        assert!((c.intra.unwrap() - 1.0).abs() < 1e-6);
        assert!(c.inter.unwrap().abs() < 1e-6);
        assert!((c.gap.unwrap() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn cohesion_singletons_reported_missing() {
        let m = Mat::from_rows(3, 2, vec![1.0f64, 0.0, 0.0, 1.0, 1.0, 1.0]);
        let c = cohesion(&m, &[0, 1, 2], 0);
        assert!(c.intra.is_none());
        assert!(c.gap.is_none());
    }

    #[test]
    fn cohesion_matches_double_loop_oracle() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(55);
        let n = 30;
        let d = 3;
        let m = Mat::from_rows(
            n,
            d,
            (0..n * d).map(|_| rng.random::<f64>() - 0.5).collect(),
        );
        let assign: Vec<usize> = (0..n).map(|_| rng.random_range(0..3)).collect();
        let c = cohesion(&m, &assign, 0);
        let mut isum = 0.0;
        let mut icnt = 0;
        let mut xsum = 0.0;
        let mut xcnt = 0;
        for i in 0..n {
            for j in (i + 1)..n {
                let s = cosine(m.row(i), m.row(j));
                if assign[i] == assign[j] {
                    isum += s;
                    icnt += 1;
                } else {
                    xsum += s;
                    xcnt += 1;
                }
            }
        }
        assert!((c.intra.unwrap() - isum / icnt as f64).abs() < 1e-6);
        assert!((c.inter.unwrap() - xsum / xcnt as f64).abs() < 1e-6);
    }
}
