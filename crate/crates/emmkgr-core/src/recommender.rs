//! Top-K recommendation: fusion of interaction- and MMKG-propagated item
//! embeddings, dot-product scoring, and train-item masking.

use alloc::vec::Vec;

use crate::linalg::Mat;
use crate::Real;

/// Ranked items for one user, scores non-increasing, ties by smaller index.
#[derive(Debug, Clone)]
pub struct RankedList<F> {
    pub user: u32,
    pub items: Vec<(u32, F)>,
    /// True when K exceeded the unmasked item count and the list was clamped.
    pub truncated: bool,
}

/// H_item = H_item^IN + H_item^MM, elementwise.
pub fn fuse_items<F: Real>(h_in: &Mat<F>, h_mm: &Mat<F>) -> Mat<F> {
    assert_eq!(h_in.rows, h_mm.rows, "item block shape mismatch");
    assert_eq!(h_in.cols, h_mm.cols, "item block shape mismatch");
    let mut out = h_in.clone();
    out.add_assign(h_mm);
    out
}

/// Selects the top-k of `scores` with masked indices excluded; descending
/// score, ties by smaller index.
pub fn rank_top_k<F: Real>(scores: &[F], masked: &[u32], k: usize) -> (Vec<(u32, F)>, bool) {
    let mut scored: Vec<(u32, F)> = scores
        .iter()
        .enumerate()
        .filter(|(i, _)| masked.binary_search(&(*i as u32)).is_err())
        .map(|(i, &s)| (i as u32, s))
        .collect();
    scored.sort_by(|a, b| match b.1.partial_cmp(&a.1).unwrap() {
        core::cmp::Ordering::Equal => a.0.cmp(&b.0),
        ord => ord,
    });
    let truncated = k > scored.len();
    scored.truncate(k);
    (scored, truncated)
}

/// Scores every item by h_u · h_i, masks the user's train items, and returns
/// the top-K. `train_items` must be sorted.
pub fn recommend<F: Real>(
    user: u32,
    k: usize,
    user_vecs: &Mat<F>,
    item_vecs: &Mat<F>,
    train_items: &[u32],
) -> RankedList<F> {
    let hu = user_vecs.row(user as usize);
    let scores: Vec<F> = (0..item_vecs.rows)
        .map(|i| crate::linalg::dot(hu, item_vecs.row(i)))
        .collect();
    let (items, truncated) = rank_top_k(&scores, train_items, k);
    RankedList {
        user,
        items,
        truncated,
    }
}

/// Same pipeline with interaction-only item embeddings (no fusion); the
/// caller passes H_item^IN directly.
pub fn recommend_baseline<F: Real>(
    user: u32,
    k: usize,
    user_vecs: &Mat<F>,
    h_item_in: &Mat<F>,
    train_items: &[u32],
) -> RankedList<F> {
    recommend(user, k, user_vecs, h_item_in, train_items)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn fuse_zero_mm_is_identity_and_commutes() {
        let a = Mat::from_rows(2, 2, vec![1.0, 2.0, 3.0, 4.0]);
        let z = Mat::zeros(2, 2);
        assert_eq!(fuse_items(&a, &z).data, a.data);
        let b = Mat::from_rows(2, 2, vec![5.0, 6.0, 7.0, 8.0]);
        assert_eq!(fuse_items(&a, &b).data, fuse_items(&b, &a).data);
    }

    #[test]
    fn fuse_matches_elementwise_oracle() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let a = Mat::from_rows(3, 4, (0..12).map(|_| rng.random::<f64>()).collect());
        let b = Mat::from_rows(3, 4, (0..12).map(|_| rng.random::<f64>()).collect());
        let f = fuse_items(&a, &b);
        for i in 0..12 {
            assert_eq!(f.data[i], a.data[i] + b.data[i]);
        }
    }

    #[test]
    fn picks_highest_score() {
        let users = Mat::from_rows(1, 1, vec![1.0]);
        let items = Mat::from_rows(2, 1, vec![0.9, 0.1]);
        let r = recommend(0, 1, &users, &items, &[]);
        assert_eq!(r.items, vec![(0, 0.9)]);
    }

    #[test]
    fn masked_top_item_skipped() {
        let users = Mat::from_rows(1, 1, vec![1.0]);
        let items = Mat::from_rows(3, 1, vec![0.9, 0.5, 0.1]);
        let r = recommend(0, 1, &users, &items, &[0]);
        assert_eq!(r.items[0].0, 1);
    }

    #[test]
    fn oversized_k_clamps() {
        let users = Mat::from_rows(1, 1, vec![1.0]);
        let items = Mat::from_rows(2, 1, vec![0.9, 0.1]);
        let r = recommend(0, 10, &users, &items, &[1]);
        assert!(r.truncated);
        assert_eq!(r.items.len(), 1);
    }

    #[test]
    fn matches_full_sort_oracle() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        for _ in 0..10 {
            let n = rng.random_range(10..200);
            let d = 4;
            let users = Mat::from_rows(1, d, (0..d).map(|_| rng.random::<f64>() - 0.5).collect());
            let items = Mat::from_rows(
                n,
                d,
                (0..n * d).map(|_| rng.random::<f64>() - 0.5).collect(),
            );
            let mut mask: Vec<u32> = (0..n as u32).filter(|_| rng.random::<f64>() < 0.1).collect();
            mask.sort_unstable();
            let k = rng.random_range(1..n);
            let r = recommend(0, k, &users, &items, &mask);
            // exhaustive scoring + sort
            let hu = users.row(0);
            let mut all: Vec<(u32, f64)> = (0..n as u32)
                .filter(|i| mask.binary_search(i).is_err())
                .map(|i| (i, crate::linalg::dot(hu, items.row(i as usize))))
                .collect();
            all.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
            all.truncate(k);
            assert_eq!(r.items, all);
        }
    }

    #[test]
    fn argmax_invariant_under_positive_scaling() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(22);
        let n = 50;
        let users = Mat::from_rows(1, 3, vec![0.3, -0.2, 0.9]);
        let items = Mat::from_rows(
            n,
            3,
            (0..n * 3).map(|_| rng.random::<f64>() - 0.5).collect(),
        );
        let base = recommend(0, 10, &users, &items, &[]);
        let mut scaled_users = users.clone();
        scaled_users.scale(4.5);
        let scaled = recommend(0, 10, &scaled_users, &items, &[]);
        let a: Vec<u32> = base.items.iter().map(|&(i, _)| i).collect();
        let b: Vec<u32> = scaled.items.iter().map(|&(i, _)| i).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn masking_soundness() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(23);
        let n = 40;
        let users = Mat::from_rows(1, 2, vec![1.0, 1.0]);
        let items = Mat::from_rows(n, 2, (0..n * 2).map(|_| rng.random::<f64>()).collect());
        let mask: Vec<u32> = (0..10).collect();
        let r = recommend(0, n, &users, &items, &mask);
        for &(i, _) in &r.items {
            assert!(mask.binary_search(&i).is_err());
        }
    }
}
