//! Exact top-n cosine neighbors over the rows of a feature matrix.
//!
//! Deterministic by construction: full scoring per query row, ties broken by
//! smaller row index, zero-norm rows score 0 against everything.

use alloc::vec;
use alloc::vec::Vec;

use crate::linalg::Mat;
use crate::Real;

/// Top-n neighbors per row, sorted by descending similarity.
#[derive(Debug, Clone)]
pub struct NeighborList<F> {
    /// `lists[j]` holds (neighbor_row, cosine) pairs, similarity non-increasing.
    pub lists: Vec<Vec<(u32, F)>>,
    /// Effective n after clamping to N−1.
    pub n: usize,
    /// True when the requested n exceeded N−1 and was clamped.
    pub clamped: bool,
}

/// Exact top-n cosine similarity search. Requires N ≥ 2; n ≥ N is clamped to
/// N−1 with `clamped` set in the result.
pub fn topn_cosine<F: Real>(matrix: &Mat<F>, n: usize) -> NeighborList<F> {
    assert!(n >= 1, "n must be positive");
    let rows = matrix.rows;
    assert!(rows >= 2, "need at least two rows");
    let clamped = n >= rows;
    let n = n.min(rows - 1);

    // Pre-normalize rows; zero-norm rows keep a zero vector so every dot
    // product with them is 0, matching the similarity convention.
    let mut unit = matrix.clone();
    let mut norms = vec![F::zero(); rows];
    for i in 0..rows {
        let r = unit.row_mut(i);
        let nrm = crate::linalg::norm2(r);
        norms[i] = nrm;
        if nrm > F::zero() {
            for v in r.iter_mut() {
                *v /= nrm;
            }
        }
    }

    let mut lists = Vec::with_capacity(rows);
    for j in 0..rows {
        let q = unit.row(j);
        let mut scored: Vec<(u32, F)> = (0..rows)
            .filter(|&l| l != j)
            .map(|l| (l as u32, crate::linalg::dot(q, unit.row(l))))
            .collect();
        // descending similarity, then ascending index
        scored.sort_by(|a, b| match b.1.partial_cmp(&a.1).unwrap() {
            core::cmp::Ordering::Equal => a.0.cmp(&b.0),
            ord => ord,
        });
        scored.truncate(n);
        lists.push(scored);
    }
    NeighborList { lists, n, clamped }
}
