//! Rotation-based relation scoring, the KG pairwise loss, the BPR ranking
//! loss, negative sampling, and analytic gradients for all of them.
//!
//! Sign conventions are taken literally from the joint objective: the KG
//! term is Σ log σ(f_pos − f_neg) and the BPR term is −Σ log σ(ŷ_ui − ŷ_uj),
//! both minimized.

use alloc::vec::Vec;

use rand::Rng;

use crate::graph::{MMGraph, Triple};
use crate::linalg::Mat;
use crate::Real;

/// Numerically stable softplus ln(1 + eˣ).
#[inline]
pub fn softplus<F: Real>(x: F) -> F {
    if x > F::zero() {
        x + (F::one() + (-x).exp()).ln()
    } else {
        (F::one() + x.exp()).ln()
    }
}

/// log σ(x) = −softplus(−x).
#[inline]
pub fn log_sigmoid<F: Real>(x: F) -> F {
    -softplus(-x)
}

#[inline]
pub fn sigmoid<F: Real>(x: F) -> F {
    if x >= F::zero() {
        F::one() / (F::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (F::one() + e)
    }
}

/// Applies the elementwise complex rotation r = e^{iφ} to h (d/2 pairs).
pub fn rotate_apply<F: Real>(h: &[F], phases: &[F]) -> Vec<F> {
    assert_eq!(h.len(), phases.len() * 2);
    let mut out = Vec::with_capacity(h.len());
    for (k, &phi) in phases.iter().enumerate() {
        let (a, b) = (h[2 * k], h[2 * k + 1]);
        let (c, s) = (phi.cos(), phi.sin());
        out.push(a * c - b * s);
        out.push(a * s + b * c);
    }
    out
}

/// f(h, r, t) = ‖h ∘ r − t‖² with h read as d/2 complex pairs and
/// r_k = (cos φ_k, sin φ_k).
pub fn rotate_score<F: Real>(h: &[F], phases: &[F], t: &[F]) -> F {
    assert_eq!(h.len(), phases.len() * 2);
    assert_eq!(h.len(), t.len());
    let mut f = F::zero();
    for (k, &phi) in phases.iter().enumerate() {
        let (a, b) = (h[2 * k], h[2 * k + 1]);
        let (c, s) = (phi.cos(), phi.sin());
        let ur = a * c - b * s - t[2 * k];
        let ui = a * s + b * c - t[2 * k + 1];
        f += ur * ur + ui * ui;
    }
    f
}

/// Partial derivatives of `rotate_score`, scaled by `coeff` and accumulated
/// into the gradient slices. `sign` is +1 for the positive triple and −1 for
/// the negative one (t' enters the difference with a minus).
#[allow(clippy::too_many_arguments)]
fn accumulate_rotate_grads<F: Real>(
    h: &[F],
    phases: &[F],
    t: &[F],
    coeff: F,
    grad_h: &mut [F],
    grad_t: &mut [F],
    grad_phases: &mut [F],
) {
    let two = F::from_f64(2.0);
    for (k, &phi) in phases.iter().enumerate() {
        let (a, b) = (h[2 * k], h[2 * k + 1]);
        let (c, s) = (phi.cos(), phi.sin());
        let ur = a * c - b * s - t[2 * k];
        let ui = a * s + b * c - t[2 * k + 1];
        grad_h[2 * k] += coeff * two * (ur * c + ui * s);
        grad_h[2 * k + 1] += coeff * two * (-ur * s + ui * c);
        grad_t[2 * k] -= coeff * two * ur;
        grad_t[2 * k + 1] -= coeff * two * ui;
        grad_phases[k] += coeff * two * (-ur * (a * s + b * c) + ui * (a * c - b * s));
    }
}

/// Positive triples paired with one negative tail each; the negative tail is
/// drawn from the same node block as the true tail.
#[derive(Debug, Clone)]
pub struct TripleBatch {
    pub positives: Vec<Triple>,
    pub negative_tails: Vec<u32>,
}

/// KG loss Σ log σ(f_pos − f_neg) over the batch, with gradients accumulated
/// into `grad_nodes` (same shape as `nodes`) and `grad_phases`.
pub fn kg_loss<F: Real>(
    batch: &TripleBatch,
    nodes: &Mat<F>,
    phases: &Mat<F>,
    grad_nodes: &mut Mat<F>,
    grad_phases: &mut Mat<F>,
) -> F {
    assert_eq!(batch.positives.len(), batch.negative_tails.len());
    let mut loss = F::zero();
    let d = nodes.cols;
    let mut gh = alloc::vec![F::zero(); d];
    let mut gt_pos = alloc::vec![F::zero(); d];
    let mut gt_neg = alloc::vec![F::zero(); d];
    let mut gphi = alloc::vec![F::zero(); phases.cols];
    for (trip, &neg) in batch.positives.iter().zip(batch.negative_tails.iter()) {
        let h = nodes.row(trip.head as usize);
        let phi = phases.row(trip.relation as usize);
        let t_pos = nodes.row(trip.tail as usize);
        let t_neg = nodes.row(neg as usize);
        let f_pos = rotate_score(h, phi, t_pos);
        let f_neg = rotate_score(h, phi, t_neg);
        let delta = f_pos - f_neg;
        loss += log_sigmoid(delta);
        // d/dΔ log σ(Δ) = σ(−Δ)
        let coeff = sigmoid(-delta);
        for v in gh.iter_mut() {
            *v = F::zero();
        }
        for v in gt_pos.iter_mut() {
            *v = F::zero();
        }
        for v in gt_neg.iter_mut() {
            *v = F::zero();
        }
        for v in gphi.iter_mut() {
            *v = F::zero();
        }
        accumulate_rotate_grads(h, phi, t_pos, coeff, &mut gh, &mut gt_pos, &mut gphi);
        accumulate_rotate_grads(h, phi, t_neg, -coeff, &mut gh, &mut gt_neg, &mut gphi);
        for (dst, src) in grad_nodes
            .row_mut(trip.head as usize)
            .iter_mut()
            .zip(gh.iter())
        {
            *dst += *src;
        }
        for (dst, src) in grad_nodes
            .row_mut(trip.tail as usize)
            .iter_mut()
            .zip(gt_pos.iter())
        {
            *dst += *src;
        }
        for (dst, src) in grad_nodes.row_mut(neg as usize).iter_mut().zip(gt_neg.iter()) {
            *dst += *src;
        }
        for (dst, src) in grad_phases
            .row_mut(trip.relation as usize)
            .iter_mut()
            .zip(gphi.iter())
        {
            *dst += *src;
        }
    }
    loss
}

/// BPR loss −Σ log σ(ŷ_ui − ŷ_uj) with ŷ_ui = h_u · h_i, gradients
/// accumulated into the user and item buffers.
pub fn bpr_loss<F: Real>(
    triples: &[(u32, u32, u32)],
    user_vecs: &Mat<F>,
    item_vecs: &Mat<F>,
    grad_users: &mut Mat<F>,
    grad_items: &mut Mat<F>,
) -> F {
    let mut loss = F::zero();
    for &(u, i, j) in triples {
        let hu = user_vecs.row(u as usize);
        let hi = item_vecs.row(i as usize);
        let hj = item_vecs.row(j as usize);
        let margin = crate::linalg::dot(hu, hi) - crate::linalg::dot(hu, hj);
        loss -= log_sigmoid(margin);
        // d/dm (−log σ(m)) = σ(m) − 1
        let coeff = sigmoid(margin) - F::one();
        let d = user_vecs.cols;
        for k in 0..d {
            grad_users.data[u as usize * d + k] += coeff * (hi[k] - hj[k]);
        }
        for k in 0..d {
            grad_items.data[i as usize * d + k] += coeff * hu[k];
            grad_items.data[j as usize * d + k] -= coeff * hu[k];
        }
    }
    loss
}

/// Signalled when a user has interacted with every catalog item and no BPR
/// negative exists.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NoNegative;

/// Uniform BPR negative over items the user has no training interaction
/// with; `train_items` must be sorted.
pub fn sample_bpr_negative<R: Rng>(
    train_items: &[u32],
    n_items: usize,
    rng: &mut R,
) -> Result<u32, NoNegative> {
    if train_items.len() >= n_items {
        return Err(NoNegative);
    }
    loop {
        let cand = rng.random_range(0..n_items as u32);
        if train_items.binary_search(&cand).is_err() {
            return Ok(cand);
        }
    }
}

/// Samples `count` BPR triples (u, i, j): (u, i) uniform over train pairs,
/// j uniform over the user's non-interacted items. Users with no legal
/// negative are skipped.
pub fn sample_bpr_batch<R: Rng>(
    train_pairs: &[(u32, u32)],
    train_items_by_user: &[Vec<u32>],
    n_items: usize,
    count: usize,
    rng: &mut R,
) -> Vec<(u32, u32, u32)> {
    let mut out = Vec::with_capacity(count);
    if train_pairs.is_empty() {
        return out;
    }
    let mut guard = 0usize;
    while out.len() < count && guard < count * 20 {
        guard += 1;
        let &(u, i) = &train_pairs[rng.random_range(0..train_pairs.len())];
        match sample_bpr_negative(&train_items_by_user[u as usize], n_items, rng) {
            Ok(j) => out.push((u, i, j)),
            Err(NoNegative) => continue,
        }
    }
    out
}

/// Samples `count` KG triples with a same-block negative tail per positive:
/// the item block for "τ_of" relations, the matching modality block for
/// "similar_τ" relations.
pub fn sample_kg_batch<R: Rng>(graph: &MMGraph, count: usize, rng: &mut R) -> TripleBatch {
    let n = graph.n_items;
    let mut positives = Vec::with_capacity(count);
    let mut negative_tails = Vec::with_capacity(count);
    if graph.triples.is_empty() || n < 2 {
        return TripleBatch {
            positives,
            negative_tails,
        };
    }
    for _ in 0..count {
        let trip = graph.triples[rng.random_range(0..graph.triples.len())];
        let block_start = if trip.relation % 2 == 0 {
            0usize
        } else {
            ((trip.relation as usize / 2) + 1) * n
        };
        let neg = loop {
            let cand = (block_start + rng.random_range(0..n)) as u32;
            if cand != trip.tail {
                break cand;
            }
        };
        positives.push(trip);
        negative_tails.push(neg);
    }
    TripleBatch {
        positives,
        negative_tails,
    }
}
