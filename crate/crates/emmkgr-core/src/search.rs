//! Vector-query product search: project an externally encoded query into the
//! shared space and rank items by cosine similarity against the multimodal
//! item embeddings.

use alloc::string::String;
use alloc::vec::Vec;

use crate::datastore::FeatureStore;
use crate::linalg::{cosine, Mat};
use crate::model::ParamSet;
use crate::Real;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SearchError {
    UnknownModality(String),
    DimensionMismatch { expected: usize, got: usize },
}

impl core::fmt::Display for SearchError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            SearchError::UnknownModality(t) => write!(f, "unknown modality type: {t}"),
            SearchError::DimensionMismatch { expected, got } => {
                write!(f, "query vector has dimension {got}, modality expects {expected}")
            }
        }
    }
}

/// One query: an externally encoded raw vector tagged with the modality type
/// whose encoder produced it, plus its relevant items.
#[derive(Debug, Clone)]
pub struct Query {
    pub query_id: String,
    pub modality: String,
    pub vector: Vec<f32>,
    pub relevant_items: Vec<String>,
}

/// Projects the raw query vector through the modality's affine map, the same
/// map applied to item modality instances.
pub fn encode_query<F: Real>(
    raw: &[f32],
    modality: &str,
    store: &FeatureStore,
    params: &ParamSet<F>,
) -> Result<Vec<F>, SearchError> {
    let k = store
        .type_index(modality)
        .ok_or_else(|| SearchError::UnknownModality(String::from(modality)))?;
    let w = &params.proj_w[k];
    if raw.len() != w.rows {
        return Err(SearchError::DimensionMismatch {
            expected: w.rows,
            got: raw.len(),
        });
    }
    let mut out: Vec<F> = params.proj_b[k].clone();
    for (i, &x) in raw.iter().enumerate() {
        let xf = F::from_f32(x);
        for (o, &wv) in out.iter_mut().zip(w.row(i).iter()) {
            *o += xf * wv;
        }
    }
    Ok(out)
}

/// Exact cosine top-N over item embedding rows; ties by smaller index,
/// zero-norm rows score 0. `n_out` is clamped to the catalog size.
pub fn search_topn<F: Real>(h_q: &[F], item_vecs: &Mat<F>, n_out: usize) -> (Vec<(u32, F)>, bool) {
    let clamped = n_out > item_vecs.rows;
    let n_out = n_out.min(item_vecs.rows);
    let mut scored: Vec<(u32, F)> = (0..item_vecs.rows)
        .map(|i| (i as u32, cosine(h_q, item_vecs.row(i))))
        .collect();
    scored.sort_by(|a, b| match b.1.partial_cmp(&a.1).unwrap() {
        core::cmp::Ordering::Equal => a.0.cmp(&b.0),
        ord => ord,
    });
    scored.truncate(n_out);
    (scored, clamped)
}

/// Single-modality retrieval baseline: each item scores as the best cosine
/// match between the raw query vector and any of its raw modality vectors of
/// matching dimension.
pub fn search_baseline(
    raw: &[f32],
    store: &FeatureStore,
    n_out: usize,
) -> (Vec<(u32, f32)>, bool) {
    let n = store.n_items();
    let clamped = n_out > n;
    let n_out = n_out.min(n);
    let mut scored: Vec<(u32, f32)> = (0..n)
        .map(|j| {
            let mut best = f32::NEG_INFINITY;
            for m in &store.matrices {
                if m.cols == raw.len() {
                    best = best.max(cosine(raw, m.row(j)));
                }
            }
            if best == f32::NEG_INFINITY {
                best = 0.0;
            }
            (j as u32, best)
        })
        .collect();
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    scored.truncate(n_out);
    (scored, clamped)
}
