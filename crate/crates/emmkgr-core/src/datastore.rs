//! Catalog-aligned feature matrices, interaction data, deterministic
//! train/validation/test splitting, and the planted-cluster synthetic
//! generator used for desk-scale experiments.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::linalg::{cosine, Mat};
use crate::rng::{stream_rng, Stream};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DataError {
    /// An item identifier appears more than once in the ID map.
    DuplicateId(String),
    /// A modality matrix row count disagrees with the catalog size.
    RowCountMismatch { expected: usize, got: usize },
    /// A modality type tag appears twice.
    DuplicateModality(String),
    /// An interaction references an item absent from the catalog.
    CatalogMismatch(String),
    /// The interaction file contained no usable pairs.
    EmptyData,
}

impl core::fmt::Display for DataError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            DataError::DuplicateId(id) => write!(f, "duplicate item identifier: {id}"),
            DataError::RowCountMismatch { expected, got } => {
                write!(f, "modality matrix has {got} rows, catalog has {expected} items")
            }
            DataError::DuplicateModality(t) => write!(f, "duplicate modality type: {t}"),
            DataError::CatalogMismatch(id) => {
                write!(f, "interaction references unknown item: {id}")
            }
            DataError::EmptyData => write!(f, "no interactions found"),
        }
    }
}

/// Per-modality dense feature matrices, rows aligned to the item catalog.
#[derive(Debug, Clone)]
pub struct FeatureStore {
    pub modality_types: Vec<String>,
    pub matrices: Vec<Mat<f32>>,
    pub item_ids: Vec<String>,
}

impl FeatureStore {
    pub fn new(
        modality_types: Vec<String>,
        matrices: Vec<Mat<f32>>,
        item_ids: Vec<String>,
    ) -> Result<Self, DataError> {
        assert_eq!(modality_types.len(), matrices.len());
        let mut seen = BTreeSet::new();
        for id in &item_ids {
            if !seen.insert(id.clone()) {
                return Err(DataError::DuplicateId(id.clone()));
            }
        }
        let mut tags = BTreeSet::new();
        for t in &modality_types {
            if !tags.insert(t.clone()) {
                return Err(DataError::DuplicateModality(t.clone()));
            }
        }
        for m in &matrices {
            if m.rows != item_ids.len() {
                return Err(DataError::RowCountMismatch {
                    expected: item_ids.len(),
                    got: m.rows,
                });
            }
        }
        Ok(FeatureStore {
            modality_types,
            matrices,
            item_ids,
        })
    }

    pub fn n_items(&self) -> usize {
        self.item_ids.len()
    }

    pub fn n_types(&self) -> usize {
        self.modality_types.len()
    }

    pub fn type_index(&self, tag: &str) -> Option<usize> {
        self.modality_types.iter().position(|t| t == tag)
    }

    pub fn item_index(&self, id: &str) -> Option<usize> {
        self.item_ids.iter().position(|t| t == id)
    }

    /// Zeroes every modality matrix in place (baseline ablation input).
    pub fn zero_modalities(&mut self) {
        for m in self.matrices.iter_mut() {
            for v in m.data.iter_mut() {
                *v = 0.0;
            }
        }
    }
}

/// Split assignment of one interaction pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Validation,
    Test,
}

/// User–item interaction pairs with optional split labels.
#[derive(Debug, Clone)]
pub struct InteractionData {
    pub user_ids: Vec<String>,
    /// (user_index, item_index), deduplicated.
    pub pairs: Vec<(u32, u32)>,
    /// Parallel to `pairs` once `split_interactions` has run.
    pub splits: Vec<Split>,
    /// Number of duplicate lines collapsed at load time.
    pub duplicates_collapsed: usize,
}

impl InteractionData {
    /// Builds unsplit data from raw (user_id, item_id) records, mapping IDs
    /// to dense indices in first-appearance order and collapsing duplicates.
    pub fn from_records(
        records: &[(String, String)],
        store: &FeatureStore,
    ) -> Result<Self, DataError> {
        if records.is_empty() {
            return Err(DataError::EmptyData);
        }
        let mut user_ids: Vec<String> = Vec::new();
        let mut pairs: Vec<(u32, u32)> = Vec::new();
        let mut seen: BTreeSet<(u32, u32)> = BTreeSet::new();
        let mut duplicates = 0usize;
        for (uid, iid) in records {
            let item = store
                .item_index(iid)
                .ok_or_else(|| DataError::CatalogMismatch(iid.clone()))? as u32;
            let user = match user_ids.iter().position(|u| u == uid) {
                Some(p) => p as u32,
                None => {
                    user_ids.push(uid.clone());
                    (user_ids.len() - 1) as u32
                }
            };
            if seen.insert((user, item)) {
                pairs.push((user, item));
            } else {
                duplicates += 1;
            }
        }
        Ok(InteractionData {
            user_ids,
            pairs,
            splits: Vec::new(),
            duplicates_collapsed: duplicates,
        })
    }

    pub fn n_users(&self) -> usize {
        self.user_ids.len()
    }

    pub fn is_split(&self) -> bool {
        self.splits.len() == self.pairs.len()
    }

    pub fn pairs_in(&self, split: Split) -> impl Iterator<Item = (u32, u32)> + '_ {
        self.pairs
            .iter()
            .zip(self.splits.iter())
            .filter(move |(_, s)| **s == split)
            .map(|(p, _)| *p)
    }

    /// Training items per user, as sorted vectors indexed by user.
    pub fn train_items_by_user(&self, n_users: usize) -> Vec<Vec<u32>> {
        let mut out = vec![Vec::new(); n_users];
        for (u, i) in self.pairs_in(Split::Train) {
            out[u as usize].push(i);
        }
        for v in out.iter_mut() {
            v.sort_unstable();
        }
        out
    }
}

/// Per-user 80/10/10 split: interactions are shuffled with a seeded
/// generator, then the first ⌈0.8k⌉ go to train, the next ⌊0.1k⌋ to
/// validation, and the remainder to test.
pub fn split_interactions(data: &mut InteractionData, seed: u64) {
    let mut rng = stream_rng(seed, Stream::Split);
    let n_users = data.n_users();
    let mut by_user: Vec<Vec<usize>> = vec![Vec::new(); n_users];
    for (idx, &(u, _)) in data.pairs.iter().enumerate() {
        by_user[u as usize].push(idx);
    }
    let mut splits = vec![Split::Train; data.pairs.len()];
    for indices in by_user.iter_mut() {
        indices.shuffle(&mut rng);
        let k = indices.len();
        let n_train = (k * 8).div_ceil(10); // ⌈0.8k⌉
        let n_val = k / 10; // ⌊0.1k⌋
        for (pos, &idx) in indices.iter().enumerate() {
            splits[idx] = if pos < n_train {
                Split::Train
            } else if pos < n_train + n_val {
                Split::Validation
            } else {
                Split::Test
            };
        }
    }
    data.splits = splits;
}

/// Sizes and knobs for the synthetic planted-cluster generator.
#[derive(Debug, Clone)]
pub struct SynthSpec {
    pub n_items: usize,
    pub n_users: usize,
    pub n_types: usize,
    /// Feature dimension, shared by all modality types.
    pub feat_dim: usize,
    pub n_clusters: usize,
    /// Per-coordinate gaussian noise around the planted centroid.
    pub noise: f32,
    pub interactions_per_user: usize,
    /// Probability that an interaction lands inside the user's clusters.
    pub cluster_pref: f64,
    pub seed: u64,
}

/// Ground truth behind a synthetic dataset.
#[derive(Debug, Clone)]
pub struct SynthTruth {
    /// Planted cluster label per item.
    pub item_cluster: Vec<usize>,
    /// Clusters each user prefers (1 or 2).
    pub user_clusters: Vec<Vec<usize>>,
    /// Per-modality centroid matrices, C × feat_dim.
    pub centroids: Vec<Mat<f32>>,
}

fn gaussian<R: Rng>(rng: &mut R) -> f64 {
    use num_traits::Float;
    // Box–Muller; draws two uniforms per sample, fixed order.
    let u1: f64 = rng.random::<f64>().max(1e-12);
    let u2: f64 = rng.random::<f64>();
    Float::sqrt(-2.0 * Float::ln(u1)) * Float::cos(2.0 * core::f64::consts::PI * u2)
}

/// Generates planted-cluster features and cluster-correlated interactions,
/// fully determined by `spec.seed`.
pub fn generate_synthetic(spec: &SynthSpec) -> (FeatureStore, InteractionData, SynthTruth) {
    let mut rng = stream_rng(spec.seed, Stream::Synth);
    let c = spec.n_clusters;
    let d = spec.feat_dim;

    // Unit-norm centroids per modality type.
    let mut centroids = Vec::with_capacity(spec.n_types);
    for _ in 0..spec.n_types {
        let mut m = Mat::zeros(c, d);
        for i in 0..c {
            let row = m.row_mut(i);
            for v in row.iter_mut() {
                *v = gaussian(&mut rng) as f32;
            }
            let n = crate::linalg::norm2(row);
            if n > 0.0 {
                for v in row.iter_mut() {
                    *v /= n;
                }
            }
        }
        centroids.push(m);
    }

    let item_cluster: Vec<usize> = (0..spec.n_items).map(|_| rng.random_range(0..c)).collect();

    let mut matrices = Vec::with_capacity(spec.n_types);
    for t in 0..spec.n_types {
        let mut m = Mat::zeros(spec.n_items, d);
        for j in 0..spec.n_items {
            let label = item_cluster[j];
            for k in 0..d {
                let v = centroids[t].get(label, k) + spec.noise * gaussian(&mut rng) as f32;
                m.set(j, k, v);
            }
        }
        matrices.push(m);
    }

    let item_ids: Vec<String> = (0..spec.n_items)
        .map(|j| alloc::format!("item{j:06}"))
        .collect();
    let modality_types: Vec<String> = (0..spec.n_types)
        .map(|t| alloc::format!("mod{t}"))
        .collect();
    let store = FeatureStore::new(modality_types, matrices, item_ids).expect("synthetic catalog");

    // Items per cluster, for preference sampling.
    let mut items_of_cluster: Vec<Vec<u32>> = vec![Vec::new(); c];
    for (j, &label) in item_cluster.iter().enumerate() {
        items_of_cluster[label].push(j as u32);
    }

    let mut user_ids = Vec::with_capacity(spec.n_users);
    let mut user_clusters = Vec::with_capacity(spec.n_users);
    let mut pairs: Vec<(u32, u32)> = Vec::new();
    let mut seen: BTreeSet<(u32, u32)> = BTreeSet::new();
    for u in 0..spec.n_users {
        user_ids.push(alloc::format!("user{u:06}"));
        let mut prefs = vec![rng.random_range(0..c)];
        if rng.random::<f64>() < 0.5 {
            let other = rng.random_range(0..c);
            if other != prefs[0] {
                prefs.push(other);
            }
        }
        let mut drawn = 0usize;
        let mut attempts = 0usize;
        while drawn < spec.interactions_per_user && attempts < spec.interactions_per_user * 20 {
            attempts += 1;
            let item = if rng.random::<f64>() < spec.cluster_pref {
                let cl = prefs[rng.random_range(0..prefs.len())];
                if items_of_cluster[cl].is_empty() {
                    continue;
                }
                items_of_cluster[cl][rng.random_range(0..items_of_cluster[cl].len())]
            } else {
                rng.random_range(0..spec.n_items as u32)
            };
            if seen.insert((u as u32, item)) {
                pairs.push((u as u32, item));
                drawn += 1;
            }
        }
        user_clusters.push(prefs);
    }

    let data = InteractionData {
        user_ids,
        pairs,
        splits: Vec::new(),
        duplicates_collapsed: 0,
    };
    let truth = SynthTruth {
        item_cluster,
        user_clusters,
        centroids,
    };
    (store, data, truth)
}

/// Brute-force nearest centroid by cosine; oracle for the planted labels.
pub fn nearest_centroid_cosine(row: &[f32], centroids: &Mat<f32>) -> usize {
    let mut best = 0usize;
    let mut best_sim = f32::NEG_INFINITY;
    for c in 0..centroids.rows {
        let s = cosine(row, centroids.row(c));
        if s > best_sim {
            best_sim = s;
            best = c;
        }
    }
    best
}
