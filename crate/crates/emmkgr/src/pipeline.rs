//! Dataset-directory conventions and shared stage plumbing used by the CLI
//! subcommands.
//!
//! A dataset directory holds:
//! - `modalities.txt` — one modality tag per line, order defines type index
//! - `items.ids` — one item identifier per line
//! - `features_<tag>.emfm` — feature matrix for each modality tag
//! - `interactions.tsv` — "user<TAB>item" lines
//! - optionally `queries.jsonl` and `planted_clusters.tsv` (synthetic data)

use std::path::{Path, PathBuf};

use emmkgr_core::datastore::{split_interactions, FeatureStore, InteractionData, SynthTruth};
use emmkgr_core::graph::{assemble_variant, MMGraph, Variant};
use emmkgr_core::knn::{topn_cosine, NeighborList};
use emmkgr_core::search::Query;

use crate::error::{AppError, Result};
use crate::io;
use crate::manifest::ManifestBuilder;

pub fn modalities_path(dir: &Path) -> PathBuf {
    dir.join("modalities.txt")
}

pub fn items_path(dir: &Path) -> PathBuf {
    dir.join("items.ids")
}

pub fn features_path(dir: &Path, tag: &str) -> PathBuf {
    dir.join(format!("features_{tag}.emfm"))
}

pub fn interactions_path(dir: &Path) -> PathBuf {
    dir.join("interactions.tsv")
}

pub fn queries_path(dir: &Path) -> PathBuf {
    dir.join("queries.jsonl")
}

pub fn save_dataset(
    dir: &Path,
    store: &FeatureStore,
    data: &InteractionData,
    truth: Option<&SynthTruth>,
    queries: Option<&[Query]>,
    mb: &mut ManifestBuilder,
) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mpath = modalities_path(dir);
    io::features::write_id_map(&mpath, &store.modality_types)?;
    mb.record_output(&mpath);
    let ipath = items_path(dir);
    io::features::write_id_map(&ipath, &store.item_ids)?;
    mb.record_output(&ipath);
    for (tag, m) in store.modality_types.iter().zip(&store.matrices) {
        let fpath = features_path(dir, tag);
        io::features::write_features(&fpath, m)?;
        mb.record_output(&fpath);
    }
    let xpath = interactions_path(dir);
    io::interactions::write_interactions(&xpath, data, &store.item_ids)?;
    mb.record_output(&xpath);
    if let Some(t) = truth {
        let mut buf = String::new();
        for (j, &label) in t.item_cluster.iter().enumerate() {
            buf.push_str(&format!("{}\t{label}\n", store.item_ids[j]));
        }
        let cpath = dir.join("planted_clusters.tsv");
        io::features::atomic_write(&cpath, buf.as_bytes())?;
        mb.record_output(&cpath);
    }
    if let Some(qs) = queries {
        let qpath = queries_path(dir);
        io::queries::write_queries(&qpath, qs)?;
        mb.record_output(&qpath);
    }
    Ok(())
}

pub fn load_store(dir: &Path, mb: &mut ManifestBuilder) -> Result<FeatureStore> {
    let tags = io::features::read_id_map(&modalities_path(dir))?;
    mb.record_input(&modalities_path(dir))?;
    let item_ids = io::features::read_id_map(&items_path(dir))?;
    mb.record_input(&items_path(dir))?;
    let mut matrices = Vec::with_capacity(tags.len());
    for tag in &tags {
        let fpath = features_path(dir, tag);
        matrices.push(io::features::read_feature_matrix(&fpath)?);
        mb.record_input(&fpath)?;
    }
    FeatureStore::new(tags, matrices, item_ids)
        .map_err(|e| AppError::input(format!("{}: {e}", dir.display())))
}

/// Loads interactions and applies the deterministic per-user split.
pub fn load_split_interactions(
    dir: &Path,
    store: &FeatureStore,
    seed: u64,
    mb: &mut ManifestBuilder,
) -> Result<InteractionData> {
    let path = interactions_path(dir);
    let mut data = io::interactions::load_interactions(&path, store)?;
    mb.record_input(&path)?;
    split_interactions(&mut data, seed);
    Ok(data)
}

/// Exact top-n cosine neighbors per modality, in storage precision.
pub fn build_neighbors(store: &FeatureStore, n: usize) -> Vec<NeighborList<f32>> {
    store.matrices.iter().map(|m| topn_cosine(m, n)).collect()
}

/// Rebuilds the graph a stage needs from the graph directory's neighbor
/// lists, then verifies it against the stored fingerprint.
pub fn rebuild_graph(
    graph_dir: &Path,
    store: &FeatureStore,
    interactions: Option<&InteractionData>,
    variant: Variant,
    allow_mismatch: bool,
    mb: &mut ManifestBuilder,
) -> Result<MMGraph> {
    let npath = graph_dir.join("neighbors.tsv");
    let (tags, neighbors) = io::graphdir::read_neighbors(&npath, store.n_items())?;
    mb.record_input(&npath)?;
    if tags != store.modality_types {
        return Err(AppError::mismatch(format!(
            "{}: modality tags {:?} do not match dataset {:?}",
            npath.display(),
            tags,
            store.modality_types
        )));
    }
    let graph = assemble_variant(store, &neighbors, interactions, variant);
    let fpath = graph_dir.join("fingerprint.txt");
    let verdict = io::graphdir::verify_fingerprint(&fpath, &graph);
    mb.record_input(&fpath)?;
    match verdict {
        Err(e) if allow_mismatch => {
            eprintln!("warning: {e} (continuing, mismatch override set)");
        }
        other => other?,
    }
    Ok(graph)
}
