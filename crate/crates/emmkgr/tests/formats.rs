//! File-format round trips and error handling.

use std::fs;

use emmkgr::config::RunConfig;
use emmkgr::error::AppError;
use emmkgr::io::checkpoint::{read_checkpoint, write_checkpoint, Checkpoint};
use emmkgr::io::features::{
    load_features, read_feature_matrix, read_id_map, write_features, write_id_map,
};
use emmkgr::io::graphdir::{
    graph_hash, read_fingerprint_hash, read_neighbors, verify_fingerprint, write_fingerprint,
    write_neighbors,
};
use emmkgr::io::queries::{read_queries, write_queries};
use emmkgr_core::graph::{assemble_mmkg, Variant};
use emmkgr_core::knn::topn_cosine;
use emmkgr_core::linalg::Mat;
use emmkgr_core::model::ParamSet;
use emmkgr_core::search::Query;
use rand::{Rng, SeedableRng};

fn rand_mat(seed: u64, rows: usize, cols: usize) -> Mat<f32> {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    Mat::from_rows(
        rows,
        cols,
        (0..rows * cols).map(|_| rng.random::<f32>() - 0.5).collect(),
    )
}

#[test]
fn feature_file_round_trip_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let m = rand_mat(1, 7, 5);
    let p1 = dir.path().join("a.emfm");
    let p2 = dir.path().join("b.emfm");
    write_features(&p1, &m).unwrap();
    let loaded = read_feature_matrix(&p1).unwrap();
    assert_eq!(loaded.data, m.data);
    write_features(&p2, &loaded).unwrap();
    assert_eq!(fs::read(&p1).unwrap(), fs::read(&p2).unwrap());
}

#[test]
fn feature_file_header_arithmetic() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("m.emfm");
    write_features(&p, &rand_mat(2, 3, 4)).unwrap();
    let m = read_feature_matrix(&p).unwrap();
    assert_eq!((m.rows, m.cols), (3, 4));
    assert_eq!(fs::read(&p).unwrap().len(), 24 + 48);
}

#[test]
fn truncated_payload_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("m.emfm");
    write_features(&p, &rand_mat(3, 3, 4)).unwrap();
    let mut bytes = fs::read(&p).unwrap();
    bytes.truncate(bytes.len() - 4);
    fs::write(&p, &bytes).unwrap();
    let err = read_feature_matrix(&p).unwrap_err();
    assert!(matches!(err, AppError::Input(_)));
    assert!(err.to_string().contains("truncated"));
}

#[test]
fn bad_magic_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("m.emfm");
    fs::write(&p, b"NOPE____________________").unwrap();
    let err = read_feature_matrix(&p).unwrap_err();
    assert!(err.to_string().contains("magic"));
}

#[test]
fn duplicate_id_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("ids.txt");
    fs::write(&p, "A\nB\nA\n").unwrap();
    let err = read_id_map(&p).unwrap_err();
    assert!(err.to_string().contains("duplicate"));
}

#[test]
fn id_map_row_alignment_enforced() {
    let dir = tempfile::tempdir().unwrap();
    let fpath = dir.path().join("m.emfm");
    let ipath = dir.path().join("ids.txt");
    write_features(&fpath, &rand_mat(4, 3, 2)).unwrap();
    write_id_map(
        &ipath,
        &["a".to_string(), "b".to_string(), "c".to_string(), "d".to_string()],
    )
    .unwrap();
    assert!(load_features(&fpath, &ipath).is_err());
    write_id_map(&ipath, &["a".to_string(), "b".to_string(), "c".to_string()]).unwrap();
    let (m, ids) = load_features(&fpath, &ipath).unwrap();
    assert_eq!(m.rows, ids.len());
}

fn sample_checkpoint() -> Checkpoint {
    let params = ParamSet::<f32>::init(5, 3, &[4, 6], 8, true, 11).unwrap();
    let config = RunConfig {
        dim: 8,
        separate_item_tables: true,
        ..RunConfig::default()
    };
    Checkpoint::from_params(config, "ab".repeat(32), &params)
}

#[test]
fn checkpoint_round_trip_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let p1 = dir.path().join("a.emkg");
    let p2 = dir.path().join("b.emkg");
    let ckpt = sample_checkpoint();
    write_checkpoint(&p1, &ckpt).unwrap();
    let loaded = read_checkpoint(&p1).unwrap();
    assert_eq!(loaded.config, ckpt.config);
    assert_eq!(loaded.graph_hash, ckpt.graph_hash);
    assert_eq!(loaded.tensors, ckpt.tensors);
    write_checkpoint(&p2, &loaded).unwrap();
    assert_eq!(fs::read(&p1).unwrap(), fs::read(&p2).unwrap());
}

#[test]
fn checkpoint_params_reconstructed() {
    let params = ParamSet::<f32>::init(5, 3, &[4, 6], 8, true, 11).unwrap();
    let ckpt = Checkpoint::from_params(RunConfig::default(), "cd".repeat(32), &params);
    let back = ckpt.to_params().unwrap();
    assert_eq!(back.item_emb.data, params.item_emb.data);
    assert_eq!(back.user_emb.data, params.user_emb.data);
    assert_eq!(
        back.item_emb_in.as_ref().unwrap().data,
        params.item_emb_in.as_ref().unwrap().data
    );
    assert_eq!(back.proj_w.len(), 2);
    assert_eq!(back.proj_b, params.proj_b);
    assert_eq!(back.phases.data, params.phases.data);
}

#[test]
fn checkpoint_tensor_shape_mismatch_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("a.emkg");
    let mut ckpt = sample_checkpoint();
    ckpt.tensors[0].3.pop(); // value count no longer matches declared shape
    assert!(write_checkpoint(&p, &ckpt).is_err());
}

#[test]
fn checkpoint_trailing_bytes_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("a.emkg");
    write_checkpoint(&p, &sample_checkpoint()).unwrap();
    let mut bytes = fs::read(&p).unwrap();
    bytes.push(0);
    fs::write(&p, &bytes).unwrap();
    assert!(read_checkpoint(&p).is_err());
}

fn fixture_graph() -> emmkgr_core::graph::MMGraph {
    let store = emmkgr_core::datastore::FeatureStore::new(
        vec!["image".to_string(), "text".to_string()],
        vec![rand_mat(2, 6, 3), rand_mat(3, 6, 4)],
        (0..6).map(|i| format!("i{i}")).collect(),
    )
    .unwrap();
    let neighbors: Vec<_> = store
        .matrices
        .iter()
        .map(|m| topn_cosine(m, 2))
        .collect();
    assemble_mmkg(&store, &neighbors)
}

#[test]
fn fingerprint_round_trip_and_tamper_detection() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("fingerprint.txt");
    let graph = fixture_graph();
    write_fingerprint(&p, &graph).unwrap();
    assert_eq!(read_fingerprint_hash(&p).unwrap(), graph_hash(&graph));
    verify_fingerprint(&p, &graph).unwrap();
    // altered fingerprint → refusal
    let tampered = fs::read_to_string(&p)
        .unwrap()
        .replace("sha256=", "sha256=0");
    fs::write(&p, tampered).unwrap();
    let err = verify_fingerprint(&p, &graph).unwrap_err();
    assert!(matches!(err, AppError::Mismatch(_)));
    assert_eq!(err.exit_code(), 4);
}

#[test]
fn neighbors_round_trip_exact() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("neighbors.tsv");
    let mats = [rand_mat(4, 9, 5), rand_mat(5, 9, 7)];
    let tags = vec!["image".to_string(), "text".to_string()];
    let neighbors: Vec<_> = mats.iter().map(|m| topn_cosine(m, 3)).collect();
    write_neighbors(&p, &tags, &neighbors).unwrap();
    let (rtags, rn) = read_neighbors(&p, 9).unwrap();
    assert_eq!(rtags, tags);
    for (a, b) in neighbors.iter().zip(&rn) {
        assert_eq!(a.n, b.n);
        assert_eq!(a.clamped, b.clamped);
        assert_eq!(a.lists, b.lists); // exact f32 similarity round trip
    }
    // the rebuilt lists must produce the identical graph hash
    let store = emmkgr_core::datastore::FeatureStore::new(
        tags,
        mats.to_vec(),
        (0..9).map(|i| format!("i{i}")).collect(),
    )
    .unwrap();
    let g1 = emmkgr_core::graph::assemble_variant(&store, &neighbors, None, Variant::Original);
    let g2 = emmkgr_core::graph::assemble_variant(&store, &rn, None, Variant::Original);
    assert_eq!(graph_hash(&g1), graph_hash(&g2));
}

#[test]
fn queries_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("queries.jsonl");
    let qs = vec![
        Query {
            query_id: "q1".to_string(),
            modality: "image".to_string(),
            vector: vec![0.25, -1.5, 3.0],
            relevant_items: vec!["a".to_string(), "b".to_string()],
        },
        Query {
            query_id: "q2".to_string(),
            modality: "text".to_string(),
            vector: vec![1.0],
            relevant_items: vec![],
        },
    ];
    write_queries(&p, &qs).unwrap();
    let back = read_queries(&p).unwrap();
    assert_eq!(back.len(), 2);
    for (a, b) in qs.iter().zip(&back) {
        assert_eq!(a.query_id, b.query_id);
        assert_eq!(a.modality, b.modality);
        assert_eq!(a.vector, b.vector);
        assert_eq!(a.relevant_items, b.relevant_items);
    }
}
