//! Subcommand implementations. Exit codes: 0 success, 2 usage/input,
//! 3 numeric failure, 4 artifact mismatch.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::Rng;
use serde_json::json;

use emmkgr_core::datastore::{generate_synthetic, FeatureStore, InteractionData, Split, SynthSpec};
use emmkgr_core::evaluator::{cohesion, kmeans, map_at_k, ndcg_at_k, recall_at_k};
use emmkgr_core::graph::{MMGraph, Variant};
use emmkgr_core::linalg::Mat;
use emmkgr_core::model::ParamSet;
use emmkgr_core::recommender::recommend;
use emmkgr_core::rng::{stream_rng, Stream};
use emmkgr_core::search::{encode_query, search_baseline, search_topn, Query};
use emmkgr_core::trainer::{
    forward, gradient_check, train, ForwardOut, TrainContext, TrainError,
};

use crate::config::RunConfig;
use crate::error::{AppError, Result};
use crate::io;
use crate::io::checkpoint::Checkpoint;
use crate::manifest::ManifestBuilder;
use crate::pipeline;

#[derive(Parser)]
#[command(
    name = "emmkgr",
    version,
    about = "Multimodal knowledge-graph recommendation and search pipeline"
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a planted-cluster synthetic dataset directory.
    Synth(SynthArgs),
    /// Compute kNN neighbor lists and the graph fingerprint.
    BuildGraph(BuildGraphArgs),
    /// Train the model and write the best checkpoint.
    Train(TrainArgs),
    /// Evaluate top-K recommendation on the held-out split.
    EvalRec(EvalRecArgs),
    /// Rank items for a query file.
    Search(SearchArgs),
    /// Evaluate search ranking against query relevance labels.
    EvalSearch(SearchArgs),
    /// Cluster item embeddings and report cohesion per source.
    Cluster(ClusterArgs),
    /// Export item embeddings and cluster labels for external plotting.
    Export(ClusterArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 300)]
    items: usize,
    #[arg(long, default_value_t = 200)]
    users: usize,
    #[arg(long, default_value_t = 2)]
    types: usize,
    #[arg(long, default_value_t = 32)]
    feat_dim: usize,
    #[arg(long, default_value_t = 6)]
    clusters: usize,
    #[arg(long, default_value_t = 0.1)]
    noise: f32,
    #[arg(long, default_value_t = 20)]
    interactions_per_user: usize,
    #[arg(long, default_value_t = 0.9)]
    cluster_pref: f64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Fine-grained queries (one relevant item each).
    #[arg(long, default_value_t = 20)]
    fine_queries: usize,
    /// Coarse-grained queries (one planted cluster as relevant set each).
    #[arg(long, default_value_t = 5)]
    coarse_queries: usize,
}

#[derive(Args)]
struct BuildGraphArgs {
    /// Dataset directory.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 10)]
    knn: usize,
    #[arg(long, default_value = "original")]
    variant: String,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Zero all modality features before building (ablation input).
    #[arg(long)]
    zero_modalities: bool,
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    /// Graph directory produced by build-graph.
    #[arg(long)]
    graph: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 64)]
    dim: usize,
    #[arg(long, default_value_t = 2)]
    layers: usize,
    #[arg(long, default_value_t = 1.0)]
    lambda_kg: f64,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 1e-4)]
    weight_decay: f64,
    #[arg(long, default_value_t = 1024)]
    bpr_batch: usize,
    #[arg(long, default_value_t = 1024)]
    kg_batch: usize,
    #[arg(long, default_value_t = 200)]
    epochs: usize,
    #[arg(long, default_value_t = 10)]
    patience: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Validation Recall cutoff for early stopping.
    #[arg(long, default_value_t = 20)]
    eval_k: usize,
    #[arg(long, default_value = "original")]
    variant: String,
    /// Interaction-only mode: no multimodal branch, no KG loss.
    #[arg(long)]
    baseline: bool,
    #[arg(long)]
    separate_item_tables: bool,
    /// Zero all modality features (with --lambda-kg 0 this reduces to
    /// the interaction-only baseline and is trained as such).
    #[arg(long)]
    zero_modalities: bool,
    /// Run the finite-difference gradient check instead of training.
    #[arg(long)]
    grad_check: bool,
    #[arg(long)]
    allow_fingerprint_mismatch: bool,
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct EvalRecArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    graph: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Cutoffs, repeatable.
    #[arg(long = "k", default_values_t = [10usize, 20])]
    ks: Vec<usize>,
    #[arg(long, default_value = "test")]
    split: String,
    /// Score with interaction-only embeddings even for a full model.
    #[arg(long)]
    baseline_scoring: bool,
    #[arg(long)]
    allow_fingerprint_mismatch: bool,
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct SearchArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    graph: Option<PathBuf>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Query file; defaults to queries.jsonl in the dataset directory.
    #[arg(long)]
    queries: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Ranked list length per query.
    #[arg(long, default_value_t = 10)]
    n: usize,
    /// Cutoffs for eval-search metrics, repeatable.
    #[arg(long = "k", default_values_t = [10usize])]
    ks: Vec<usize>,
    /// Raw single-modality cosine baseline (no checkpoint needed).
    #[arg(long)]
    raw_baseline: bool,
    #[arg(long)]
    allow_fingerprint_mismatch: bool,
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct ClusterArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    graph: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 50)]
    clusters: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long)]
    allow_fingerprint_mismatch: bool,
    #[arg(long)]
    threads: Option<usize>,
}

/// Resolved worker cap: flag, then EMMKGR_THREADS, then available cores.
/// Recorded for the manifest; all computations are deterministic regardless.
fn resolve_threads(flag: Option<usize>) -> usize {
    flag.or_else(|| {
        std::env::var("EMMKGR_THREADS")
            .ok()
            .and_then(|v| v.parse().ok())
    })
    .unwrap_or_else(|| {
        std::thread::available_parallelism()
            .map(|n| n.get())
            .unwrap_or(1)
    })
}

pub fn run() -> i32 {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(a) => cmd_synth(&a),
        Command::BuildGraph(a) => cmd_build_graph(&a),
        Command::Train(a) => cmd_train(&a),
        Command::EvalRec(a) => cmd_eval_rec(&a),
        Command::Search(a) => cmd_search(&a, false),
        Command::EvalSearch(a) => cmd_search(&a, true),
        Command::Cluster(a) => cmd_cluster(&a, false),
        Command::Export(a) => cmd_cluster(&a, true),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn cmd_synth(a: &SynthArgs) -> Result<()> {
    let spec = SynthSpec {
        n_items: a.items,
        n_users: a.users,
        n_types: a.types,
        feat_dim: a.feat_dim,
        n_clusters: a.clusters,
        noise: a.noise,
        interactions_per_user: a.interactions_per_user,
        cluster_pref: a.cluster_pref,
        seed: a.seed,
    };
    if spec.n_items == 0 || spec.n_users == 0 || spec.n_types == 0 || spec.feat_dim == 0 {
        return Err(AppError::input("sizes must be positive"));
    }
    let flags = json!({
        "out": a.out.display().to_string(),
        "items": a.items, "users": a.users, "types": a.types,
        "feat_dim": a.feat_dim, "clusters": a.clusters, "noise": a.noise,
        "interactions_per_user": a.interactions_per_user,
        "cluster_pref": a.cluster_pref, "seed": a.seed,
        "fine_queries": a.fine_queries, "coarse_queries": a.coarse_queries,
    });
    let mut mb = ManifestBuilder::new("synth", flags, a.seed);
    let (store, data, truth) = generate_synthetic(&spec);

    // Queries re-use the planted structure: fine = one item's noisy modality
    // vector, coarse = a centroid with its whole cluster as relevant set.
    let mut rng = stream_rng(a.seed, Stream::Sampling);
    let mut queries = Vec::new();
    for q in 0..a.fine_queries {
        let item = rng.random_range(0..spec.n_items);
        let t = rng.random_range(0..spec.n_types);
        let vector: Vec<f32> = store.matrices[t]
            .row(item)
            .iter()
            .map(|&v| v + 0.05 * (rng.random::<f32>() - 0.5))
            .collect();
        queries.push(Query {
            query_id: format!("fine{q:04}"),
            modality: store.modality_types[t].clone(),
            vector,
            relevant_items: vec![store.item_ids[item].clone()],
        });
    }
    for q in 0..a.coarse_queries {
        let cl = rng.random_range(0..spec.n_clusters);
        let t = rng.random_range(0..spec.n_types);
        let relevant: Vec<String> = truth
            .item_cluster
            .iter()
            .enumerate()
            .filter(|&(_, &c)| c == cl)
            .map(|(j, _)| store.item_ids[j].clone())
            .collect();
        queries.push(Query {
            query_id: format!("coarse{q:04}"),
            modality: store.modality_types[t].clone(),
            vector: truth.centroids[t].row(cl).to_vec(),
            relevant_items: relevant,
        });
    }

    pipeline::save_dataset(&a.out, &store, &data, Some(&truth), Some(&queries), &mut mb)?;
    mb.write(&a.out)?;
    println!(
        "wrote synthetic dataset: {} items, {} users, {} modalities, {} interactions, {} queries",
        store.n_items(),
        data.n_users(),
        store.n_types(),
        data.pairs.len(),
        queries.len()
    );
    Ok(())
}

fn parse_variant(s: &str) -> Result<Variant> {
    Variant::parse(s).ok_or_else(|| {
        AppError::input(format!(
            "unknown variant '{s}' (expected original, interaction, inter_modal, item_item)"
        ))
    })
}

fn cmd_build_graph(a: &BuildGraphArgs) -> Result<()> {
    let variant = parse_variant(&a.variant)?;
    let threads = resolve_threads(a.threads);
    let flags = json!({
        "data": a.data.display().to_string(),
        "out": a.out.display().to_string(),
        "knn": a.knn, "variant": a.variant, "seed": a.seed,
        "zero_modalities": a.zero_modalities, "threads": threads,
    });
    let mut mb = ManifestBuilder::new("build-graph", flags, a.seed);
    let mut store = pipeline::load_store(&a.data, &mut mb)?;
    if a.zero_modalities {
        store.zero_modalities();
    }
    let interactions = if variant == Variant::Interaction {
        Some(pipeline::load_split_interactions(&a.data, &store, a.seed, &mut mb)?)
    } else {
        None
    };
    let neighbors = pipeline::build_neighbors(&store, a.knn);
    if neighbors.iter().any(|nl| nl.clamped) {
        eprintln!(
            "warning: requested {} neighbors exceeds catalog size; clamped to {}",
            a.knn,
            store.n_items() - 1
        );
    }
    let graph = emmkgr_core::graph::assemble_variant(
        &store,
        &neighbors,
        interactions.as_ref(),
        variant,
    );
    std::fs::create_dir_all(&a.out)?;
    let npath = a.out.join("neighbors.tsv");
    io::graphdir::write_neighbors(&npath, &store.modality_types, &neighbors)?;
    mb.record_output(&npath);
    let fpath = a.out.join("fingerprint.txt");
    io::graphdir::write_fingerprint(&fpath, &graph)?;
    mb.record_output(&fpath);
    mb.write(&a.out)?;
    println!(
        "graph: variant={} nodes={} hash={}",
        graph.variant.tag(),
        graph.n_nodes(),
        io::graphdir::graph_hash(&graph)
    );
    for (name, count) in graph.edge_counts() {
        println!("  relation {name}: {count} edges");
    }
    Ok(())
}

fn train_run_config(a: &TrainArgs) -> RunConfig {
    // --lambda-kg 0 with zeroed modalities carries no multimodal signal the
    // ranking loss can use beyond projection biases; it is trained in
    // interaction-only mode so the reduction is exact.
    let baseline = a.baseline || (a.lambda_kg == 0.0 && a.zero_modalities);
    RunConfig {
        dim: a.dim,
        layers: a.layers,
        knn: 0, // filled from the graph artifact below
        lambda_kg: a.lambda_kg,
        learning_rate: a.lr,
        weight_decay: a.weight_decay,
        bpr_batch: a.bpr_batch,
        kg_batch: a.kg_batch,
        epochs: a.epochs,
        patience: a.patience,
        seed: a.seed,
        variant: a.variant.clone(),
        baseline,
        separate_item_tables: a.separate_item_tables,
        zero_modalities: a.zero_modalities,
        eval_k: a.eval_k,
        best_epoch: None,
        best_val_recall: None,
    }
}

fn cmd_train(a: &TrainArgs) -> Result<()> {
    let variant = parse_variant(&a.variant)?;
    let mut config = train_run_config(a);
    let threads = resolve_threads(a.threads);
    let flags = json!({
        "data": a.data.display().to_string(),
        "graph": a.graph.display().to_string(),
        "out": a.out.display().to_string(),
        "dim": a.dim, "layers": a.layers, "lambda_kg": a.lambda_kg,
        "lr": a.lr, "weight_decay": a.weight_decay,
        "bpr_batch": a.bpr_batch, "kg_batch": a.kg_batch,
        "epochs": a.epochs, "patience": a.patience, "seed": a.seed,
        "eval_k": a.eval_k, "variant": a.variant,
        "baseline": config.baseline,
        "separate_item_tables": a.separate_item_tables,
        "zero_modalities": a.zero_modalities, "grad_check": a.grad_check,
        "allow_fingerprint_mismatch": a.allow_fingerprint_mismatch,
        "threads": threads,
    });
    let mut mb = ManifestBuilder::new("train", flags, a.seed);
    let mut store = pipeline::load_store(&a.data, &mut mb)?;
    let interactions =
        pipeline::load_split_interactions(&a.data, &store, a.seed, &mut mb)?;
    if a.zero_modalities {
        store.zero_modalities();
    }
    let graph = pipeline::rebuild_graph(
        &a.graph,
        &store,
        Some(&interactions),
        variant,
        a.allow_fingerprint_mismatch,
        &mut mb,
    )?;
    config.knn = graph.knn_n;
    let tcfg = config.to_train_config()?;

    if a.grad_check {
        let groups = gradient_check(&store, &graph, &interactions, &tcfg)
            .map_err(train_error)?;
        let mut ok = true;
        for g in &groups {
            let frac = g.within_tol as f64 / g.checked.max(1) as f64;
            let pass = frac >= 0.99 && g.max_rel_err <= 1e-2;
            ok &= pass;
            println!(
                "grad-check {}: {}/{} within tolerance, max relative error {:.3e} [{}]",
                g.name,
                g.within_tol,
                g.checked,
                g.max_rel_err,
                if pass { "ok" } else { "FAIL" }
            );
        }
        if !ok {
            return Err(AppError::numeric(
                "finite-difference gradient check failed",
            ));
        }
        std::fs::create_dir_all(&a.out)?;
        mb.write(&a.out)?;
        return Ok(());
    }

    let mut epoch_lines = String::new();
    let (params, report) = train::<f32>(&store, &graph, &interactions, &tcfg, |stats| {
        let line = json!({
            "epoch": stats.epoch,
            "loss_total": stats.loss_total,
            "loss_bpr": stats.loss_bpr,
            "loss_kg": stats.loss_kg,
            "val_recall": stats.val_recall,
        })
        .to_string();
        println!("{line}");
        epoch_lines.push_str(&line);
        epoch_lines.push('\n');
    })
    .map_err(train_error)?;

    config.best_epoch = Some(report.best_epoch);
    config.best_val_recall = Some(report.best_val_recall);
    std::fs::create_dir_all(&a.out)?;
    let rpath = a.out.join("training_report.jsonl");
    io::features::atomic_write(&rpath, epoch_lines.as_bytes())?;
    mb.record_output(&rpath);
    let ckpt = Checkpoint::from_params(config, io::graphdir::graph_hash(&graph), &params);
    let cpath = a.out.join("checkpoint.emkg");
    io::checkpoint::write_checkpoint(&cpath, &ckpt)?;
    mb.record_output(&cpath);
    mb.write(&a.out)?;
    println!(
        "best epoch {} with validation Recall@{} = {:.4}",
        report.best_epoch, a.eval_k, report.best_val_recall
    );
    Ok(())
}

fn train_error(e: TrainError) -> AppError {
    match e {
        TrainError::NonFiniteGradient(_) => AppError::numeric(e.to_string()),
        _ => AppError::input(e.to_string()),
    }
}

/// Everything the post-training stages need, loaded and fingerprint-checked.
struct Stage {
    store: FeatureStore,
    interactions: InteractionData,
    graph: MMGraph,
    config: RunConfig,
    params: ParamSet<f32>,
    ctx: TrainContext<f32>,
    fwd: ForwardOut<f32>,
}

fn load_stage(
    data: &Path,
    graph_dir: &Path,
    ckpt_path: &Path,
    allow_mismatch: bool,
    mb: &mut ManifestBuilder,
) -> Result<Stage> {
    let ckpt = io::checkpoint::read_checkpoint(ckpt_path)?;
    mb.record_input(ckpt_path)?;
    let config = ckpt.config.clone();
    let variant = config.variant()?;
    let mut store = pipeline::load_store(data, mb)?;
    let interactions =
        pipeline::load_split_interactions(data, &store, config.seed, mb)?;
    if config.zero_modalities {
        store.zero_modalities();
    }
    let graph = pipeline::rebuild_graph(
        graph_dir,
        &store,
        Some(&interactions),
        variant,
        allow_mismatch,
        mb,
    )?;
    let live_hash = io::graphdir::graph_hash(&graph);
    if live_hash != ckpt.graph_hash {
        let msg = format!(
            "checkpoint was trained on graph {} but the rebuilt graph is {live_hash}",
            ckpt.graph_hash
        );
        if allow_mismatch {
            eprintln!("warning: {msg} (continuing, mismatch override set)");
        } else {
            return Err(AppError::mismatch(msg));
        }
    }
    let params = ckpt.to_params()?;
    if params.item_emb.rows != store.n_items() || params.user_emb.rows != interactions.n_users()
    {
        return Err(AppError::mismatch(format!(
            "checkpoint shapes ({} items, {} users) do not match dataset ({} items, {} users)",
            params.item_emb.rows,
            params.user_emb.rows,
            store.n_items(),
            interactions.n_users()
        )));
    }
    let tcfg = config.to_train_config()?;
    let ctx = TrainContext::<f32>::build(&store, &graph, &interactions)
        .map_err(train_error)?;
    let fwd = forward(&params, &ctx, &tcfg);
    Ok(Stage {
        store,
        interactions,
        graph,
        config,
        params,
        ctx,
        fwd,
    })
}

struct MetricAccumulator {
    ks: Vec<usize>,
    recall: Vec<f64>,
    ndcg: Vec<f64>,
    map: Vec<f64>,
    count: usize,
    skipped: usize,
}

impl MetricAccumulator {
    fn new(ks: &[usize]) -> Self {
        MetricAccumulator {
            ks: ks.to_vec(),
            recall: vec![0.0; ks.len()],
            ndcg: vec![0.0; ks.len()],
            map: vec![0.0; ks.len()],
            count: 0,
            skipped: 0,
        }
    }

    fn add(&mut self, ranked: &[u32], relevant: &BTreeSet<u32>) {
        if relevant.is_empty() {
            self.skipped += 1;
            return;
        }
        for (i, &k) in self.ks.iter().enumerate() {
            self.recall[i] += recall_at_k(ranked, relevant, k);
            self.ndcg[i] += ndcg_at_k(ranked, relevant, k);
            self.map[i] += map_at_k(ranked, relevant, k);
        }
        self.count += 1;
    }

    fn report(&self, label: &str) -> serde_json::Value {
        let mut per_k = serde_json::Map::new();
        for (i, &k) in self.ks.iter().enumerate() {
            let denom = self.count.max(1) as f64;
            per_k.insert(
                k.to_string(),
                json!({
                    "recall": self.recall[i] / denom,
                    "ndcg": self.ndcg[i] / denom,
                    "map": self.map[i] / denom,
                }),
            );
        }
        json!({
            label: self.count,
            "skipped_empty_relevance": self.skipped,
            "per_k": per_k,
        })
    }

    fn print_table(&self) {
        println!("{:>6} {:>10} {:>10} {:>10}", "K", "Recall", "NDCG", "MAP");
        let denom = self.count.max(1) as f64;
        for (i, &k) in self.ks.iter().enumerate() {
            println!(
                "{:>6} {:>10.4} {:>10.4} {:>10.4}",
                k,
                self.recall[i] / denom,
                self.ndcg[i] / denom,
                self.map[i] / denom
            );
        }
    }
}

fn parse_split(s: &str) -> Result<Split> {
    match s {
        "test" => Ok(Split::Test),
        "validation" | "val" => Ok(Split::Validation),
        _ => Err(AppError::input(format!(
            "unknown split '{s}' (expected test or validation)"
        ))),
    }
}

fn cmd_eval_rec(a: &EvalRecArgs) -> Result<()> {
    if a.ks.is_empty() {
        return Err(AppError::input("at least one --k cutoff is required"));
    }
    let split = parse_split(&a.split)?;
    let threads = resolve_threads(a.threads);
    let flags = json!({
        "data": a.data.display().to_string(),
        "graph": a.graph.display().to_string(),
        "checkpoint": a.checkpoint.display().to_string(),
        "out": a.out.display().to_string(),
        "k": a.ks, "split": a.split,
        "baseline_scoring": a.baseline_scoring,
        "allow_fingerprint_mismatch": a.allow_fingerprint_mismatch,
        "threads": threads,
    });
    let mut mb = ManifestBuilder::new("eval-rec", flags, 0);
    let stage = load_stage(
        &a.data,
        &a.graph,
        &a.checkpoint,
        a.allow_fingerprint_mismatch,
        &mut mb,
    )?;

    let item_vecs = if a.baseline_scoring {
        stage.fwd.h_in.block(stage.ctx.n_users, stage.ctx.n_items)
    } else {
        stage.fwd.h_item.clone()
    };
    let users_view = stage.fwd.h_in.block(0, stage.ctx.n_users);
    let k_max = *a.ks.iter().max().unwrap();

    let mut relevant_by_user = vec![BTreeSet::new(); stage.ctx.n_users];
    for (u, i) in stage.interactions.pairs_in(split) {
        relevant_by_user[u as usize].insert(i);
    }

    let mut acc = MetricAccumulator::new(&a.ks);
    let mut rec_tsv = String::new();
    for user in 0..stage.ctx.n_users {
        let relevant = &relevant_by_user[user];
        if relevant.is_empty() {
            acc.skipped += 1;
            continue;
        }
        let ranked = recommend(
            user as u32,
            k_max,
            &users_view,
            &item_vecs,
            &stage.ctx.train_by_user[user],
        );
        let ids: Vec<u32> = ranked.items.iter().map(|&(i, _)| i).collect();
        acc.add(&ids, relevant);
        for (rank, &(item, score)) in ranked.items.iter().enumerate() {
            rec_tsv.push_str(&format!(
                "{}\t{}\t{}\t{}\n",
                stage.interactions.user_ids[user],
                rank + 1,
                stage.store.item_ids[item as usize],
                score
            ));
        }
    }

    std::fs::create_dir_all(&a.out)?;
    let rpath = a.out.join("recommendations.tsv");
    io::features::atomic_write(&rpath, rec_tsv.as_bytes())?;
    mb.record_output(&rpath);
    let mut report = acc.report("users_evaluated");
    report["split"] = json!(a.split);
    let mpath = a.out.join("metrics_rec.json");
    let mut body = serde_json::to_string_pretty(&report)?;
    body.push('\n');
    io::features::atomic_write(&mpath, body.as_bytes())?;
    mb.record_output(&mpath);
    mb.write(&a.out)?;
    println!(
        "recommendation metrics on {} split ({} users evaluated, {} skipped):",
        a.split, acc.count, acc.skipped
    );
    acc.print_table();
    Ok(())
}

fn cmd_search(a: &SearchArgs, evaluate: bool) -> Result<()> {
    let subcommand = if evaluate { "eval-search" } else { "search" };
    let qpath = a
        .queries
        .clone()
        .unwrap_or_else(|| pipeline::queries_path(&a.data));
    let threads = resolve_threads(a.threads);
    let flags = json!({
        "data": a.data.display().to_string(),
        "graph": a.graph.as_ref().map(|p| p.display().to_string()),
        "checkpoint": a.checkpoint.as_ref().map(|p| p.display().to_string()),
        "queries": qpath.display().to_string(),
        "out": a.out.display().to_string(),
        "n": a.n, "k": a.ks, "raw_baseline": a.raw_baseline,
        "allow_fingerprint_mismatch": a.allow_fingerprint_mismatch,
        "threads": threads,
    });
    let mut mb = ManifestBuilder::new(subcommand, flags, 0);

    let queries = io::queries::read_queries(&qpath)?;
    mb.record_input(&qpath)?;

    // Resolve the ranking backend: learned multimodal embeddings, or the raw
    // best-single-modality cosine baseline.
    enum Backend {
        Learned(Box<Stage>, Mat<f32>),
        Raw(FeatureStore),
    }
    let backend = if a.raw_baseline {
        let store = pipeline::load_store(&a.data, &mut mb)?;
        Backend::Raw(store)
    } else {
        let graph_dir = a.graph.as_ref().ok_or_else(|| {
            AppError::input("--graph is required unless --raw-baseline is set")
        })?;
        let ckpt = a.checkpoint.as_ref().ok_or_else(|| {
            AppError::input("--checkpoint is required unless --raw-baseline is set")
        })?;
        let stage =
            load_stage(&a.data, graph_dir, ckpt, a.allow_fingerprint_mismatch, &mut mb)?;
        if stage.config.baseline {
            return Err(AppError::input(
                "checkpoint was trained in interaction-only mode and has no multimodal embeddings",
            ));
        }
        let h_mm_items = stage.fwd.h_mm.block(0, stage.ctx.n_items);
        Backend::Learned(Box::new(stage), h_mm_items)
    };
    let store = match &backend {
        Backend::Learned(stage, _) => &stage.store,
        Backend::Raw(s) => s,
    };

    let n_out = a.n.max(a.ks.iter().copied().max().unwrap_or(0));
    let mut results_tsv = String::new();
    let mut acc = MetricAccumulator::new(&a.ks);
    let mut clamped_any = false;
    for q in &queries {
        let (ranked, clamped) = match &backend {
            Backend::Learned(stage, h_items) => {
                let hq = encode_query(&q.vector, &q.modality, store, &stage.params)
                    .map_err(|e| AppError::input(format!("query {}: {e}", q.query_id)))?;
                search_topn(&hq, h_items, n_out)
            }
            Backend::Raw(s) => {
                if s.type_index(&q.modality).is_none() {
                    return Err(AppError::input(format!(
                        "query {}: unknown modality type: {}",
                        q.query_id, q.modality
                    )));
                }
                search_baseline(&q.vector, s, n_out)
            }
        };
        clamped_any |= clamped;
        for (rank, &(item, sim)) in ranked.iter().take(a.n).enumerate() {
            results_tsv.push_str(&format!(
                "{}\t{}\t{}\t{}\n",
                q.query_id,
                rank + 1,
                store.item_ids[item as usize],
                sim
            ));
        }
        if evaluate {
            let mut relevant = BTreeSet::new();
            for id in &q.relevant_items {
                let idx = store.item_index(id).ok_or_else(|| {
                    AppError::input(format!(
                        "query {}: relevant item '{id}' not in catalog",
                        q.query_id
                    ))
                })?;
                relevant.insert(idx as u32);
            }
            if relevant.is_empty() {
                eprintln!("query {}: no relevance labels, skipped", q.query_id);
            }
            let ids: Vec<u32> = ranked.iter().map(|&(i, _)| i).collect();
            acc.add(&ids, &relevant);
        }
    }
    if clamped_any {
        eprintln!("warning: requested list length exceeds catalog size; clamped");
    }

    std::fs::create_dir_all(&a.out)?;
    let rpath = a.out.join("search_results.tsv");
    io::features::atomic_write(&rpath, results_tsv.as_bytes())?;
    mb.record_output(&rpath);
    if evaluate {
        let report = acc.report("queries_evaluated");
        let mpath = a.out.join("metrics_search.json");
        let mut body = serde_json::to_string_pretty(&report)?;
        body.push('\n');
        io::features::atomic_write(&mpath, body.as_bytes())?;
        mb.record_output(&mpath);
        println!(
            "search metrics ({} queries evaluated, {} skipped):",
            acc.count, acc.skipped
        );
        acc.print_table();
    } else {
        println!("ranked {} queries", queries.len());
    }
    mb.write(&a.out)?;
    Ok(())
}

fn cmd_cluster(a: &ClusterArgs, export: bool) -> Result<()> {
    let subcommand = if export { "export" } else { "cluster" };
    let threads = resolve_threads(a.threads);
    let flags = json!({
        "data": a.data.display().to_string(),
        "graph": a.graph.display().to_string(),
        "checkpoint": a.checkpoint.display().to_string(),
        "out": a.out.display().to_string(),
        "clusters": a.clusters, "seed": a.seed,
        "allow_fingerprint_mismatch": a.allow_fingerprint_mismatch,
        "threads": threads,
    });
    let mut mb = ManifestBuilder::new(subcommand, flags, a.seed);
    let stage = load_stage(
        &a.data,
        &a.graph,
        &a.checkpoint,
        a.allow_fingerprint_mismatch,
        &mut mb,
    )?;

    let unified = &stage.fwd.h_item;
    let assignments = kmeans(unified, a.clusters, a.seed)
        .map_err(|e| AppError::input(e.to_string()))?;

    std::fs::create_dir_all(&a.out)?;
    let mut labels_tsv = String::new();
    for (j, &c) in assignments.iter().enumerate() {
        labels_tsv.push_str(&format!("{}\t{c}\n", stage.store.item_ids[j]));
    }
    let lpath = a.out.join("cluster_labels.tsv");
    io::features::atomic_write(&lpath, labels_tsv.as_bytes())?;
    mb.record_output(&lpath);

    if export {
        let epath = a.out.join("item_embeddings.emfm");
        io::features::write_features(&epath, unified)?;
        mb.record_output(&epath);
        if stage.fwd.h_mm.rows > 0 {
            let mm = stage.fwd.h_mm.block(0, stage.ctx.n_items);
            let mpath = a.out.join("item_embeddings_mm.emfm");
            io::features::write_features(&mpath, &mm)?;
            mb.record_output(&mpath);
        }
        mb.write(&a.out)?;
        println!(
            "exported {}x{} item embeddings and {} cluster labels",
            unified.rows, unified.cols, assignments.len()
        );
        return Ok(());
    }

    // Cohesion per source: unified embeddings vs each raw modality matrix,
    // under the same clustering.
    let mut sources = serde_json::Map::new();
    let coh = cohesion(unified, &assignments, a.seed);
    sources.insert(
        "unified".to_string(),
        json!({"intra": coh.intra, "inter": coh.inter, "gap": coh.gap}),
    );
    println!(
        "{:>12} {:>10} {:>10} {:>10}",
        "source", "intra", "inter", "gap"
    );
    let fmt = |v: Option<f64>| match v {
        Some(x) => format!("{x:.4}"),
        None => "n/a".to_string(),
    };
    println!(
        "{:>12} {:>10} {:>10} {:>10}",
        "unified",
        fmt(coh.intra),
        fmt(coh.inter),
        fmt(coh.gap)
    );
    for (tag, m) in stage
        .store
        .modality_types
        .iter()
        .zip(&stage.store.matrices)
    {
        let c = cohesion(m, &assignments, a.seed);
        sources.insert(
            tag.clone(),
            json!({"intra": c.intra, "inter": c.inter, "gap": c.gap}),
        );
        println!(
            "{:>12} {:>10} {:>10} {:>10}",
            tag,
            fmt(c.intra),
            fmt(c.inter),
            fmt(c.gap)
        );
    }
    let report = json!({"clusters": a.clusters, "sources": sources});
    let cpath = a.out.join("cohesion.json");
    let mut body = serde_json::to_string_pretty(&report)?;
    body.push('\n');
    io::features::atomic_write(&cpath, body.as_bytes())?;
    mb.record_output(&cpath);
    mb.write(&a.out)?;
    Ok(())
}

// keep the unused-graph-field warning away: the rebuilt graph is retained so
// future stages can inspect it without re-reading artifacts
impl Stage {
    #[allow(dead_code)]
    fn graph(&self) -> &MMGraph {
        &self.graph
    }
}
