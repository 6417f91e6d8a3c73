//! On-disk graph artifacts: the structure fingerprint and the serialized
//! per-modality neighbor lists that let later stages rebuild the exact graph.

use std::fs;
use std::path::Path;

use emmkgr_core::graph::MMGraph;
use emmkgr_core::knn::NeighborList;
use sha2::{Digest, Sha256};

use crate::error::{AppError, Result};

/// Hex SHA-256 over the canonical text form of the graph structure.
pub fn graph_hash(graph: &MMGraph) -> String {
    let digest = Sha256::digest(graph.canonical_description().as_bytes());
    hex_of(&digest)
}

fn hex_of(bytes: &[u8]) -> String {
    let mut s = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        s.push_str(&format!("{b:02x}"));
    }
    s
}

/// Human-readable summary plus the hash. The hash line is authoritative.
pub fn write_fingerprint(path: &Path, graph: &MMGraph) -> Result<()> {
    let mut buf = String::new();
    buf.push_str(&format!(
        "variant={} items={} types={} users={} knn={}\n",
        graph.variant.tag(),
        graph.n_items,
        graph.n_types,
        graph.n_users,
        graph.knn_n
    ));
    buf.push_str(&format!("nodes={}\n", graph.n_nodes()));
    for (name, count) in graph.edge_counts() {
        buf.push_str(&format!("relation\t{name}\t{count}\n"));
    }
    buf.push_str(&format!("sha256={}\n", graph_hash(graph)));
    super::features::atomic_write(path, buf.as_bytes())
}

pub fn read_fingerprint_hash(path: &Path) -> Result<String> {
    let text = fs::read_to_string(path)
        .map_err(|e| AppError::input(format!("{}: {e}", path.display())))?;
    for line in text.lines() {
        if let Some(h) = line.strip_prefix("sha256=") {
            return Ok(h.trim().to_string());
        }
    }
    Err(AppError::input(format!(
        "{}: no sha256 line found",
        path.display()
    )))
}

/// Checks a live graph against a stored fingerprint file.
pub fn verify_fingerprint(path: &Path, graph: &MMGraph) -> Result<()> {
    let stored = read_fingerprint_hash(path)?;
    let live = graph_hash(graph);
    if stored != live {
        return Err(AppError::mismatch(format!(
            "graph fingerprint mismatch: artifact {} has {stored}, rebuilt graph has {live}",
            path.display()
        )));
    }
    Ok(())
}

/// Neighbor lists for all modality types in one TSV file. Each block starts
/// with "# modality <idx> <tag> n=<n> clamped=<0|1>", followed by
/// "row<TAB>neighbor<TAB>similarity" lines. f32 similarities round-trip
/// exactly through the shortest decimal representation.
pub fn write_neighbors(
    path: &Path,
    tags: &[String],
    neighbors: &[NeighborList<f32>],
) -> Result<()> {
    assert_eq!(tags.len(), neighbors.len());
    let mut buf = String::new();
    for (k, (tag, nl)) in tags.iter().zip(neighbors).enumerate() {
        buf.push_str(&format!(
            "# modality {k} {tag} n={} clamped={}\n",
            nl.n,
            u8::from(nl.clamped)
        ));
        for (row, list) in nl.lists.iter().enumerate() {
            for &(nb, sim) in list {
                buf.push_str(&format!("{row}\t{nb}\t{sim}\n"));
            }
        }
    }
    super::features::atomic_write(path, buf.as_bytes())
}

pub fn read_neighbors(path: &Path, n_items: usize) -> Result<(Vec<String>, Vec<NeighborList<f32>>)> {
    let text = fs::read_to_string(path)
        .map_err(|e| AppError::input(format!("{}: {e}", path.display())))?;
    let mut tags = Vec::new();
    let mut lists: Vec<NeighborList<f32>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let bad = |msg: &str| {
            AppError::input(format!("{}:{}: {msg}: '{line}'", path.display(), lineno + 1))
        };
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix("# modality ") {
            let parts: Vec<&str> = rest.split_whitespace().collect();
            if parts.len() != 4 {
                return Err(bad("malformed modality header"));
            }
            let idx: usize = parts[0].parse().map_err(|_| bad("bad modality index"))?;
            if idx != tags.len() {
                return Err(bad("modality blocks out of order"));
            }
            let n: usize = parts[2]
                .strip_prefix("n=")
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| bad("bad n field"))?;
            let clamped = match parts[3].strip_prefix("clamped=") {
                Some("0") => false,
                Some("1") => true,
                _ => return Err(bad("bad clamped field")),
            };
            tags.push(parts[1].to_string());
            lists.push(NeighborList {
                lists: vec![Vec::new(); n_items],
                n,
                clamped,
            });
        } else {
            let current = lists
                .last_mut()
                .ok_or_else(|| bad("data line before any modality header"))?;
            let mut cols = line.split('\t');
            let row: usize = cols
                .next()
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| bad("bad row index"))?;
            let nb: u32 = cols
                .next()
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| bad("bad neighbor index"))?;
            let sim: f32 = cols
                .next()
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| bad("bad similarity"))?;
            if row >= n_items || nb as usize >= n_items {
                return Err(bad("index out of range"));
            }
            current.lists[row].push((nb, sim));
        }
    }
    Ok((tags, lists))
}
