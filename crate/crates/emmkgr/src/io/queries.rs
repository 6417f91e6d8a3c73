//! Query files: one JSON object per line with fields
//! {"query_id", "modality", "vector", "relevant_items"}.

use std::fs;
use std::path::Path;

use emmkgr_core::search::Query;
use serde::{Deserialize, Serialize};

use crate::error::{AppError, Result};

#[derive(Debug, Serialize, Deserialize)]
struct QueryRecord {
    query_id: String,
    modality: String,
    vector: Vec<f32>,
    #[serde(default)]
    relevant_items: Vec<String>,
}

pub fn read_queries(path: &Path) -> Result<Vec<Query>> {
    let text = fs::read_to_string(path)
        .map_err(|e| AppError::input(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: QueryRecord = serde_json::from_str(line).map_err(|e| {
            AppError::input(format!("{}:{}: {e}", path.display(), lineno + 1))
        })?;
        out.push(Query {
            query_id: rec.query_id,
            modality: rec.modality,
            vector: rec.vector,
            relevant_items: rec.relevant_items,
        });
    }
    Ok(out)
}

pub fn write_queries(path: &Path, queries: &[Query]) -> Result<()> {
    let mut buf = String::new();
    for q in queries {
        let rec = QueryRecord {
            query_id: q.query_id.clone(),
            modality: q.modality.clone(),
            vector: q.vector.clone(),
            relevant_items: q.relevant_items.clone(),
        };
        buf.push_str(&serde_json::to_string(&rec)?);
        buf.push('\n');
    }
    super::features::atomic_write(path, buf.as_bytes())
}
