//! Tab-separated interaction files: "user_id<TAB>item_id[<TAB>timestamp]".

use std::fs;
use std::path::Path;

use emmkgr_core::datastore::{FeatureStore, InteractionData};

use crate::error::{AppError, Result};

pub fn read_interaction_records(path: &Path) -> Result<Vec<(String, String)>> {
    let text = fs::read_to_string(path)
        .map_err(|e| AppError::input(format!("{}: {e}", path.display())))?;
    let mut records = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split('\t');
        let user = parts.next().unwrap_or_default();
        let item = parts.next().ok_or_else(|| {
            AppError::input(format!(
                "{}:{}: expected 'user<TAB>item', got '{line}'",
                path.display(),
                lineno + 1
            ))
        })?;
        // optional trailing timestamp is ignored
        records.push((user.to_string(), item.to_string()));
    }
    Ok(records)
}

pub fn load_interactions(path: &Path, store: &FeatureStore) -> Result<InteractionData> {
    let records = read_interaction_records(path)?;
    InteractionData::from_records(&records, store)
        .map_err(|e| AppError::input(format!("{}: {e}", path.display())))
}

pub fn write_interactions(path: &Path, data: &InteractionData, item_ids: &[String]) -> Result<()> {
    let mut buf = String::new();
    for &(u, i) in &data.pairs {
        buf.push_str(&data.user_ids[u as usize]);
        buf.push('\t');
        buf.push_str(&item_ids[i as usize]);
        buf.push('\n');
    }
    super::features::atomic_write(path, buf.as_bytes())
}
