//! Feature-matrix file format and ID maps.
//!
//! Layout: magic "EMFM", u32 LE version (=1), u64 LE rows, u64 LE cols,
//! then rows×cols 32-bit IEEE-754 LE floats, row-major.

use std::fs;
use std::io::Write;
use std::path::Path;

use emmkgr_core::linalg::Mat;

use crate::error::{AppError, Result};

pub const FEATURE_MAGIC: &[u8; 4] = b"EMFM";
pub const FEATURE_VERSION: u32 = 1;

pub fn write_features(path: &Path, matrix: &Mat<f32>) -> Result<()> {
    let mut buf = Vec::with_capacity(24 + matrix.data.len() * 4);
    buf.extend_from_slice(FEATURE_MAGIC);
    buf.extend_from_slice(&FEATURE_VERSION.to_le_bytes());
    buf.extend_from_slice(&(matrix.rows as u64).to_le_bytes());
    buf.extend_from_slice(&(matrix.cols as u64).to_le_bytes());
    for v in &matrix.data {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    atomic_write(path, &buf)
}

pub fn read_feature_matrix(path: &Path) -> Result<Mat<f32>> {
    let bytes = fs::read(path)
        .map_err(|e| AppError::input(format!("{}: {e}", path.display())))?;
    if bytes.len() < 24 || &bytes[0..4] != FEATURE_MAGIC {
        return Err(AppError::input(format!(
            "{}: not a feature-matrix file (bad magic)",
            path.display()
        )));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != FEATURE_VERSION {
        return Err(AppError::input(format!(
            "{}: unsupported feature-file version {version}",
            path.display()
        )));
    }
    let rows = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let cols = u64::from_le_bytes(bytes[16..24].try_into().unwrap()) as usize;
    let expected = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| AppError::input("feature-file shape overflow"))?;
    let payload = &bytes[24..];
    if payload.len() != expected {
        return Err(AppError::input(format!(
            "{}: truncated payload, expected {} bytes for {}x{}, found {}",
            path.display(),
            expected,
            rows,
            cols,
            payload.len()
        )));
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(Mat::from_rows(rows, cols, data))
}

/// One identifier per line, line i ↔ row i. Duplicates are rejected.
pub fn read_id_map(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path)
        .map_err(|e| AppError::input(format!("{}: {e}", path.display())))?;
    let ids: Vec<String> = text.lines().map(|l| l.to_string()).collect();
    let mut seen = std::collections::HashSet::new();
    for id in &ids {
        if !seen.insert(id.as_str()) {
            return Err(AppError::input(format!(
                "{}: duplicate identifier '{id}'",
                path.display()
            )));
        }
    }
    Ok(ids)
}

pub fn write_id_map(path: &Path, ids: &[String]) -> Result<()> {
    let mut buf = String::new();
    for id in ids {
        buf.push_str(id);
        buf.push('\n');
    }
    atomic_write(path, buf.as_bytes())
}

/// Loads one modality slice: matrix plus the shared ID map, checking
/// row/ID-count alignment.
pub fn load_features(path: &Path, id_map_path: &Path) -> Result<(Mat<f32>, Vec<String>)> {
    let matrix = read_feature_matrix(path)?;
    let ids = read_id_map(id_map_path)?;
    if matrix.rows != ids.len() {
        return Err(AppError::input(format!(
            "{}: {} rows but ID map {} has {} entries",
            path.display(),
            matrix.rows,
            id_map_path.display(),
            ids.len()
        )));
    }
    Ok((matrix, ids))
}

/// Writes via a temp file in the same directory, then renames.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    fs::create_dir_all(dir)?;
    let tmp = dir.join(format!(
        ".{}.tmp",
        path.file_name().map(|n| n.to_string_lossy()).unwrap_or_default()
    ));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}
