//! Model checkpoint format.
//!
//! Layout: magic "EMKG", u32 LE version (=1), length-prefixed UTF-8 JSON run
//! config, 32-byte graph fingerprint hash, u32 tensor count, then per tensor:
//! length-prefixed name, u32 rank (=2), rank u64 dims, row-major f32 LE
//! values. Round trips are byte-identical for identical inputs.

use std::fs;
use std::path::Path;

use emmkgr_core::linalg::Mat;
use emmkgr_core::model::ParamSet;

use crate::config::RunConfig;
use crate::error::{AppError, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"EMKG";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub config: RunConfig,
    /// Hex SHA-256 of the graph the model was trained on.
    pub graph_hash: String,
    /// (name, rows, cols, row-major values), in serialization order.
    pub tensors: Vec<(String, usize, usize, Vec<f32>)>,
}

impl Checkpoint {
    pub fn from_params(config: RunConfig, graph_hash: String, params: &ParamSet<f32>) -> Self {
        let tensors = params
            .named_tensors()
            .into_iter()
            .map(|(name, rows, cols, data)| (name, rows, cols, data.to_vec()))
            .collect();
        Checkpoint {
            config,
            graph_hash,
            tensors,
        }
    }

    fn tensor(&self, name: &str) -> Result<&(String, usize, usize, Vec<f32>)> {
        self.tensors
            .iter()
            .find(|(n, _, _, _)| n == name)
            .ok_or_else(|| AppError::input(format!("checkpoint missing tensor '{name}'")))
    }

    /// Rebuilds the parameter set from the named tensors.
    pub fn to_params(&self) -> Result<ParamSet<f32>> {
        let as_mat = |t: &(String, usize, usize, Vec<f32>)| {
            Mat::from_rows(t.1, t.2, t.3.clone())
        };
        let item_emb = as_mat(self.tensor("item_emb")?);
        let user_emb = as_mat(self.tensor("user_emb")?);
        let item_emb_in = self
            .tensors
            .iter()
            .find(|(n, _, _, _)| n == "item_emb_in")
            .map(as_mat);
        let n_types = self
            .tensors
            .iter()
            .filter(|(n, _, _, _)| n.starts_with("proj_w_"))
            .count();
        let mut proj_w = Vec::with_capacity(n_types);
        let mut proj_b = Vec::with_capacity(n_types);
        for k in 0..n_types {
            proj_w.push(as_mat(self.tensor(&format!("proj_w_{k}"))?));
            proj_b.push(self.tensor(&format!("proj_b_{k}"))?.3.clone());
        }
        let phases = as_mat(self.tensor("phases")?);
        let dim = item_emb.cols;
        let params = ParamSet {
            item_emb,
            user_emb,
            item_emb_in,
            proj_w,
            proj_b,
            phases,
            dim,
        };
        if !params.all_finite() {
            return Err(AppError::numeric("checkpoint contains non-finite values"));
        }
        Ok(params)
    }
}

fn push_str(buf: &mut Vec<u8>, s: &str) {
    buf.extend_from_slice(&(s.len() as u32).to_le_bytes());
    buf.extend_from_slice(s.as_bytes());
}

fn hash_to_bytes(hex: &str) -> Result<[u8; 32]> {
    if hex.len() != 64 || !hex.bytes().all(|b| b.is_ascii_hexdigit()) {
        return Err(AppError::input(format!("bad graph hash '{hex}'")));
    }
    let mut out = [0u8; 32];
    for (i, chunk) in hex.as_bytes().chunks_exact(2).enumerate() {
        let s = std::str::from_utf8(chunk).unwrap();
        out[i] = u8::from_str_radix(s, 16).unwrap();
    }
    Ok(out)
}

fn hash_to_hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn write_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    let config_json = serde_json::to_string(&ckpt.config)?;
    push_str(&mut buf, &config_json);
    buf.extend_from_slice(&hash_to_bytes(&ckpt.graph_hash)?);
    buf.extend_from_slice(&(ckpt.tensors.len() as u32).to_le_bytes());
    for (name, rows, cols, data) in &ckpt.tensors {
        push_str(&mut buf, name);
        buf.extend_from_slice(&2u32.to_le_bytes()); // rank
        buf.extend_from_slice(&(*rows as u64).to_le_bytes());
        buf.extend_from_slice(&(*cols as u64).to_le_bytes());
        if data.len() != rows * cols {
            return Err(AppError::input(format!(
                "tensor '{name}' has {} values for shape {rows}x{cols}",
                data.len()
            )));
        }
        for v in data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    super::features::atomic_write(path, &buf)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(AppError::input(format!(
                "{}: truncated checkpoint at byte {}",
                self.path.display(),
                self.pos
            )));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String> {
        let len = self.u32()? as usize;
        let raw = self.take(len)?;
        String::from_utf8(raw.to_vec()).map_err(|_| {
            AppError::input(format!("{}: invalid UTF-8 in checkpoint", self.path.display()))
        })
    }
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path)
        .map_err(|e| AppError::input(format!("{}: {e}", path.display())))?;
    let mut r = Reader {
        bytes: &bytes,
        pos: 0,
        path,
    };
    if r.take(4)? != CHECKPOINT_MAGIC {
        return Err(AppError::input(format!(
            "{}: not a checkpoint file (bad magic)",
            path.display()
        )));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(AppError::input(format!(
            "{}: unsupported checkpoint version {version}",
            path.display()
        )));
    }
    let config: RunConfig = serde_json::from_str(&r.string()?)?;
    let graph_hash = hash_to_hex(r.take(32)?);
    let n_tensors = r.u32()? as usize;
    let mut tensors = Vec::with_capacity(n_tensors);
    for _ in 0..n_tensors {
        let name = r.string()?;
        let rank = r.u32()?;
        if rank != 2 {
            return Err(AppError::input(format!(
                "{}: tensor '{name}' has unsupported rank {rank}",
                path.display()
            )));
        }
        let rows = r.u64()? as usize;
        let cols = r.u64()? as usize;
        let count = rows
            .checked_mul(cols)
            .ok_or_else(|| AppError::input("checkpoint tensor shape overflow"))?;
        let raw = r.take(count * 4)?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        tensors.push((name, rows, cols, data));
    }
    if r.pos != bytes.len() {
        return Err(AppError::input(format!(
            "{}: {} trailing bytes after checkpoint payload",
            path.display(),
            bytes.len() - r.pos
        )));
    }
    Ok(Checkpoint {
        config,
        graph_hash,
        tensors,
    })
}
