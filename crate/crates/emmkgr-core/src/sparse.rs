//! Sparse symmetric adjacency in CSR form and symmetric normalization.

use alloc::vec;
use alloc::vec::Vec;

use crate::linalg::Mat;
use crate::Real;

/// Square sparse matrix in CSR layout.
#[derive(Clone, Debug)]
pub struct Csr<F> {
    pub n: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<u32>,
    pub values: Vec<F>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SparseError {
    /// The input adjacency is not symmetric.
    Asymmetric,
}

impl core::fmt::Display for SparseError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            SparseError::Asymmetric => write!(f, "adjacency matrix is not symmetric"),
        }
    }
}

impl<F: Real> Csr<F> {
    /// Builds a CSR matrix from (row, col, value) entries. Entries may arrive
    /// in any order; duplicates are summed.
    pub fn from_entries(n: usize, entries: &[(u32, u32, F)]) -> Self {
        let mut counts = vec![0usize; n + 1];
        for &(r, _, _) in entries {
            counts[r as usize + 1] += 1;
        }
        for i in 0..n {
            counts[i + 1] += counts[i];
        }
        let indptr_raw = counts.clone();
        let mut indices = vec![0u32; entries.len()];
        let mut values = vec![F::zero(); entries.len()];
        let mut cursor = indptr_raw.clone();
        for &(r, c, v) in entries {
            let p = cursor[r as usize];
            indices[p] = c;
            values[p] = v;
            cursor[r as usize] += 1;
        }
        // sort each row by column, then merge duplicates
        let mut out_indptr = vec![0usize; n + 1];
        let mut out_indices = Vec::with_capacity(entries.len());
        let mut out_values = Vec::with_capacity(entries.len());
        for r in 0..n {
            let lo = indptr_raw[r];
            let hi = indptr_raw[r + 1];
            let mut row: Vec<(u32, F)> = indices[lo..hi]
                .iter()
                .copied()
                .zip(values[lo..hi].iter().copied())
                .collect();
            row.sort_by_key(|&(c, _)| c);
            let mut i = 0;
            while i < row.len() {
                let (c, mut v) = row[i];
                let mut j = i + 1;
                while j < row.len() && row[j].0 == c {
                    v += row[j].1;
                    j += 1;
                }
                out_indices.push(c);
                out_values.push(v);
                i = j;
            }
            out_indptr[r + 1] = out_indices.len();
        }
        Csr {
            n,
            indptr: out_indptr,
            indices: out_indices,
            values: out_values,
        }
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn get(&self, r: usize, c: usize) -> F {
        let lo = self.indptr[r];
        let hi = self.indptr[r + 1];
        match self.indices[lo..hi].binary_search(&(c as u32)) {
            Ok(p) => self.values[lo + p],
            Err(_) => F::zero(),
        }
    }

    pub fn is_symmetric(&self, tol: F) -> bool {
        for r in 0..self.n {
            for p in self.indptr[r]..self.indptr[r + 1] {
                let c = self.indices[p] as usize;
                if (self.values[p] - self.get(c, r)).abs() > tol {
                    return false;
                }
            }
        }
        true
    }

    /// Row sums (weighted degrees).
    pub fn degrees(&self) -> Vec<F> {
        let mut d = vec![F::zero(); self.n];
        for r in 0..self.n {
            for p in self.indptr[r]..self.indptr[r + 1] {
                d[r] += self.values[p];
            }
        }
        d
    }

    /// Sparse × dense product, row by row in fixed order.
    pub fn mul_dense(&self, x: &Mat<F>) -> Mat<F> {
        assert_eq!(self.n, x.rows);
        let mut out = Mat::zeros(x.rows, x.cols);
        for r in 0..self.n {
            let dst_off = r * x.cols;
            for p in self.indptr[r]..self.indptr[r + 1] {
                let c = self.indices[p] as usize;
                let w = self.values[p];
                let src = x.row(c);
                for (k, &s) in src.iter().enumerate() {
                    out.data[dst_off + k] += w * s;
                }
            }
        }
        out
    }

    /// Materializes the dense form; test/oracle helper for small matrices.
    pub fn to_dense(&self) -> Mat<F> {
        let mut m = Mat::zeros(self.n, self.n);
        for r in 0..self.n {
            for p in self.indptr[r]..self.indptr[r + 1] {
                m.set(r, self.indices[p] as usize, self.values[p]);
            }
        }
        m
    }
}

/// Symmetrically normalized operator D^{-1/2} A D^{-1/2} with its degrees.
#[derive(Clone, Debug)]
pub struct NormalizedOperator<F> {
    pub matrix: Csr<F>,
    pub degrees: Vec<F>,
}

/// D^{-1/2} A D^{-1/2}; rows/columns of zero-degree nodes stay all-zero.
/// Rejects asymmetric input.
pub fn normalize<F: Real>(adj: &Csr<F>) -> Result<NormalizedOperator<F>, SparseError> {
    if !adj.is_symmetric(F::from_f64(1e-9)) {
        return Err(SparseError::Asymmetric);
    }
    let deg = adj.degrees();
    let inv_sqrt: Vec<F> = deg
        .iter()
        .map(|&d| {
            if d > F::zero() {
                F::one() / d.sqrt()
            } else {
                F::zero()
            }
        })
        .collect();
    let mut m = adj.clone();
    for r in 0..m.n {
        for p in m.indptr[r]..m.indptr[r + 1] {
            let c = m.indices[p] as usize;
            m.values[p] = m.values[p] * inv_sqrt[r] * inv_sqrt[c];
        }
    }
    Ok(NormalizedOperator {
        matrix: m,
        degrees: deg,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn edge_list(n: usize, edges: &[(u32, u32)]) -> Csr<f64> {
        let mut entries = Vec::new();
        for &(a, b) in edges {
            entries.push((a, b, 1.0));
            entries.push((b, a, 1.0));
        }
        Csr::from_entries(n, &entries)
    }

    #[test]
    fn single_edge_normalizes_to_one() {
        let adj = edge_list(2, &[(0, 1)]);
        let op = normalize(&adj).unwrap();
        assert!((op.matrix.get(0, 1) - 1.0).abs() < 1e-12);
        assert!((op.matrix.get(1, 0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn star_graph_weights() {
        // center 0 with 4 leaves: each weight 1/sqrt(4*1) = 0.5
        let adj = edge_list(5, &[(0, 1), (0, 2), (0, 3), (0, 4)]);
        let op = normalize(&adj).unwrap();
        for leaf in 1..5u32 {
            assert!((op.matrix.get(0, leaf as usize) - 0.5).abs() < 1e-12);
            assert!((op.matrix.get(leaf as usize, 0) - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn asymmetric_rejected() {
        let adj: Csr<f64> = Csr::from_entries(2, &[(0, 1, 1.0)]);
        assert_eq!(normalize(&adj).unwrap_err(), SparseError::Asymmetric);
    }

    #[test]
    fn duplicate_entries_summed() {
        let adj: Csr<f64> = Csr::from_entries(2, &[(0, 1, 1.0), (0, 1, 1.0), (1, 0, 2.0)]);
        assert_eq!(adj.get(0, 1), 2.0);
        assert_eq!(adj.nnz(), 2);
    }

    #[test]
    fn random_graph_matches_dense_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let n = 30;
        let mut edges = Vec::new();
        for a in 0..n as u32 {
            for b in (a + 1)..n as u32 {
                if rng.random::<f64>() < 0.15 {
                    edges.push((a, b));
                }
            }
        }
        let adj = edge_list(n, &edges);
        let op = normalize(&adj).unwrap();
        // dense oracle
        let dense = adj.to_dense();
        let deg = adj.degrees();
        for i in 0..n {
            for j in 0..n {
                let expect = if deg[i] > 0.0 && deg[j] > 0.0 {
                    dense.get(i, j) / (deg[i] * deg[j]).sqrt()
                } else {
                    0.0
                };
                assert!((op.matrix.get(i, j) - expect).abs() < 1e-6);
            }
        }
    }
}
