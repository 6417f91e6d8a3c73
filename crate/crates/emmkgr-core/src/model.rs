//! Learnable parameters, per-modality projections into the shared space,
//! embedding stacking, and linear layer-mean propagation.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::datastore::FeatureStore;
use crate::linalg::Mat;
use crate::rng::{stream_rng, Stream};
use crate::sparse::NormalizedOperator;
use crate::Real;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ModelError {
    OddDimension(usize),
    DimensionMismatch { expected: usize, got: usize },
}

impl core::fmt::Display for ModelError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            ModelError::OddDimension(d) => {
                write!(f, "embedding dimension {d} must be even for complex pairing")
            }
            ModelError::DimensionMismatch { expected, got } => {
                write!(f, "dimension mismatch: expected {expected}, got {got}")
            }
        }
    }
}

/// All learnable tensors of the model.
#[derive(Debug, Clone)]
pub struct ParamSet<F> {
    /// N × d item ID embeddings.
    pub item_emb: Mat<F>,
    /// U × d user embeddings.
    pub user_emb: Mat<F>,
    /// Optional second item table for the interaction graph
    /// (`separate_item_tables` ablation); None means the MMKG table is shared.
    pub item_emb_in: Option<Mat<F>>,
    /// Per-modality projection weights, d_τ × d.
    pub proj_w: Vec<Mat<F>>,
    /// Per-modality projection biases, length d.
    pub proj_b: Vec<Vec<F>>,
    /// Relation phases, 2T × d/2, radians.
    pub phases: Mat<F>,
    pub dim: usize,
}

impl<F: Real> ParamSet<F> {
    /// Xavier-uniform initialization for embeddings and weights, zero biases,
    /// phases uniform in [0, 2π). Deterministic for a fixed seed.
    pub fn init(
        n_items: usize,
        n_users: usize,
        feat_dims: &[usize],
        dim: usize,
        separate_item_tables: bool,
        seed: u64,
    ) -> Result<Self, ModelError> {
        if dim % 2 != 0 {
            return Err(ModelError::OddDimension(dim));
        }
        let mut rng = stream_rng(seed, Stream::Init);
        let mut xavier = |rows: usize, cols: usize| -> Mat<F> {
            let a = (6.0 / (rows + cols) as f64).sqrt();
            let data = (0..rows * cols)
                .map(|_| F::from_f64((rng.random::<f64>() * 2.0 - 1.0) * a))
                .collect();
            Mat::from_rows(rows, cols, data)
        };
        let item_emb = xavier(n_items, dim);
        let user_emb = xavier(n_users, dim);
        let item_emb_in = separate_item_tables.then(|| xavier(n_items, dim));
        let proj_w: Vec<Mat<F>> = feat_dims.iter().map(|&dt| xavier(dt, dim)).collect();
        let proj_b = feat_dims.iter().map(|_| vec![F::zero(); dim]).collect();
        let phase_data = (0..feat_dims.len() * 2 * (dim / 2))
            .map(|_| F::from_f64(rng.random::<f64>() * 2.0 * core::f64::consts::PI))
            .collect();
        let phases = Mat::from_rows(feat_dims.len() * 2, dim / 2, phase_data);
        Ok(ParamSet {
            item_emb,
            user_emb,
            item_emb_in,
            proj_w,
            proj_b,
            phases,
            dim,
        })
    }

    pub fn n_types(&self) -> usize {
        self.proj_w.len()
    }

    /// The item table the interaction graph propagates from.
    pub fn item_table_in(&self) -> &Mat<F> {
        self.item_emb_in.as_ref().unwrap_or(&self.item_emb)
    }

    pub fn all_finite(&self) -> bool {
        self.item_emb.all_finite()
            && self.user_emb.all_finite()
            && self.item_emb_in.as_ref().map_or(true, |m| m.all_finite())
            && self.proj_w.iter().all(|m| m.all_finite())
            && self.proj_b.iter().all(|b| b.iter().all(|v| v.is_finite()))
            && self.phases.all_finite()
    }

    /// Named views of every tensor, in a fixed serialization order.
    pub fn named_tensors(&self) -> Vec<(String, usize, usize, &[F])> {
        let mut out = vec![
            (
                String::from("item_emb"),
                self.item_emb.rows,
                self.item_emb.cols,
                self.item_emb.data.as_slice(),
            ),
            (
                String::from("user_emb"),
                self.user_emb.rows,
                self.user_emb.cols,
                self.user_emb.data.as_slice(),
            ),
        ];
        if let Some(m) = &self.item_emb_in {
            out.push((String::from("item_emb_in"), m.rows, m.cols, m.data.as_slice()));
        }
        for (k, w) in self.proj_w.iter().enumerate() {
            out.push((alloc::format!("proj_w_{k}"), w.rows, w.cols, w.data.as_slice()));
        }
        for (k, b) in self.proj_b.iter().enumerate() {
            out.push((alloc::format!("proj_b_{k}"), 1, b.len(), b.as_slice()));
        }
        out.push((
            String::from("phases"),
            self.phases.rows,
            self.phases.cols,
            self.phases.data.as_slice(),
        ));
        out
    }

    /// Sum of squares over every parameter, the weight-decay term.
    pub fn squared_norm(&self) -> F {
        let mut s = F::zero();
        for (_, _, _, data) in self.named_tensors() {
            for &v in data {
                s += v * v;
            }
        }
        s
    }
}

/// Z^τ = M̂^τ W^τ + 1·(b^τ)ᵀ for every modality type; plain affine map.
pub fn project<F: Real>(store: &FeatureStore, params: &ParamSet<F>) -> Vec<Mat<F>> {
    assert_eq!(store.n_types(), params.n_types());
    store
        .matrices
        .iter()
        .zip(params.proj_w.iter().zip(params.proj_b.iter()))
        .map(|(m, (w, b))| {
            assert_eq!(m.cols, w.rows);
            let mf = Mat::from_rows(
                m.rows,
                m.cols,
                m.data.iter().map(|&v| F::from_f32(v)).collect(),
            );
            let mut z = mf.matmul(w);
            for i in 0..z.rows {
                for (v, bv) in z.row_mut(i).iter_mut().zip(b.iter()) {
                    *v += *bv;
                }
            }
            z
        })
        .collect()
}

/// Stacks [E^i; Z^τ₀; …; Z^τ_{T−1}] (plus an optional trailing user block for
/// the interaction graph variant) into one (1+T)N(+U) × d matrix, matching
/// the graph node indexing.
pub fn stack_embeddings<F: Real>(
    item_emb: &Mat<F>,
    z: &[Mat<F>],
    user_block: Option<&Mat<F>>,
) -> Mat<F> {
    let n = item_emb.rows;
    let d = item_emb.cols;
    let extra = user_block.map_or(0, |u| u.rows);
    let mut out = Mat::zeros((1 + z.len()) * n + extra, d);
    out.set_block(0, item_emb);
    for (k, zk) in z.iter().enumerate() {
        assert_eq!(zk.rows, n);
        assert_eq!(zk.cols, d);
        out.set_block((k + 1) * n, zk);
    }
    if let Some(u) = user_block {
        out.set_block((1 + z.len()) * n, u);
    }
    out
}

/// Result of layer-mean propagation.
#[derive(Debug, Clone)]
pub struct PropagationResult<F> {
    /// (1/(L+1)) Σ_{l=0..L} Ã^l E0.
    pub h: Mat<F>,
    /// Per-layer matrices H^(0..L), retained on request.
    pub layers: Option<Vec<Mat<F>>>,
}

/// H = (1/(L+1)) Σ_{l=0..L} Ã^l E0 by repeated sparse multiplication.
/// Zero-degree nodes end with H_row = E0_row / (L+1).
pub fn propagate<F: Real>(
    op: &NormalizedOperator<F>,
    e0: &Mat<F>,
    layers: usize,
    keep_layers: bool,
) -> PropagationResult<F> {
    assert_eq!(op.matrix.n, e0.rows);
    let mut acc = e0.clone();
    let mut cur = e0.clone();
    let mut kept = keep_layers.then(|| vec![e0.clone()]);
    for _ in 0..layers {
        cur = op.matrix.mul_dense(&cur);
        acc.add_assign(&cur);
        if let Some(k) = kept.as_mut() {
            k.push(cur.clone());
        }
    }
    acc.scale(F::one() / F::from_usize(layers + 1));
    PropagationResult {
        h: acc,
        layers: kept,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparse::{normalize, Csr};
    use alloc::string::ToString;
    use rand::{Rng, SeedableRng};

    fn rand_mat(rng: &mut impl Rng, rows: usize, cols: usize) -> Mat<f64> {
        Mat::from_rows(
            rows,
            cols,
            (0..rows * cols).map(|_| rng.random::<f64>() - 0.5).collect(),
        )
    }

    fn rand_operator(rng: &mut impl Rng, n: usize) -> NormalizedOperator<f64> {
        let mut entries = Vec::new();
        for a in 0..n as u32 {
            for b in (a + 1)..n as u32 {
                if rng.random::<f64>() < 0.2 {
                    entries.push((a, b, 1.0));
                    entries.push((b, a, 1.0));
                }
            }
        }
        normalize(&Csr::from_entries(n, &entries)).unwrap()
    }

    #[test]
    fn odd_dim_rejected() {
        let err = ParamSet::<f64>::init(2, 2, &[4], 7, false, 0).unwrap_err();
        assert_eq!(err, ModelError::OddDimension(7));
    }

    #[test]
    fn projection_identity_weight() {
        let d = 4;
        let store = FeatureStore::new(
            vec!["m".to_string()],
            vec![Mat::from_rows(
                2,
                d,
                vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0],
            )],
            vec!["a".to_string(), "b".to_string()],
        )
        .unwrap();
        let mut params = ParamSet::<f64>::init(2, 1, &[d], d, false, 0).unwrap();
        params.proj_w[0] = Mat::zeros(d, d);
        for i in 0..d {
            params.proj_w[0].set(i, i, 1.0);
        }
        params.proj_b[0] = vec![0.0; d];
        let z = project(&store, &params);
        for (got, want) in z[0].data.iter().zip(store.matrices[0].data.iter()) {
            assert!((got - *want as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn projection_bias_only() {
        let store = FeatureStore::new(
            vec!["m".to_string()],
            vec![Mat::from_rows(3, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0])],
            vec!["a".to_string(), "b".to_string(), "c".to_string()],
        )
        .unwrap();
        let mut params = ParamSet::<f64>::init(3, 1, &[2], 4, false, 0).unwrap();
        params.proj_w[0] = Mat::zeros(2, 4);
        params.proj_b[0] = vec![0.5, -1.0, 2.0, 0.0];
        let z = project(&store, &params);
        for i in 0..3 {
            assert_eq!(z[0].row(i), params.proj_b[0].as_slice());
        }
    }

    #[test]
    fn projection_matches_rowwise_oracle() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        let (n, dt, d) = (5, 7, 4);
        let feats = Mat::from_rows(
            n,
            dt,
            (0..n * dt).map(|_| rng.random::<f32>() - 0.5).collect(),
        );
        let store = FeatureStore::new(
            vec!["m".to_string()],
            vec![feats.clone()],
            (0..n).map(|i| alloc::format!("i{i}")).collect(),
        )
        .unwrap();
        let params = ParamSet::<f64>::init(n, 1, &[dt], d, false, 3).unwrap();
        let z = project(&store, &params);
        for i in 0..n {
            for j in 0..d {
                let mut want = params.proj_b[0][j];
                for k in 0..dt {
                    want += feats.get(i, k) as f64 * params.proj_w[0].get(k, j);
                }
                assert!((z[0].get(i, j) - want).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn stack_block_layout() {
        let n = 3;
        let d = 2;
        let item = Mat::from_rows(n, d, (0..6).map(|v| v as f64).collect());
        let z0 = Mat::from_rows(n, d, (10..16).map(|v| v as f64).collect());
        let z1 = Mat::from_rows(n, d, (20..26).map(|v| v as f64).collect());
        let e = stack_embeddings(&item, &[z0.clone(), z1.clone()], None);
        assert_eq!(e.rows, 3 * n);
        for j in 0..n {
            assert_eq!(e.row((0 + 1) * n + j), z0.row(j));
            assert_eq!(e.row((1 + 1) * n + j), z1.row(j));
        }
    }

    #[test]
    fn propagate_zero_layers_is_identity() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let op = rand_operator(&mut rng, 10);
        let e0 = rand_mat(&mut rng, 10, 3);
        let res = propagate(&op, &e0, 0, false);
        assert_eq!(res.h.data, e0.data);
    }

    #[test]
    fn propagate_matches_dense_power_oracle() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        for _ in 0..3 {
            let n = rng.random_range(10..60);
            let op = rand_operator(&mut rng, n);
            let e0 = rand_mat(&mut rng, n, 4);
            let l = 2;
            let res = propagate(&op, &e0, l, false);
            // dense (I + Ã + Ã²)/3 · E0
            let dense = op.matrix.to_dense();
            let a1 = dense.matmul(&e0);
            let a2 = dense.matmul(&a1);
            for idx in 0..res.h.data.len() {
                let want = (e0.data[idx] + a1.data[idx] + a2.data[idx]) / 3.0;
                let got = res.h.data[idx];
                let scale = want.abs().max(1.0);
                assert!((got - want).abs() / scale < 1e-5);
            }
        }
    }

    #[test]
    fn zero_degree_row_scaled_identity() {
        // node 2 isolated
        let entries = [(0u32, 1u32, 1.0f64), (1, 0, 1.0)];
        let op = normalize(&Csr::from_entries(3, &entries)).unwrap();
        let e0 = Mat::from_rows(3, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let res = propagate(&op, &e0, 2, false);
        assert!((res.h.get(2, 0) - 5.0 / 3.0).abs() < 1e-12);
        assert!((res.h.get(2, 1) - 6.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn propagation_is_linear() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let n = 20;
        let op = rand_operator(&mut rng, n);
        let x = rand_mat(&mut rng, n, 3);
        let y = rand_mat(&mut rng, n, 3);
        let (a, b) = (1.7, -0.4);
        let mut combo = x.clone();
        combo.scale(a);
        let mut yb = y.clone();
        yb.scale(b);
        combo.add_assign(&yb);
        let lhs = propagate(&op, &combo, 3, false).h;
        let mut rhs = propagate(&op, &x, 3, false).h;
        rhs.scale(a);
        let mut ry = propagate(&op, &y, 3, false).h;
        ry.scale(b);
        rhs.add_assign(&ry);
        for (l, r) in lhs.data.iter().zip(rhs.data.iter()) {
            assert!((l - r).abs() < 1e-5);
        }
    }

    #[test]
    fn propagation_is_self_adjoint() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let n = 25;
        let op = rand_operator(&mut rng, n);
        let x = rand_mat(&mut rng, n, 3);
        let g = rand_mat(&mut rng, n, 3);
        let px = propagate(&op, &x, 2, false).h;
        let pg = propagate(&op, &g, 2, false).h;
        let lhs: f64 = px.data.iter().zip(g.data.iter()).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.data.iter().zip(pg.data.iter()).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-5);
    }

    #[test]
    fn init_is_deterministic() {
        let a = ParamSet::<f32>::init(5, 3, &[4, 6], 8, false, 42).unwrap();
        let b = ParamSet::<f32>::init(5, 3, &[4, 6], 8, false, 42).unwrap();
        assert_eq!(a.item_emb.data, b.item_emb.data);
        assert_eq!(a.phases.data, b.phases.data);
    }
}
