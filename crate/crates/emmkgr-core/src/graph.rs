//! Multimodal knowledge-graph assembly: node index space, typed edges,
//! block adjacency, structural ablation variants, and the bipartite
//! user–item interaction graph.
//!
//! Node indexing: item j ↦ j; modality-type k instance of item j ↦ (k+1)·N + j;
//! with the `Interaction` variant, user u ↦ (1+T)·N + u.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::datastore::{FeatureStore, InteractionData, Split};
use crate::knn::NeighborList;
use crate::sparse::{normalize, Csr, NormalizedOperator, SparseError};
use crate::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    Original,
    /// User–item interaction edges injected directly into the MMKG.
    Interaction,
    /// All modality nodes of the same item connected to each other.
    InterModal,
    /// Items-only graph: mean of per-modality normalized kNN adjacencies.
    ItemItem,
}

impl Variant {
    pub fn tag(&self) -> &'static str {
        match self {
            Variant::Original => "original",
            Variant::Interaction => "interaction",
            Variant::InterModal => "inter_modal",
            Variant::ItemItem => "item_item",
        }
    }

    pub fn parse(s: &str) -> Option<Variant> {
        match s {
            "original" => Some(Variant::Original),
            "interaction" => Some(Variant::Interaction),
            "inter_modal" => Some(Variant::InterModal),
            "item_item" => Some(Variant::ItemItem),
            _ => None,
        }
    }
}

/// (head, relation, tail) with node indices in MMGraph space.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Triple {
    pub head: u32,
    pub relation: u32,
    pub tail: u32,
}

#[derive(Debug, Clone)]
pub struct MMGraph {
    pub n_items: usize,
    pub n_types: usize,
    /// Non-zero only for the Interaction variant.
    pub n_users: usize,
    pub variant: Variant,
    /// relation 2k = "<τ_k>_of", relation 2k+1 = "similar_<τ_k>".
    pub relation_names: Vec<String>,
    /// Undirected binary edges, stored with a < b. Empty for ItemItem.
    pub edges: Vec<(u32, u32)>,
    /// Typed triples backing the KG loss. Empty for ItemItem.
    pub triples: Vec<Triple>,
    /// Per-modality symmetrized kNN edge lists over item indices; only set
    /// for ItemItem, where the operator is built by late aggregation.
    pub item_item_sources: Vec<Vec<(u32, u32)>>,
    pub knn_n: usize,
}

impl MMGraph {
    pub fn n_nodes(&self) -> usize {
        match self.variant {
            Variant::ItemItem => self.n_items,
            _ => (1 + self.n_types) * self.n_items + self.n_users,
        }
    }

    #[inline]
    pub fn item_node(&self, j: usize) -> u32 {
        j as u32
    }

    #[inline]
    pub fn modality_node(&self, type_idx: usize, j: usize) -> u32 {
        ((type_idx + 1) * self.n_items + j) as u32
    }

    #[inline]
    pub fn user_node(&self, u: usize) -> u32 {
        ((1 + self.n_types) * self.n_items + u) as u32
    }

    /// Which modality block a node belongs to; None for item or user nodes.
    pub fn node_type(&self, node: u32) -> Option<usize> {
        let n = self.n_items;
        let idx = node as usize;
        if idx < n || idx >= (1 + self.n_types) * n {
            None
        } else {
            Some(idx / n - 1)
        }
    }

    /// Binary symmetric adjacency over the full node space.
    pub fn adjacency<F: Real>(&self) -> Csr<F> {
        let mut entries = Vec::with_capacity(self.edges.len() * 2);
        for &(a, b) in &self.edges {
            entries.push((a, b, F::one()));
            entries.push((b, a, F::one()));
        }
        Csr::from_entries(self.n_nodes(), &entries)
    }

    /// The propagation operator for this graph. For most variants this is
    /// the symmetric normalization of the binary adjacency; for ItemItem it
    /// is the unweighted mean of per-modality normalized kNN adjacencies.
    pub fn operator<F: Real>(&self) -> Result<NormalizedOperator<F>, SparseError> {
        match self.variant {
            Variant::ItemItem => {
                let t = self.item_item_sources.len();
                let mut entries: Vec<(u32, u32, F)> = Vec::new();
                let w = F::one() / F::from_usize(t.max(1));
                for edges in &self.item_item_sources {
                    let mut sub = Vec::with_capacity(edges.len() * 2);
                    for &(a, b) in edges {
                        sub.push((a, b, F::one()));
                        sub.push((b, a, F::one()));
                    }
                    let adj: Csr<F> = Csr::from_entries(self.n_items, &sub);
                    let norm = normalize(&adj)?;
                    for r in 0..norm.matrix.n {
                        for p in norm.matrix.indptr[r]..norm.matrix.indptr[r + 1] {
                            entries.push((
                                r as u32,
                                norm.matrix.indices[p],
                                norm.matrix.values[p] * w,
                            ));
                        }
                    }
                }
                let matrix = Csr::from_entries(self.n_items, &entries);
                let degrees = matrix.degrees();
                Ok(NormalizedOperator { matrix, degrees })
            }
            _ => normalize(&self.adjacency()),
        }
    }

    /// Edge count per relation id, plus interaction edges (if any) last.
    pub fn edge_counts(&self) -> Vec<(String, usize)> {
        let mut counts = vec![0usize; self.relation_names.len()];
        for t in &self.triples {
            counts[t.relation as usize] += 1;
        }
        let mut out: Vec<(String, usize)> = self
            .relation_names
            .iter()
            .cloned()
            .zip(counts)
            .collect();
        if self.variant == Variant::Interaction {
            let user_base = ((1 + self.n_types) * self.n_items) as u32;
            let n = self
                .edges
                .iter()
                .filter(|&&(a, b)| a >= user_base || b >= user_base)
                .count();
            out.push((String::from("interacted_with"), n));
        }
        if self.variant == Variant::InterModal {
            let typed: usize = out.iter().map(|(_, c)| c).sum();
            // inter-modal edges carry no relation id
            out.push((String::from("inter_modal"), self.edges.len() - typed));
        }
        out
    }

    /// Canonical text form of the graph structure, used for fingerprinting.
    pub fn canonical_description(&self) -> String {
        use core::fmt::Write;
        let mut s = String::new();
        let _ = writeln!(
            s,
            "variant={} items={} types={} users={} knn={}",
            self.variant.tag(),
            self.n_items,
            self.n_types,
            self.n_users,
            self.knn_n
        );
        for (name, c) in self.edge_counts() {
            let _ = writeln!(s, "relation {name} {c}");
        }
        let mut edges = self.edges.clone();
        edges.sort_unstable();
        for (a, b) in edges {
            let _ = writeln!(s, "e {a} {b}");
        }
        for (t_idx, src) in self.item_item_sources.iter().enumerate() {
            let mut edges = src.clone();
            edges.sort_unstable();
            for (a, b) in edges {
                let _ = writeln!(s, "ii {t_idx} {a} {b}");
            }
        }
        s
    }
}

fn unordered(a: u32, b: u32) -> (u32, u32) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Symmetrizes a directed top-n neighbor list into undirected edges over the
/// raw row index space: the edge exists if either endpoint picked the other.
fn symmetrize<F: Real>(neighbors: &NeighborList<F>) -> Vec<(u32, u32)> {
    let mut set: BTreeSet<(u32, u32)> = BTreeSet::new();
    for (j, list) in neighbors.lists.iter().enumerate() {
        for &(k, _) in list {
            set.insert(unordered(j as u32, k));
        }
    }
    set.into_iter().collect()
}

/// Assembles the base multimodal KG: item-modal edges for every (item, type)
/// pair and union-symmetrized modal-modal edges from the per-type top-n lists.
pub fn assemble_mmkg<F: Real>(
    store: &FeatureStore,
    neighbors: &[NeighborList<F>],
) -> MMGraph {
    assemble_variant(store, neighbors, None, Variant::Original)
}

/// Assembles the requested structural variant. `interactions` must be split
/// data and is only consulted for `Variant::Interaction`.
pub fn assemble_variant<F: Real>(
    store: &FeatureStore,
    neighbors: &[NeighborList<F>],
    interactions: Option<&InteractionData>,
    variant: Variant,
) -> MMGraph {
    assert_eq!(neighbors.len(), store.n_types());
    let n = store.n_items();
    let t = store.n_types();
    let knn_n = neighbors.first().map(|nl| nl.n).unwrap_or(0);

    let mut relation_names = Vec::with_capacity(2 * t);
    for tag in &store.modality_types {
        relation_names.push(alloc::format!("{tag}_of"));
        relation_names.push(alloc::format!("similar_{tag}"));
    }

    if variant == Variant::ItemItem {
        return MMGraph {
            n_items: n,
            n_types: 0,
            n_users: 0,
            variant,
            relation_names: Vec::new(),
            edges: Vec::new(),
            triples: Vec::new(),
            item_item_sources: neighbors.iter().map(symmetrize).collect(),
            knn_n,
        };
    }

    let mut g = MMGraph {
        n_items: n,
        n_types: t,
        n_users: 0,
        variant,
        relation_names,
        edges: Vec::new(),
        triples: Vec::new(),
        item_item_sources: Vec::new(),
        knn_n,
    };

    // item-modal edges; triples have the modality node as head
    for k in 0..t {
        for j in 0..n {
            let m = g.modality_node(k, j);
            g.edges.push((g.item_node(j), m));
            g.triples.push(Triple {
                head: m,
                relation: (2 * k) as u32,
                tail: g.item_node(j),
            });
        }
    }

    // modal-modal edges, one triple per undirected edge (rotations are
    // invertible, the reverse direction is redundant)
    for (k, nl) in neighbors.iter().enumerate() {
        for (a, b) in symmetrize(nl) {
            let na = g.modality_node(k, a as usize);
            let nb = g.modality_node(k, b as usize);
            g.edges.push((na, nb));
            g.triples.push(Triple {
                head: na,
                relation: (2 * k + 1) as u32,
                tail: nb,
            });
        }
    }

    match variant {
        Variant::InterModal => {
            for j in 0..n {
                for k1 in 0..t {
                    for k2 in (k1 + 1)..t {
                        g.edges
                            .push((g.modality_node(k1, j), g.modality_node(k2, j)));
                    }
                }
            }
        }
        Variant::Interaction => {
            let data = interactions.expect("interaction variant needs split interactions");
            assert!(data.is_split(), "interactions must be split");
            g.n_users = data.n_users();
            for (u, i) in data.pairs_in(Split::Train) {
                g.edges.push((g.item_node(i as usize), g.user_node(u as usize)));
            }
        }
        _ => {}
    }
    g
}

/// Bipartite train-split interaction graph: users 0..U−1, items U..U+N−1.
#[derive(Debug, Clone)]
pub struct InteractionGraph {
    pub n_users: usize,
    pub n_items: usize,
    /// Undirected (user_node, item_node) edges in bipartite index space.
    pub edges: Vec<(u32, u32)>,
}

impl InteractionGraph {
    pub fn n_nodes(&self) -> usize {
        self.n_users + self.n_items
    }

    pub fn adjacency<F: Real>(&self) -> Csr<F> {
        let mut entries = Vec::with_capacity(self.edges.len() * 2);
        for &(a, b) in &self.edges {
            entries.push((a, b, F::one()));
            entries.push((b, a, F::one()));
        }
        Csr::from_entries(self.n_nodes(), &entries)
    }

    pub fn operator<F: Real>(&self) -> Result<NormalizedOperator<F>, SparseError> {
        normalize(&self.adjacency())
    }
}

/// Builds the bipartite graph from train pairs only.
pub fn assemble_interaction_graph(data: &InteractionData, n_items: usize) -> InteractionGraph {
    assert!(data.is_split(), "interactions must be split");
    let n_users = data.n_users();
    let edges = data
        .pairs_in(Split::Train)
        .map(|(u, i)| (u, n_users as u32 + i))
        .collect();
    InteractionGraph {
        n_users,
        n_items,
        edges,
    }
}
