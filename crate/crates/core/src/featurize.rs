//! Node features, normalized adjacency, and block-diagonal mini-batches.

use ndarray::Array2;

use crate::smiles::MolecularGraph;

/// Width of a node feature row.
pub const NODE_FEATURE_DIM: usize = 32;

/// Element vocabulary; anything else maps to the trailing "other" slot.
pub const ELEMENTS: [&str; 12] = [
    "C", "N", "O", "S", "F", "Cl", "Br", "I", "P", "B", "Si", "Se",
];

const ELEMENT_OFFSET: usize = 0;
const DEGREE_OFFSET: usize = 13;
const CHARGE_OFFSET: usize = 20;
const AROMATIC_OFFSET: usize = 25;
const HYDROGEN_OFFSET: usize = 26;
const RING_OFFSET: usize = 31;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum FeaturizeError {
    #[error("cannot batch an empty list of graphs")]
    EmptyBatch,
}

/// Sparse symmetric `D^-1/2 (A + I) D^-1/2`, stored row-major as
/// `(row, col, weight)` triplets sorted by row then column.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedAdjacency {
    pub n: usize,
    pub entries: Vec<(usize, usize, f64)>,
}

impl NormalizedAdjacency {
    pub fn to_dense(&self) -> Array2<f64> {
        let mut out = Array2::zeros((self.n, self.n));
        for &(i, j, w) in &self.entries {
            out[[i, j]] = w;
        }
        out
    }

    /// `Â · x`. The operator is symmetric, so this also serves as its transpose.
    pub fn matmul(&self, x: &Array2<f64>) -> Array2<f64> {
        assert_eq!(x.nrows(), self.n, "adjacency/feature row mismatch");
        let mut out = Array2::zeros((self.n, x.ncols()));
        for &(i, j, w) in &self.entries {
            let src = x.row(j);
            let mut dst = out.row_mut(i);
            dst.scaled_add(w, &src);
        }
        out
    }
}

/// One-hot node features in the fixed 32-column layout:
/// element (13) | degree 0..6 (7) | charge -2..+2 (5) | aromatic (1) |
/// total H 0..4 (5) | in ring (1).
pub fn node_features(graph: &MolecularGraph) -> Array2<f64> {
    let degrees = graph.degrees();
    let mut out = Array2::zeros((graph.atoms.len(), NODE_FEATURE_DIM));
    for (i, atom) in graph.atoms.iter().enumerate() {
        let element = ELEMENTS
            .iter()
            .position(|e| *e == atom.element)
            .unwrap_or(ELEMENTS.len());
        out[[i, ELEMENT_OFFSET + element]] = 1.0;
        out[[i, DEGREE_OFFSET + degrees[i].min(6)]] = 1.0;
        let charge = atom.formal_charge.clamp(-2, 2) + 2;
        out[[i, CHARGE_OFFSET + charge as usize]] = 1.0;
        if atom.aromatic {
            out[[i, AROMATIC_OFFSET]] = 1.0;
        }
        out[[i, HYDROGEN_OFFSET + (atom.total_h() as usize).min(4)]] = 1.0;
        if atom.in_ring {
            out[[i, RING_OFFSET]] = 1.0;
        }
    }
    out
}

/// Symmetric renormalization with self-loops; bond orders are ignored.
pub fn normalized_adjacency(graph: &MolecularGraph) -> NormalizedAdjacency {
    let n = graph.atoms.len();
    let neighbors = graph.neighbors();
    let degree: Vec<usize> = neighbors.iter().map(|nb| nb.len() + 1).collect();
    let mut entries = Vec::with_capacity(n + 2 * graph.bonds.len());
    for (i, nb) in neighbors.iter().enumerate() {
        let mut cols: Vec<usize> = nb.clone();
        cols.push(i);
        cols.sort_unstable();
        for j in cols {
            entries.push((i, j, 1.0 / ((degree[i] * degree[j]) as f64).sqrt()));
        }
    }
    NormalizedAdjacency { n, entries }
}

/// Several molecules stacked into one disconnected graph.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchedGraph {
    pub features: Array2<f64>,
    pub adjacency: NormalizedAdjacency,
    /// Owning graph of each node; non-decreasing.
    pub graph_index: Vec<usize>,
    /// Embedding-table key of each graph.
    pub molecule_keys: Vec<String>,
}

impl BatchedGraph {
    pub fn n_graphs(&self) -> usize {
        self.molecule_keys.len()
    }

    pub fn n_nodes(&self) -> usize {
        self.graph_index.len()
    }

    /// Node counts per graph.
    pub fn graph_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.n_graphs()];
        for &g in &self.graph_index {
            sizes[g] += 1;
        }
        sizes
    }
}

/// Precomputed per-molecule model inputs, reusable across epochs.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphInput {
    pub features: Array2<f64>,
    pub adjacency: NormalizedAdjacency,
    pub key: String,
}

impl GraphInput {
    pub fn new(graph: &MolecularGraph, key: impl Into<String>) -> Self {
        GraphInput {
            features: node_features(graph),
            adjacency: normalized_adjacency(graph),
            key: key.into(),
        }
    }
}

pub fn batch_graphs<'a, I>(graphs: I) -> Result<BatchedGraph, FeaturizeError>
where
    I: IntoIterator<Item = (&'a MolecularGraph, &'a str)>,
{
    let inputs: Vec<GraphInput> = graphs
        .into_iter()
        .map(|(g, key)| GraphInput::new(g, key))
        .collect();
    batch_inputs(inputs.iter())
}

/// Assembles the block-diagonal batch from precomputed inputs.
pub fn batch_inputs<'a, I>(inputs: I) -> Result<BatchedGraph, FeaturizeError>
where
    I: IntoIterator<Item = &'a GraphInput>,
{
    let inputs: Vec<&GraphInput> = inputs.into_iter().collect();
    if inputs.is_empty() {
        return Err(FeaturizeError::EmptyBatch);
    }
    let total: usize = inputs.iter().map(|g| g.adjacency.n).sum();
    let mut features = Array2::zeros((total, NODE_FEATURE_DIM));
    let mut entries = Vec::new();
    let mut graph_index = Vec::with_capacity(total);
    let mut molecule_keys = Vec::with_capacity(inputs.len());
    let mut offset = 0;
    for (g, input) in inputs.iter().enumerate() {
        let n = input.adjacency.n;
        features
            .slice_mut(ndarray::s![offset..offset + n, ..])
            .assign(&input.features);
        entries.extend(
            input
                .adjacency
                .entries
                .iter()
                .map(|&(i, j, w)| (i + offset, j + offset, w)),
        );
        graph_index.extend(std::iter::repeat_n(g, n));
        molecule_keys.push(input.key.clone());
        offset += n;
    }
    Ok(BatchedGraph {
        features,
        adjacency: NormalizedAdjacency { n: total, entries },
        graph_index,
        molecule_keys,
    })
}
