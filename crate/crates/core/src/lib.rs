//! GCN classifier for virtual screening with fused molecule embeddings.

pub mod embedding;
pub mod featurize;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod smiles;
pub mod synthetic;
pub mod train;
