//! Six-layer GCN with a projected molecule embedding fused before every
//! convolution, global mean pooling and a two-layer classifier head.
//!
//! Gradients are derived by hand, layer by layer, in float64.

mod checkpoint;
pub mod layers;
mod network;
mod params;

use std::fmt;
use std::str::FromStr;

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, read_checkpoint, write_checkpoint, Checkpoint,
    CheckpointError,
};
pub use network::{
    forward, forward_trace, loss_and_gradients, predict_proba, project_embedding, ForwardTrace,
    LossOutput, Mode,
};
pub use params::{
    init_params, layer_param_counts, param_count, BatchNormState, Linear, ModelParams,
};

use crate::embedding::EmbeddingError;
use crate::featurize::NODE_FEATURE_DIM;

/// Where the projected embedding enters the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FusionMode {
    /// Concatenated onto node features before every convolution.
    PerLayer,
    /// Concatenated onto the pooled graph vector only.
    FinalOnly,
    /// Embedding unused: plain GCN.
    None,
}

impl FusionMode {
    pub fn as_str(self) -> &'static str {
        match self {
            FusionMode::PerLayer => "per_layer",
            FusionMode::FinalOnly => "final_only",
            FusionMode::None => "none",
        }
    }
}

impl fmt::Display for FusionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FusionMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "per_layer" => Ok(FusionMode::PerLayer),
            "final_only" => Ok(FusionMode::FinalOnly),
            "none" => Ok(FusionMode::None),
            other => Err(format!("unknown fusion mode {other:?}")),
        }
    }
}

/// Ordering inside each convolution block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BlockOrder {
    /// conv, batch norm, ReLU.
    ConvBnRelu,
    /// conv, ReLU, batch norm.
    ConvReluBn,
}

impl BlockOrder {
    pub fn as_str(self) -> &'static str {
        match self {
            BlockOrder::ConvBnRelu => "conv_bn_relu",
            BlockOrder::ConvReluBn => "conv_relu_bn",
        }
    }
}

impl fmt::Display for BlockOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BlockOrder {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "conv_bn_relu" => Ok(BlockOrder::ConvBnRelu),
            "conv_relu_bn" => Ok(BlockOrder::ConvReluBn),
            other => Err(format!("unknown block order {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub node_feat_dim: usize,
    pub embed_dim: usize,
    pub proj_dim: usize,
    pub hidden: usize,
    pub n_conv_layers: usize,
    pub n_classes: usize,
    pub dropout_p: f64,
    pub bn_eps: f64,
    pub bn_momentum: f64,
    pub fusion: FusionMode,
    pub block_order: BlockOrder,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            node_feat_dim: NODE_FEATURE_DIM,
            embed_dim: 768,
            proj_dim: 10,
            hidden: 64,
            n_conv_layers: 6,
            n_classes: 2,
            dropout_p: 0.5,
            bn_eps: 1e-5,
            bn_momentum: 0.1,
            fusion: FusionMode::PerLayer,
            block_order: BlockOrder::ConvBnRelu,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |reason: &str| Err(ModelError::InvalidConfig(reason.to_string()));
        if self.node_feat_dim == 0 || self.hidden == 0 || self.n_conv_layers == 0 {
            return bad("node_feat_dim, hidden and n_conv_layers must be positive");
        }
        if self.n_classes < 2 {
            return bad("n_classes must be at least 2");
        }
        if self.fusion != FusionMode::None && (self.embed_dim == 0 || self.proj_dim == 0) {
            return bad("embed_dim and proj_dim must be positive when fusion is enabled");
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return bad("dropout_p must be in [0, 1)");
        }
        if !(self.bn_eps >= 0.0 && self.bn_eps.is_finite()) {
            return bad("bn_eps must be finite and non-negative");
        }
        if !(0.0..=1.0).contains(&self.bn_momentum) {
            return bad("bn_momentum must be in [0, 1]");
        }
        Ok(())
    }

    /// Width of the fused embedding seen by convolution layers.
    pub(crate) fn conv_fusion_width(&self) -> usize {
        if self.fusion == FusionMode::PerLayer {
            self.proj_dim
        } else {
            0
        }
    }

    pub fn conv_input_width(&self, layer: usize) -> usize {
        let base = if layer == 0 {
            self.node_feat_dim
        } else {
            self.hidden
        };
        base + self.conv_fusion_width()
    }

    pub fn head_input_width(&self) -> usize {
        self.hidden
            + if self.fusion == FusionMode::FinalOnly {
                self.proj_dim
            } else {
                0
            }
    }

    pub fn uses_embedding(&self) -> bool {
        self.fusion != FusionMode::None
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("{what}: expected {expected}, found {found}")]
    DimMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error("batch norm needs at least 2 rows in train mode, got {rows}")]
    DegenerateBatch { rows: usize },
    #[error("label {label} out of range for {n_classes} classes")]
    BadLabel { label: usize, n_classes: usize },
}
