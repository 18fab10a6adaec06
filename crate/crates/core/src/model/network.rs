use ndarray::{concatenate, s, Array1, Array2, Axis};

use super::layers::{
    affine, batch_norm, batch_norm_backward, cross_entropy, dropout_mask, relu, relu_backward,
    softmax, update_running_stats, BatchNormCache, NormMode,
};
use super::params::ModelParams;
use super::{BlockOrder, FusionMode, ModelConfig, ModelError};
use crate::embedding::EmbeddingTable;
use crate::featurize::BatchedGraph;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Running batch-norm statistics, no dropout.
    Eval,
    /// Batch statistics and a dropout mask drawn from `dropout_seed`.
    Train { dropout_seed: u64 },
}

impl Mode {
    fn norm(self) -> NormMode {
        match self {
            Mode::Eval => NormMode::Eval,
            Mode::Train { .. } => NormMode::Train,
        }
    }
}

#[derive(Debug, Clone)]
struct ConvTrace {
    /// `Â · input` (input includes the fused embedding when present).
    aggregated: Array2<f64>,
    relu_out: Array2<f64>,
    bn: BatchNormCache,
}

/// Activations retained for backpropagation.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub mode: Mode,
    embeddings: Option<Array2<f64>>,
    projected: Option<Array2<f64>>,
    convs: Vec<ConvTrace>,
    head_input: Array2<f64>,
    fc1_out: Array2<f64>,
    dropout: Option<Array2<f64>>,
    head_hidden: Array2<f64>,
    graph_sizes: Vec<usize>,
}

impl ForwardTrace {
    /// Folds this pass's batch statistics into the running statistics.
    pub fn update_running_stats(&self, params: &mut ModelParams, momentum: f64) {
        for (state, conv) in params.bn.iter_mut().zip(&self.convs) {
            update_running_stats(state, &conv.bn, momentum);
        }
    }

    pub fn projected(&self) -> Option<&Array2<f64>> {
        self.projected.as_ref()
    }
}

/// `e · W + b` for one embedding vector.
pub fn project_embedding(params: &ModelParams, e: &[f64]) -> Result<Array1<f64>, ModelError> {
    let proj = params
        .projection
        .as_ref()
        .ok_or_else(|| ModelError::InvalidConfig("model has no projection layer".into()))?;
    if e.len() != proj.weight.nrows() {
        return Err(ModelError::DimMismatch {
            what: "embedding width",
            expected: proj.weight.nrows(),
            found: e.len(),
        });
    }
    let e = ndarray::ArrayView1::from(e);
    Ok(e.dot(&proj.weight) + &proj.bias)
}

fn embedding_matrix(
    batch: &BatchedGraph,
    table: &EmbeddingTable,
    config: &ModelConfig,
) -> Result<Array2<f64>, ModelError> {
    let mut out = Array2::zeros((batch.n_graphs(), config.embed_dim));
    for (g, key) in batch.molecule_keys.iter().enumerate() {
        let v = table.lookup(key)?;
        if v.len() != config.embed_dim {
            return Err(ModelError::DimMismatch {
                what: "embedding width",
                expected: config.embed_dim,
                found: v.len(),
            });
        }
        out.row_mut(g).assign(&ndarray::ArrayView1::from(v));
    }
    Ok(out)
}

fn broadcast_to_nodes(per_graph: &Array2<f64>, graph_index: &[usize]) -> Array2<f64> {
    let mut out = Array2::zeros((graph_index.len(), per_graph.ncols()));
    for (n, &g) in graph_index.iter().enumerate() {
        out.row_mut(n).assign(&per_graph.row(g));
    }
    out
}

fn mean_pool(h: &Array2<f64>, graph_index: &[usize], sizes: &[usize]) -> Array2<f64> {
    let mut out = Array2::zeros((sizes.len(), h.ncols()));
    for (n, &g) in graph_index.iter().enumerate() {
        let mut row = out.row_mut(g);
        row += &h.row(n);
    }
    for (g, &size) in sizes.iter().enumerate() {
        out.row_mut(g).mapv_inplace(|v| v / size as f64);
    }
    out
}

fn check_batch(config: &ModelConfig, batch: &BatchedGraph) -> Result<(), ModelError> {
    if batch.features.ncols() != config.node_feat_dim {
        return Err(ModelError::DimMismatch {
            what: "node feature width",
            expected: config.node_feat_dim,
            found: batch.features.ncols(),
        });
    }
    Ok(())
}

/// Logits only; no trace is retained.
pub fn forward(
    params: &ModelParams,
    config: &ModelConfig,
    batch: &BatchedGraph,
    table: &EmbeddingTable,
    mode: Mode,
) -> Result<Array2<f64>, ModelError> {
    forward_trace(params, config, batch, table, mode).map(|(logits, _)| logits)
}

/// Class probabilities in eval mode.
pub fn predict_proba(
    params: &ModelParams,
    config: &ModelConfig,
    batch: &BatchedGraph,
    table: &EmbeddingTable,
) -> Result<Array2<f64>, ModelError> {
    forward(params, config, batch, table, Mode::Eval).map(|l| softmax(&l))
}

/// Forward pass keeping every activation needed by [`loss_and_gradients`].
pub fn forward_trace(
    params: &ModelParams,
    config: &ModelConfig,
    batch: &BatchedGraph,
    table: &EmbeddingTable,
    mode: Mode,
) -> Result<(Array2<f64>, ForwardTrace), ModelError> {
    check_batch(config, batch)?;
    let sizes = batch.graph_sizes();

    let (embeddings, projected) = match (&params.projection, config.fusion) {
        (_, FusionMode::None) => (None, None),
        (Some(proj), _) => {
            let e = embedding_matrix(batch, table, config)?;
            let p = affine(&e, proj);
            (Some(e), Some(p))
        }
        (None, _) => {
            return Err(ModelError::InvalidConfig(
                "fusion enabled but parameters lack a projection".into(),
            ))
        }
    };
    let node_proj = match (config.fusion, &projected) {
        (FusionMode::PerLayer, Some(p)) => Some(broadcast_to_nodes(p, &batch.graph_index)),
        _ => None,
    };

    let mut h = batch.features.clone();
    let mut convs = Vec::with_capacity(params.conv.len());
    for (conv, bn) in params.conv.iter().zip(&params.bn) {
        let input = match &node_proj {
            Some(pn) => concatenate(Axis(1), &[h.view(), pn.view()]).expect("same row count"),
            None => h,
        };
        if input.ncols() != conv.weight.nrows() {
            return Err(ModelError::DimMismatch {
                what: "conv input width",
                expected: conv.weight.nrows(),
                found: input.ncols(),
            });
        }
        let aggregated = batch.adjacency.matmul(&input);
        let z = affine(&aggregated, conv);
        let (relu_out, bn_cache, out) = match config.block_order {
            BlockOrder::ConvBnRelu => {
                let (y, cache) = batch_norm(&z, bn, config.bn_eps, mode.norm())?;
                let r = relu(&y);
                (r.clone(), cache, r)
            }
            BlockOrder::ConvReluBn => {
                let r = relu(&z);
                let (y, cache) = batch_norm(&r, bn, config.bn_eps, mode.norm())?;
                (r, cache, y)
            }
        };
        convs.push(ConvTrace {
            aggregated,
            relu_out,
            bn: bn_cache,
        });
        h = out;
    }

    let pooled = mean_pool(&h, &batch.graph_index, &sizes);
    let head_input = match (config.fusion, &projected) {
        (FusionMode::FinalOnly, Some(p)) => {
            concatenate(Axis(1), &[pooled.view(), p.view()]).expect("same row count")
        }
        _ => pooled,
    };
    if head_input.ncols() != params.fc1.weight.nrows() {
        return Err(ModelError::DimMismatch {
            what: "fc1 input width",
            expected: params.fc1.weight.nrows(),
            found: head_input.ncols(),
        });
    }
    let fc1_out = relu(&affine(&head_input, &params.fc1));
    let (dropout, head_hidden) = match mode {
        Mode::Train { dropout_seed } if config.dropout_p > 0.0 => {
            let mask = dropout_mask(
                fc1_out.nrows(),
                fc1_out.ncols(),
                config.dropout_p,
                dropout_seed,
            );
            let hidden = &fc1_out * &mask;
            (Some(mask), hidden)
        }
        _ => (None, fc1_out.clone()),
    };
    let logits = affine(&head_hidden, &params.fc2);

    Ok((
        logits,
        ForwardTrace {
            mode,
            embeddings,
            projected,
            convs,
            head_input,
            fc1_out,
            dropout,
            head_hidden,
            graph_sizes: sizes,
        },
    ))
}

#[derive(Debug, Clone)]
pub struct LossOutput {
    pub loss: f64,
    pub logits: Array2<f64>,
    pub grads: ModelParams,
    pub trace: ForwardTrace,
}

/// Mean softmax cross-entropy over the graphs of `batch` and its exact
/// gradient with respect to every trainable array.
///
/// Parameters are not modified; in train mode callers fold the batch
/// statistics in with [`ForwardTrace::update_running_stats`].
pub fn loss_and_gradients(
    params: &ModelParams,
    config: &ModelConfig,
    batch: &BatchedGraph,
    table: &EmbeddingTable,
    labels: &[usize],
    mode: Mode,
    class_weights: Option<&[f64]>,
) -> Result<LossOutput, ModelError> {
    let (logits, trace) = forward_trace(params, config, batch, table, mode)?;
    let (loss, dlogits) = cross_entropy(&logits, labels, class_weights)?;
    let mut grads = params.zeros_like();

    // Classifier head.
    grads.fc2.weight = trace.head_hidden.t().dot(&dlogits);
    grads.fc2.bias = dlogits.sum_axis(Axis(0));
    let mut d_hidden = dlogits.dot(&params.fc2.weight.t());
    if let Some(mask) = &trace.dropout {
        d_hidden *= mask;
    }
    relu_backward(&mut d_hidden, &trace.fc1_out);
    grads.fc1.weight = trace.head_input.t().dot(&d_hidden);
    grads.fc1.bias = d_hidden.sum_axis(Axis(0));
    let d_head_input = d_hidden.dot(&params.fc1.weight.t());

    let hidden = config.hidden;
    let mut d_projected: Option<Array2<f64>> =
        trace.projected.as_ref().map(|p| Array2::zeros(p.raw_dim()));
    if config.fusion == FusionMode::FinalOnly {
        if let Some(dp) = d_projected.as_mut() {
            *dp += &d_head_input.slice(s![.., hidden..]);
        }
    }
    let d_pooled = d_head_input.slice(s![.., ..hidden]);

    // Mean pooling.
    let mut dh = Array2::zeros((batch.n_nodes(), hidden));
    for (n, &g) in batch.graph_index.iter().enumerate() {
        let scale = 1.0 / trace.graph_sizes[g] as f64;
        dh.row_mut(n).assign(&(&d_pooled.row(g) * scale));
    }

    // Convolution blocks, last to first.
    let fusion_width = config.conv_fusion_width();
    let mut d_node_proj: Option<Array2<f64>> =
        (fusion_width > 0).then(|| Array2::zeros((batch.n_nodes(), fusion_width)));
    for l in (0..params.conv.len()).rev() {
        let ct = &trace.convs[l];
        let bn = &params.bn[l];
        let dz = match config.block_order {
            BlockOrder::ConvBnRelu => {
                relu_backward(&mut dh, &ct.relu_out);
                let (dx, dgamma, dbeta) = batch_norm_backward(&dh, &bn.gamma, &ct.bn);
                grads.bn[l].gamma = dgamma;
                grads.bn[l].beta = dbeta;
                dx
            }
            BlockOrder::ConvReluBn => {
                let (mut dx, dgamma, dbeta) = batch_norm_backward(&dh, &bn.gamma, &ct.bn);
                grads.bn[l].gamma = dgamma;
                grads.bn[l].beta = dbeta;
                relu_backward(&mut dx, &ct.relu_out);
                dx
            }
        };
        grads.conv[l].weight = ct.aggregated.t().dot(&dz);
        grads.conv[l].bias = dz.sum_axis(Axis(0));
        let d_aggregated = dz.dot(&params.conv[l].weight.t());
        // Â is symmetric, so Âᵀ · d = Â · d.
        let d_input = batch.adjacency.matmul(&d_aggregated);
        let width = d_input.ncols() - fusion_width;
        if let Some(dpn) = d_node_proj.as_mut() {
            *dpn += &d_input.slice(s![.., width..]);
        }
        dh = d_input.slice(s![.., ..width]).to_owned();
    }

    if let (Some(dpn), Some(dp)) = (&d_node_proj, d_projected.as_mut()) {
        for (n, &g) in batch.graph_index.iter().enumerate() {
            let mut row = dp.row_mut(g);
            row += &dpn.row(n);
        }
    }
    if let (Some(dp), Some(e), Some(gp)) =
        (&d_projected, &trace.embeddings, grads.projection.as_mut())
    {
        gp.weight = e.t().dot(dp);
        gp.bias = dp.sum_axis(Axis(0));
    }

    Ok(LossOutput {
        loss,
        logits,
        grads,
        trace,
    })
}
