//! Forward and backward kernels for the individual layers.

use ndarray::{Array1, Array2, Axis, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::params::{BatchNormState, Linear};
use super::ModelError;
use crate::featurize::NormalizedAdjacency;

/// `Â · H · W + b`, no activation.
pub fn graph_conv(
    adjacency: &NormalizedAdjacency,
    h: &Array2<f64>,
    layer: &Linear,
) -> Result<Array2<f64>, ModelError> {
    if h.ncols() != layer.weight.nrows() {
        return Err(ModelError::DimMismatch {
            what: "graph_conv input width",
            expected: layer.weight.nrows(),
            found: h.ncols(),
        });
    }
    if h.nrows() != adjacency.n {
        return Err(ModelError::DimMismatch {
            what: "graph_conv node count",
            expected: adjacency.n,
            found: h.nrows(),
        });
    }
    Ok(affine(&adjacency.matmul(h), layer))
}

pub fn affine(x: &Array2<f64>, layer: &Linear) -> Array2<f64> {
    let mut out = x.dot(&layer.weight);
    out += &layer.bias;
    out
}

pub fn relu(x: &Array2<f64>) -> Array2<f64> {
    x.mapv(|v| v.max(0.0))
}

/// Zeroes `grad` wherever the ReLU output was not positive.
pub fn relu_backward(grad: &mut Array2<f64>, output: &Array2<f64>) {
    Zip::from(grad).and(output).for_each(|g, &o| {
        if o <= 0.0 {
            *g = 0.0;
        }
    });
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormMode {
    Train,
    Eval,
}

/// Values kept from a batch-norm forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormCache {
    pub x_hat: Array2<f64>,
    pub inv_std: Array1<f64>,
    /// Statistics were computed from the batch (train) rather than read
    /// from the running state (eval).
    pub batch_stats: bool,
    pub batch_mean: Array1<f64>,
    /// Unbiased (n - 1) variance; zero when n < 2.
    pub batch_var_unbiased: Array1<f64>,
}

/// Per-column standardization. Train mode uses the biased batch variance;
/// eval mode reads the running statistics. Running statistics are not
/// modified here (see [`update_running_stats`]).
pub fn batch_norm(
    x: &Array2<f64>,
    state: &BatchNormState,
    eps: f64,
    mode: NormMode,
) -> Result<(Array2<f64>, BatchNormCache), ModelError> {
    let n = x.nrows();
    if x.ncols() != state.gamma.len() {
        return Err(ModelError::DimMismatch {
            what: "batch_norm width",
            expected: state.gamma.len(),
            found: x.ncols(),
        });
    }
    let (mean, var, batch_stats, unbiased) = match mode {
        NormMode::Train => {
            if n < 2 {
                return Err(ModelError::DegenerateBatch { rows: n });
            }
            let mean = x.mean_axis(Axis(0)).expect("non-empty");
            let centered = x - &mean;
            let sq = centered.mapv(|v| v * v).sum_axis(Axis(0));
            let biased = &sq / n as f64;
            let unbiased = &sq / (n - 1) as f64;
            (mean, biased, true, unbiased)
        }
        NormMode::Eval => {
            if n < 1 {
                return Err(ModelError::DegenerateBatch { rows: n });
            }
            (
                state.running_mean.clone(),
                state.running_var.clone(),
                false,
                Array1::zeros(x.ncols()),
            )
        }
    };
    let inv_std = var.mapv(|v| 1.0 / (v + eps).sqrt());
    let x_hat = (x - &mean) * &inv_std;
    let y = &x_hat * &state.gamma + &state.beta;
    Ok((
        y,
        BatchNormCache {
            x_hat,
            inv_std,
            batch_stats,
            batch_mean: mean,
            batch_var_unbiased: unbiased,
        },
    ))
}

/// Returns `(dx, dgamma, dbeta)`.
pub fn batch_norm_backward(
    dy: &Array2<f64>,
    gamma: &Array1<f64>,
    cache: &BatchNormCache,
) -> (Array2<f64>, Array1<f64>, Array1<f64>) {
    let dbeta = dy.sum_axis(Axis(0));
    let dgamma = (dy * &cache.x_hat).sum_axis(Axis(0));
    let dx_hat = dy * gamma;
    let dx = if cache.batch_stats {
        let n = dy.nrows() as f64;
        let sum_dxh = dx_hat.sum_axis(Axis(0));
        let sum_dxh_xh = (&dx_hat * &cache.x_hat).sum_axis(Axis(0));
        let scale = &cache.inv_std / n;
        let mut dx = dx_hat * n;
        dx -= &sum_dxh;
        dx -= &(&cache.x_hat * &sum_dxh_xh);
        dx * &scale
    } else {
        dx_hat * &cache.inv_std
    };
    (dx, dgamma, dbeta)
}

/// `run <- (1 - m) run + m batch`, variance tracked unbiased.
pub fn update_running_stats(state: &mut BatchNormState, cache: &BatchNormCache, momentum: f64) {
    if !cache.batch_stats {
        return;
    }
    state.running_mean = &state.running_mean * (1.0 - momentum) + &cache.batch_mean * momentum;
    state.running_var =
        &state.running_var * (1.0 - momentum) + &cache.batch_var_unbiased * momentum;
}

/// Inverted-dropout multiplier: each entry is 0 with probability `p`,
/// otherwise `1 / (1 - p)`.
pub fn dropout_mask(rows: usize, cols: usize, p: f64, seed: u64) -> Array2<f64> {
    if p == 0.0 {
        return Array2::ones((rows, cols));
    }
    let keep = 1.0 / (1.0 - p);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_simple_fn((rows, cols), || {
        if rng.random::<f64>() < p {
            0.0
        } else {
            keep
        }
    })
}

/// Row-wise softmax.
pub fn softmax(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row /= sum;
    }
    out
}

/// Weighted mean softmax cross-entropy (natural log) and its gradient with
/// respect to the logits. Sample `i` has weight `class_weights[labels[i]]`
/// (all ones when `None`); the loss is normalized by the total weight.
pub fn cross_entropy(
    logits: &Array2<f64>,
    labels: &[usize],
    class_weights: Option<&[f64]>,
) -> Result<(f64, Array2<f64>), ModelError> {
    let (n, k) = logits.dim();
    if labels.len() != n {
        return Err(ModelError::DimMismatch {
            what: "label count",
            expected: n,
            found: labels.len(),
        });
    }
    if let Some(&label) = labels.iter().find(|&&l| l >= k) {
        return Err(ModelError::BadLabel {
            label,
            n_classes: k,
        });
    }
    let weight = |c: usize| class_weights.map_or(1.0, |w| w[c]);
    let total: f64 = labels.iter().map(|&c| weight(c)).sum();
    let mut grad = softmax(logits);
    let mut loss = 0.0;
    for (i, &c) in labels.iter().enumerate() {
        let row = logits.row(i);
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        let w = weight(c);
        loss += w * (lse - row[c]);
        grad[[i, c]] -= 1.0;
        grad.row_mut(i).mapv_inplace(|g| g * w / total);
    }
    Ok((loss / total, grad))
}
