//! Stratified splitting, Adam, the training loop with early stopping on
//! validation F1, and evaluation.

use std::io::Write;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::embedding::EmbeddingTable;
use crate::featurize::{batch_inputs, FeaturizeError, GraphInput};
use crate::metrics::{MetricBundle, MetricsError};
use crate::model::layers::{cross_entropy, softmax};
use crate::model::{
    forward, init_params, loss_and_gradients, Mode, ModelConfig, ModelError, ModelParams,
};
use crate::pipeline::{validate_records, LabeledRecord, ValidationIssue};
use crate::smiles::parse;

/// Graphs per forward pass during evaluation. Eval-mode outputs do not
/// depend on it; it only bounds memory.
const EVAL_CHUNK: usize = 256;

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("dataset contains a single class")]
    SingleClassDataset,
    #[error("{} record(s) failed validation", .0.len())]
    Validation(Vec<ValidationIssue>),
    #[error("array {name}: shape does not match")]
    ShapeMismatch { name: String },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Featurize(#[from] FeaturizeError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without a validation-F1 improvement before stopping.
    pub patience: usize,
    pub val_fraction: f64,
    pub seed: u64,
    pub shuffle: bool,
    /// Weight the loss by inverse class frequency of the training split.
    pub class_weighting: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            batch_size: 32,
            max_epochs: 100,
            patience: 10,
            val_fraction: 0.1,
            seed: 0,
            shuffle: true,
            class_weighting: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::InvalidConfig(m.into()));
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be finite and non-negative");
        }
        if !((0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2)) {
            return bad("beta1 and beta2 must be in [0, 1)");
        }
        if !(self.adam_eps > 0.0) {
            return bad("adam_eps must be positive");
        }
        if self.batch_size < 2 {
            return bad("batch_size must be at least 2");
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return bad("val_fraction must be in (0, 1)");
        }
        Ok(())
    }
}

/// Index sets of a two-way split, each sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Per class `c` with `n_c` members, `round((1 - train_ratio) * n_c)`
/// seeded-random members go to test, the rest to train.
pub fn stratified_split(
    labels: &[usize],
    train_ratio: f64,
    seed: u64,
) -> Result<Split, TrainError> {
    if labels.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    if !(train_ratio > 0.0 && train_ratio < 1.0) {
        return Err(TrainError::InvalidConfig(
            "train ratio must be in (0, 1)".into(),
        ));
    }
    let n_classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
    for (i, &l) in labels.iter().enumerate() {
        by_class[l].push(i);
    }
    if by_class.iter().filter(|c| !c.is_empty()).count() < 2 {
        return Err(TrainError::SingleClassDataset);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut split = Split {
        train: Vec::new(),
        test: Vec::new(),
    };
    for mut members in by_class {
        members.shuffle(&mut rng);
        let n_test = ((1.0 - train_ratio) * members.len() as f64).round() as usize;
        split.test.extend_from_slice(&members[..n_test]);
        split.train.extend_from_slice(&members[n_test..]);
    }
    split.train.sort_unstable();
    split.test.sort_unstable();
    Ok(split)
}

/// Adam first and second moments plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: ModelParams,
    pub v: ModelParams,
    pub t: u64,
}

impl AdamState {
    pub fn new(params: &ModelParams) -> Self {
        AdamState {
            m: params.zeros_like(),
            v: params.zeros_like(),
            t: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

fn check_shapes(a: &ModelParams, b: &ModelParams) -> Result<(), TrainError> {
    let sa: Vec<_> = a.trainable().map(|(n, v)| (n, v.len())).collect();
    let sb: Vec<_> = b.trainable().map(|(n, v)| (n, v.len())).collect();
    if sa.len() != sb.len() {
        return Err(TrainError::ShapeMismatch {
            name: "parameter set".into(),
        });
    }
    for (x, y) in sa.into_iter().zip(sb) {
        if x != y {
            return Err(TrainError::ShapeMismatch { name: x.0 });
        }
    }
    Ok(())
}

/// One bias-corrected Adam update of every trainable array. Batch-norm
/// running statistics are left alone.
pub fn adam_step(
    params: &mut ModelParams,
    grads: &ModelParams,
    state: &mut AdamState,
    cfg: &AdamConfig,
) -> Result<(), TrainError> {
    check_shapes(params, grads)?;
    check_shapes(params, &state.m)?;
    check_shapes(params, &state.v)?;
    state.t += 1;
    let t = i32::try_from(state.t).unwrap_or(i32::MAX);
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    let g_arrays: Vec<&[f64]> = grads.trainable().map(|(_, g)| g).collect();
    let p_arrays = params.trainable_mut();
    let m_arrays = state.m.trainable_mut();
    let v_arrays = state.v.trainable_mut();
    for (((p, g), m), v) in p_arrays
        .into_iter()
        .zip(g_arrays)
        .zip(m_arrays)
        .zip(v_arrays)
    {
        for i in 0..p.len() {
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
            let m_hat = m[i] / c1;
            let v_hat = v[i] / c2;
            let step = cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
            // Skipping zero steps keeps lr = 0 bitwise inert, even for -0.0.
            if step != 0.0 {
                p[i] -= step;
            }
        }
    }
    Ok(())
}

/// Metrics of one evaluation pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub bundle: MetricBundle,
    /// Mean unweighted cross-entropy.
    pub loss: f64,
    pub predictions: Vec<usize>,
    /// Softmax probability of class 1 per record.
    pub positive_scores: Vec<f64>,
}

/// Prepared model inputs: one parsed, featurized graph per record.
pub struct PreparedData {
    pub inputs: Vec<GraphInput>,
    pub labels: Vec<usize>,
}

impl PreparedData {
    /// Parses and featurizes every record, and checks embedding coverage
    /// when `table` is given. All failures are reported together.
    pub fn new(
        records: &[LabeledRecord],
        table: Option<&EmbeddingTable>,
    ) -> Result<Self, TrainError> {
        if records.is_empty() {
            return Err(TrainError::EmptyDataset);
        }
        let issues = validate_records(records, table);
        if !issues.is_empty() {
            return Err(TrainError::Validation(issues));
        }
        let mut inputs = Vec::with_capacity(records.len());
        for r in records {
            let graph = parse(&r.smiles).expect("validated above");
            inputs.push(GraphInput::new(&graph, r.smiles.trim()));
        }
        Ok(PreparedData {
            inputs,
            labels: records.iter().map(|r| r.label).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }
}

fn evaluate_prepared(
    params: &ModelParams,
    config: &ModelConfig,
    data: &PreparedData,
    indices: &[usize],
    table: &EmbeddingTable,
) -> Result<Evaluation, TrainError> {
    if indices.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let mut predictions = Vec::with_capacity(indices.len());
    let mut positive_scores = Vec::with_capacity(indices.len());
    let mut loss_sum = 0.0;
    for chunk in indices.chunks(EVAL_CHUNK) {
        let batch = batch_inputs(chunk.iter().map(|&i| &data.inputs[i]))?;
        let labels: Vec<usize> = chunk.iter().map(|&i| data.labels[i]).collect();
        let logits = forward(params, config, &batch, table, Mode::Eval)?;
        let (loss, _) = cross_entropy(&logits, &labels, None)?;
        loss_sum += loss * chunk.len() as f64;
        let probs = softmax(&logits);
        for row in logits.rows() {
            // Ties go to class 0.
            predictions.push(usize::from(row[1] > row[0]));
        }
        positive_scores.extend(probs.column(1).iter().copied());
    }
    let truth: Vec<usize> = indices.iter().map(|&i| data.labels[i]).collect();
    Ok(Evaluation {
        bundle: MetricBundle::compute(&predictions, &truth, &positive_scores)?,
        loss: loss_sum / indices.len() as f64,
        predictions,
        positive_scores,
    })
}

/// Eval-mode metrics: argmax prediction (ties to class 0), class-1
/// probability as the AUC score.
pub fn evaluate_model(
    params: &ModelParams,
    config: &ModelConfig,
    records: &[LabeledRecord],
    table: &EmbeddingTable,
) -> Result<Evaluation, TrainError> {
    let data = PreparedData::new(records, config.uses_embedding().then_some(table))?;
    let all: Vec<usize> = (0..data.len()).collect();
    evaluate_prepared(params, config, &data, &all, table)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochReport {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
    pub val_f1: f64,
    /// Absent when the validation split holds a single class.
    pub val_auc: Option<f64>,
    pub seconds: f64,
}

pub const HISTORY_HEADER: &str = "epoch,train_loss,val_loss,val_acc,val_f1,val_auc,seconds";

/// Writes the history CSV. Floats use Rust's shortest round-trip form;
/// `seconds` is left empty unless `with_timing` is set, so that identical
/// runs produce identical files.
pub fn write_history<W: Write>(
    mut w: W,
    history: &[EpochReport],
    with_timing: bool,
) -> std::io::Result<()> {
    writeln!(w, "{HISTORY_HEADER}")?;
    for r in history {
        let auc = r.val_auc.map(|a| a.to_string()).unwrap_or_default();
        let secs = if with_timing {
            format!("{:.3}", r.seconds)
        } else {
            String::new()
        };
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            r.epoch, r.train_loss, r.val_loss, r.val_accuracy, r.val_f1, auc, secs
        )?;
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct FitOutcome {
    /// Parameters at the epoch with the best validation F1.
    pub best_params: ModelParams,
    pub best_epoch: usize,
    pub best_validation: Evaluation,
    pub history: Vec<EpochReport>,
    /// Dataset indices used for training and validation.
    pub split: Split,
}

fn class_weights(labels: &[usize], n_classes: usize) -> Vec<f64> {
    let mut counts = vec![0usize; n_classes];
    for &l in labels {
        counts[l] += 1;
    }
    let n = labels.len() as f64;
    counts
        .iter()
        .map(|&c| {
            if c == 0 {
                0.0
            } else {
                n / (n_classes as f64 * c as f64)
            }
        })
        .collect()
}

/// Contiguous batches of `size`; a trailing batch with fewer than two
/// graphs is merged into the one before it.
fn batch_ranges(n: usize, size: usize) -> Vec<std::ops::Range<usize>> {
    let mut out: Vec<std::ops::Range<usize>> =
        (0..n).step_by(size).map(|s| s..(s + size).min(n)).collect();
    if out.len() >= 2 && out.last().is_some_and(|r| r.len() < 2) {
        let last = out.pop().expect("non-empty");
        out.last_mut().expect("non-empty").end = last.end;
    }
    out
}

/// Model selection order: higher validation F1 wins; at equal F1 the lower
/// validation loss wins.
fn improves((f1, loss): (f64, f64), (best_f1, best_loss): (f64, f64)) -> bool {
    f1 > best_f1 || (f1 == best_f1 && loss < best_loss)
}

/// Holds out `val_fraction` of `records` (stratified), then trains.
pub fn fit(
    config: &ModelConfig,
    params: ModelParams,
    records: &[LabeledRecord],
    table: &EmbeddingTable,
    cfg: &TrainConfig,
    on_epoch: impl FnMut(&EpochReport),
) -> Result<FitOutcome, TrainError> {
    cfg.validate()?;
    config.validate()?;
    let labels: Vec<usize> = records.iter().map(|r| r.label).collect();
    let split = stratified_split(&labels, 1.0 - cfg.val_fraction, cfg.seed)?;
    fit_split(config, params, records, split, table, cfg, on_epoch)
}

/// Trains on `split.train` and selects on `split.test` (the validation
/// indices).
pub fn fit_split(
    config: &ModelConfig,
    mut params: ModelParams,
    records: &[LabeledRecord],
    split: Split,
    table: &EmbeddingTable,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochReport),
) -> Result<FitOutcome, TrainError> {
    cfg.validate()?;
    config.validate()?;
    check_shapes(&params, &init_params(config, 0)?)?;
    if config.uses_embedding() && table.dim() != config.embed_dim {
        return Err(ModelError::DimMismatch {
            what: "embedding table dim",
            expected: config.embed_dim,
            found: table.dim(),
        }
        .into());
    }
    if let Some(&bad) = records
        .iter()
        .map(|r| &r.label)
        .find(|&&l| l >= config.n_classes)
    {
        return Err(ModelError::BadLabel {
            label: bad,
            n_classes: config.n_classes,
        }
        .into());
    }
    let train_labels: Vec<usize> = split.train.iter().map(|&i| records[i].label).collect();
    if split.train.len() < 2 || split.test.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    if train_labels.iter().all(|&l| l == train_labels[0]) {
        return Err(TrainError::SingleClassDataset);
    }
    let data = PreparedData::new(records, config.uses_embedding().then_some(table))?;
    let weights = cfg
        .class_weighting
        .then(|| class_weights(&train_labels, config.n_classes));

    let adam = AdamConfig {
        lr: cfg.learning_rate,
        beta1: cfg.beta1,
        beta2: cfg.beta2,
        eps: cfg.adam_eps,
    };
    let mut state = AdamState::new(&params);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_0f_7a1e);
    let mut order = split.train.clone();
    let mut history = Vec::new();
    let mut best: Option<((f64, f64), usize, ModelParams, Evaluation)> = None;
    let mut stale = 0;
    let started = Instant::now();

    for epoch in 1..=cfg.max_epochs {
        if cfg.shuffle {
            order.shuffle(&mut rng);
        }
        let mut loss_sum = 0.0;
        for range in batch_ranges(order.len(), cfg.batch_size) {
            let idx = &order[range];
            let batch = batch_inputs(idx.iter().map(|&i| &data.inputs[i]))?;
            let labels: Vec<usize> = idx.iter().map(|&i| data.labels[i]).collect();
            let mode = Mode::Train {
                dropout_seed: rng.next_u64(),
            };
            let out = loss_and_gradients(
                &params,
                config,
                &batch,
                table,
                &labels,
                mode,
                weights.as_deref(),
            )?;
            out.trace
                .update_running_stats(&mut params, config.bn_momentum);
            adam_step(&mut params, &out.grads, &mut state, &adam)?;
            loss_sum += out.loss * idx.len() as f64;
        }
        let val = evaluate_prepared(&params, config, &data, &split.test, table)?;
        let report = EpochReport {
            epoch,
            train_loss: loss_sum / order.len() as f64,
            val_loss: val.loss,
            val_accuracy: val.bundle.scores.accuracy,
            val_f1: val.bundle.scores.f1,
            val_auc: val.bundle.auc_roc,
            seconds: started.elapsed().as_secs_f64(),
        };
        on_epoch(&report);
        history.push(report);
        let key = (val.bundle.scores.f1, val.loss);
        if best.as_ref().is_none_or(|(b, ..)| improves(key, *b)) {
            best = Some((key, epoch, params.clone(), val));
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                break;
            }
        }
    }

    let (best_params, best_epoch, best_validation) = match best {
        Some((_, e, p, v)) => (p, e, v),
        None => {
            // max_epochs = 0: report the untouched model.
            let v = evaluate_prepared(&params, config, &data, &split.test, table)?;
            (params, 0, v)
        }
    };
    Ok(FitOutcome {
        best_params,
        best_epoch,
        best_validation,
        history,
        split,
    })
}
