use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{FusionMode, ModelConfig, ModelError};

/// Dense affine map `x · weight + bias`, weight stored `in × out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Linear {
    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Linear {
            weight: Array2::zeros((fan_in, fan_out)),
            bias: Array1::zeros(fan_out),
        }
    }

    fn glorot(fan_in: usize, fan_out: usize, rng: &mut ChaCha8Rng) -> Self {
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let weight =
            Array2::from_shape_simple_fn((fan_in, fan_out), || rng.random_range(-bound..=bound));
        Linear {
            weight,
            bias: Array1::zeros(fan_out),
        }
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormState {
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
    pub running_mean: Array1<f64>,
    /// Unbiased (n - 1) running variance.
    pub running_var: Array1<f64>,
}

impl BatchNormState {
    pub fn new(width: usize) -> Self {
        BatchNormState {
            gamma: Array1::ones(width),
            beta: Array1::zeros(width),
            running_mean: Array1::zeros(width),
            running_var: Array1::ones(width),
        }
    }
}

/// All arrays of the network. Gradients use the same type; their running
/// statistics are unused and stay zero.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    /// Absent when fusion is disabled.
    pub projection: Option<Linear>,
    pub conv: Vec<Linear>,
    pub bn: Vec<BatchNormState>,
    pub fc1: Linear,
    pub fc2: Linear,
}

/// Glorot-uniform weights, zero biases, identity batch norm.
///
/// Matrices are drawn in declaration order (projection, convolutions,
/// fc1, fc2) from a ChaCha8 stream seeded with `seed`.
pub fn init_params(config: &ModelConfig, seed: u64) -> Result<ModelParams, ModelError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let projection = config
        .uses_embedding()
        .then(|| Linear::glorot(config.embed_dim, config.proj_dim, &mut rng));
    let conv = (0..config.n_conv_layers)
        .map(|l| Linear::glorot(config.conv_input_width(l), config.hidden, &mut rng))
        .collect();
    let bn = (0..config.n_conv_layers)
        .map(|_| BatchNormState::new(config.hidden))
        .collect();
    let fc1 = Linear::glorot(config.head_input_width(), config.hidden, &mut rng);
    let fc2 = Linear::glorot(config.hidden, config.n_classes, &mut rng);
    Ok(ModelParams {
        projection,
        conv,
        bn,
        fc1,
        fc2,
    })
}

/// Trainable scalar count implied by `config` (running statistics excluded).
pub fn param_count(config: &ModelConfig) -> usize {
    layer_param_counts(config).iter().map(|(_, n)| n).sum()
}

/// Trainable scalars per layer, in network order.
pub fn layer_param_counts(config: &ModelConfig) -> Vec<(String, usize)> {
    let mut rows = Vec::new();
    if config.fusion != FusionMode::None {
        rows.push((
            "projection".to_string(),
            config.embed_dim * config.proj_dim + config.proj_dim,
        ));
    }
    for l in 0..config.n_conv_layers {
        rows.push((
            format!("conv{}", l + 1),
            config.conv_input_width(l) * config.hidden + config.hidden,
        ));
        rows.push((format!("bn{}", l + 1), 2 * config.hidden));
    }
    rows.push((
        "fc1".to_string(),
        config.head_input_width() * config.hidden + config.hidden,
    ));
    rows.push((
        "fc2".to_string(),
        config.hidden * config.n_classes + config.n_classes,
    ));
    rows
}

impl ModelParams {
    /// Same structure, every array zero (gradient accumulator / Adam moments).
    pub fn zeros_like(&self) -> Self {
        let zero_lin = |l: &Linear| Linear::zeros(l.weight.nrows(), l.weight.ncols());
        ModelParams {
            projection: self.projection.as_ref().map(zero_lin),
            conv: self.conv.iter().map(zero_lin).collect(),
            bn: self
                .bn
                .iter()
                .map(|b| BatchNormState {
                    gamma: Array1::zeros(b.gamma.len()),
                    beta: Array1::zeros(b.beta.len()),
                    running_mean: Array1::zeros(b.running_mean.len()),
                    running_var: Array1::zeros(b.running_var.len()),
                })
                .collect(),
            fc1: zero_lin(&self.fc1),
            fc2: zero_lin(&self.fc2),
        }
    }

    pub fn layer_param_counts(&self) -> Vec<(String, usize)> {
        let mut rows = Vec::new();
        if let Some(p) = &self.projection {
            rows.push(("projection".to_string(), p.param_count()));
        }
        for (l, (c, b)) in self.conv.iter().zip(&self.bn).enumerate() {
            rows.push((format!("conv{}", l + 1), c.param_count()));
            rows.push((format!("bn{}", l + 1), b.gamma.len() + b.beta.len()));
        }
        rows.push(("fc1".to_string(), self.fc1.param_count()));
        rows.push(("fc2".to_string(), self.fc2.param_count()));
        rows
    }

    pub fn trainable_count(&self) -> usize {
        self.trainable().map(|(_, a)| a.len()).sum()
    }

    /// Trainable arrays as `(name, values)` in checkpoint order.
    pub fn trainable(&self) -> impl Iterator<Item = (String, &[f64])> {
        let mut out: Vec<(String, &[f64])> = Vec::new();
        if let Some(p) = &self.projection {
            out.push(("proj_w".into(), slice(&p.weight)));
            out.push(("proj_b".into(), p.bias.as_slice().expect("contiguous")));
        }
        for (l, (c, b)) in self.conv.iter().zip(&self.bn).enumerate() {
            out.push((format!("conv{l}_w"), slice(&c.weight)));
            out.push((format!("conv{l}_b"), c.bias.as_slice().expect("contiguous")));
            out.push((
                format!("bn{l}_gamma"),
                b.gamma.as_slice().expect("contiguous"),
            ));
            out.push((
                format!("bn{l}_beta"),
                b.beta.as_slice().expect("contiguous"),
            ));
        }
        out.push(("fc1_w".into(), slice(&self.fc1.weight)));
        out.push((
            "fc1_b".into(),
            self.fc1.bias.as_slice().expect("contiguous"),
        ));
        out.push(("fc2_w".into(), slice(&self.fc2.weight)));
        out.push((
            "fc2_b".into(),
            self.fc2.bias.as_slice().expect("contiguous"),
        ));
        out.into_iter()
    }

    /// Mutable counterpart of [`ModelParams::trainable`], same order.
    pub fn trainable_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        if let Some(p) = &mut self.projection {
            out.push(p.weight.as_slice_mut().expect("contiguous"));
            out.push(p.bias.as_slice_mut().expect("contiguous"));
        }
        for (c, b) in self.conv.iter_mut().zip(&mut self.bn) {
            out.push(c.weight.as_slice_mut().expect("contiguous"));
            out.push(c.bias.as_slice_mut().expect("contiguous"));
            out.push(b.gamma.as_slice_mut().expect("contiguous"));
            out.push(b.beta.as_slice_mut().expect("contiguous"));
        }
        out.push(self.fc1.weight.as_slice_mut().expect("contiguous"));
        out.push(self.fc1.bias.as_slice_mut().expect("contiguous"));
        out.push(self.fc2.weight.as_slice_mut().expect("contiguous"));
        out.push(self.fc2.bias.as_slice_mut().expect("contiguous"));
        out
    }

    /// Every array, trainable and running statistics, with its shape, in
    /// the fixed checkpoint order.
    pub fn named_arrays(&self) -> Vec<(String, Vec<usize>, &[f64])> {
        let mut out = Vec::new();
        if let Some(p) = &self.projection {
            out.push(("proj_w".into(), p.weight.shape().to_vec(), slice(&p.weight)));
            out.push(("proj_b".into(), p.bias.shape().to_vec(), vslice(&p.bias)));
        }
        for (l, (c, b)) in self.conv.iter().zip(&self.bn).enumerate() {
            out.push((
                format!("conv{l}_w"),
                c.weight.shape().to_vec(),
                slice(&c.weight),
            ));
            out.push((
                format!("conv{l}_b"),
                c.bias.shape().to_vec(),
                vslice(&c.bias),
            ));
            out.push((
                format!("bn{l}_gamma"),
                b.gamma.shape().to_vec(),
                vslice(&b.gamma),
            ));
            out.push((
                format!("bn{l}_beta"),
                b.beta.shape().to_vec(),
                vslice(&b.beta),
            ));
            out.push((
                format!("bn{l}_running_mean"),
                b.running_mean.shape().to_vec(),
                vslice(&b.running_mean),
            ));
            out.push((
                format!("bn{l}_running_var"),
                b.running_var.shape().to_vec(),
                vslice(&b.running_var),
            ));
        }
        out.push((
            "fc1_w".into(),
            self.fc1.weight.shape().to_vec(),
            slice(&self.fc1.weight),
        ));
        out.push((
            "fc1_b".into(),
            self.fc1.bias.shape().to_vec(),
            vslice(&self.fc1.bias),
        ));
        out.push((
            "fc2_w".into(),
            self.fc2.weight.shape().to_vec(),
            slice(&self.fc2.weight),
        ));
        out.push((
            "fc2_b".into(),
            self.fc2.bias.shape().to_vec(),
            vslice(&self.fc2.bias),
        ));
        out
    }

    /// Mutable counterpart of [`ModelParams::named_arrays`], same order.
    pub(crate) fn all_arrays_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        if let Some(p) = &mut self.projection {
            out.push(p.weight.as_slice_mut().expect("contiguous"));
            out.push(p.bias.as_slice_mut().expect("contiguous"));
        }
        for (c, b) in self.conv.iter_mut().zip(&mut self.bn) {
            out.push(c.weight.as_slice_mut().expect("contiguous"));
            out.push(c.bias.as_slice_mut().expect("contiguous"));
            out.push(b.gamma.as_slice_mut().expect("contiguous"));
            out.push(b.beta.as_slice_mut().expect("contiguous"));
            out.push(b.running_mean.as_slice_mut().expect("contiguous"));
            out.push(b.running_var.as_slice_mut().expect("contiguous"));
        }
        out.push(self.fc1.weight.as_slice_mut().expect("contiguous"));
        out.push(self.fc1.bias.as_slice_mut().expect("contiguous"));
        out.push(self.fc2.weight.as_slice_mut().expect("contiguous"));
        out.push(self.fc2.bias.as_slice_mut().expect("contiguous"));
        out
    }
}

fn slice(a: &Array2<f64>) -> &[f64] {
    a.as_slice().expect("standard layout")
}

fn vslice(a: &Array1<f64>) -> &[f64] {
    a.as_slice().expect("contiguous")
}
