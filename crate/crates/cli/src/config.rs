//! Run configuration: `key = value` files with `#` comments, overridden by
//! `--set key=value` flags.

use gcn_llm::model::ModelConfig;
use gcn_llm::train::TrainConfig;

/// Every recognised key with a one-line description, in help order.
pub const KEYS: [(&str, &str); 21] = [
    ("embed_dim", "embedding width (default: the table's dim)"),
    ("proj_dim", "projected embedding width [10]"),
    ("hidden", "hidden channels [64]"),
    ("n_conv_layers", "graph convolution layers [6]"),
    ("dropout_p", "dropout after the first linear layer [0.5]"),
    ("bn_eps", "batch-norm epsilon [1e-5]"),
    ("bn_momentum", "batch-norm running-stat momentum [0.1]"),
    ("fusion", "per_layer | final_only | none [per_layer]"),
    ("block_order", "conv_bn_relu | conv_relu_bn [conv_bn_relu]"),
    ("learning_rate", "Adam step size [0.001]"),
    ("beta1", "Adam beta1 [0.9]"),
    ("beta2", "Adam beta2 [0.999]"),
    ("adam_eps", "Adam epsilon [1e-8]"),
    ("batch_size", "graphs per step, >= 2 [32]"),
    ("max_epochs", "epoch limit [100]"),
    (
        "patience",
        "epochs without validation-F1 gain before stopping [10]",
    ),
    (
        "val_fraction",
        "share of the training split held out for validation [0.1]",
    ),
    (
        "seed",
        "seed for splitting, init, shuffling and dropout [0]",
    ),
    ("shuffle", "reshuffle every epoch: true | false [true]"),
    (
        "class_weighting",
        "inverse class-frequency loss weights: true | false [false]",
    ),
    (
        "train_ratio",
        "train share of the stratified train/test split [0.8]",
    ),
];

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ConfigError {
    #[error("{origin}: unknown config key {key:?}")]
    UnknownKey { origin: String, key: String },
    #[error("{origin}: bad value {value:?} for {key}: {reason}")]
    BadValue {
        origin: String,
        key: String,
        value: String,
        reason: String,
    },
    #[error("{origin}: expected `key = value`, found {text:?}")]
    Syntax { origin: String, text: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub train_ratio: f64,
    /// Whether `embed_dim` was given explicitly.
    pub embed_dim_set: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            train_ratio: 0.8,
            embed_dim_set: false,
        }
    }
}

fn parse_value<T: std::str::FromStr>(origin: &str, key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.parse::<T>().map_err(|e| ConfigError::BadValue {
        origin: origin.to_string(),
        key: key.to_string(),
        value: value.to_string(),
        reason: e.to_string(),
    })
}

impl RunConfig {
    pub fn set(&mut self, origin: &str, key: &str, value: &str) -> Result<(), ConfigError> {
        let m = &mut self.model;
        let t = &mut self.train;
        macro_rules! put {
            ($field:expr) => {
                $field = parse_value(origin, key, value)?
            };
        }
        match key {
            "embed_dim" => {
                put!(m.embed_dim);
                self.embed_dim_set = true;
            }
            "proj_dim" => put!(m.proj_dim),
            "hidden" => put!(m.hidden),
            "n_conv_layers" => put!(m.n_conv_layers),
            "dropout_p" => put!(m.dropout_p),
            "bn_eps" => put!(m.bn_eps),
            "bn_momentum" => put!(m.bn_momentum),
            "fusion" => put!(m.fusion),
            "block_order" => put!(m.block_order),
            "learning_rate" => put!(t.learning_rate),
            "beta1" => put!(t.beta1),
            "beta2" => put!(t.beta2),
            "adam_eps" => put!(t.adam_eps),
            "batch_size" => put!(t.batch_size),
            "max_epochs" => put!(t.max_epochs),
            "patience" => put!(t.patience),
            "val_fraction" => put!(t.val_fraction),
            "seed" => put!(t.seed),
            "shuffle" => put!(t.shuffle),
            "class_weighting" => put!(t.class_weighting),
            "train_ratio" => put!(self.train_ratio),
            _ => {
                return Err(ConfigError::UnknownKey {
                    origin: origin.to_string(),
                    key: key.to_string(),
                })
            }
        }
        Ok(())
    }

    /// Applies a config file's contents; `name` labels error messages.
    pub fn apply_file(&mut self, name: &str, text: &str) -> Result<(), ConfigError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let origin = format!("{name}:{}", i + 1);
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                origin: origin.clone(),
                text: raw.to_string(),
            })?;
            self.set(&origin, key.trim(), value.trim())?;
        }
        Ok(())
    }

    /// Applies one `key=value` override.
    pub fn apply_override(&mut self, spec: &str) -> Result<(), ConfigError> {
        let (key, value) = spec.split_once('=').ok_or_else(|| ConfigError::Syntax {
            origin: "--set".into(),
            text: spec.to_string(),
        })?;
        self.set("--set", key.trim(), value.trim())
    }
}
