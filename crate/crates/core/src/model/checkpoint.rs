//! `GCNLLM v1` checkpoints.
//!
//! A UTF-8 header followed by raw little-endian float64 data:
//!
//! ```text
//! GCNLLM v1
//! config hidden 64
//! ...
//! seed 42
//! arrays 40
//! proj_w 768x10
//! proj_b 10
//! ...
//! data
//! <binary values, arrays concatenated in header order>
//! ```

use std::fs;
use std::io;
use std::path::Path;

use super::params::init_params;
use super::{BlockOrder, FusionMode, ModelConfig, ModelError, ModelParams};

const MAGIC: &str = "GCNLLM v1";

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("io error: {0}")]
    Io(#[from] io::Error),
    #[error("checkpoint header: {0}")]
    Header(String),
    #[error("array {name}: expected shape {expected}, found {found}")]
    ShapeMismatch {
        name: String,
        expected: String,
        found: String,
    },
    #[error("checkpoint data: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub params: ModelParams,
    pub seed: u64,
}

fn shape_str(shape: &[usize]) -> String {
    shape
        .iter()
        .map(usize::to_string)
        .collect::<Vec<_>>()
        .join("x")
}

pub fn encode_checkpoint(ckpt: &Checkpoint) -> Vec<u8> {
    let c = &ckpt.config;
    let mut header = format!("{MAGIC}\n");
    let fields: [(&str, String); 11] = [
        ("node_feat_dim", c.node_feat_dim.to_string()),
        ("embed_dim", c.embed_dim.to_string()),
        ("proj_dim", c.proj_dim.to_string()),
        ("hidden", c.hidden.to_string()),
        ("n_conv_layers", c.n_conv_layers.to_string()),
        ("n_classes", c.n_classes.to_string()),
        ("dropout_p", format!("{:?}", c.dropout_p)),
        ("bn_eps", format!("{:?}", c.bn_eps)),
        ("bn_momentum", format!("{:?}", c.bn_momentum)),
        ("fusion", c.fusion.to_string()),
        ("block_order", c.block_order.to_string()),
    ];
    for (k, v) in fields {
        header.push_str(&format!("config {k} {v}\n"));
    }
    header.push_str(&format!("seed {}\n", ckpt.seed));
    let arrays = ckpt.params.named_arrays();
    header.push_str(&format!("arrays {}\n", arrays.len()));
    for (name, shape, _) in &arrays {
        header.push_str(&format!("{name} {}\n", shape_str(shape)));
    }
    header.push_str("data\n");
    let mut out = header.into_bytes();
    for (_, _, values) in &arrays {
        for v in *values {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn write_checkpoint(path: impl AsRef<Path>, ckpt: &Checkpoint) -> io::Result<()> {
    fs::write(path, encode_checkpoint(ckpt))
}

pub fn read_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint, CheckpointError> {
    decode_checkpoint(&fs::read(path)?)
}

fn take_line<'a>(bytes: &'a [u8], pos: &mut usize) -> Result<&'a str, CheckpointError> {
    let rest = &bytes[*pos..];
    let end = rest
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| CheckpointError::Header("unterminated header".into()))?;
    *pos += end + 1;
    std::str::from_utf8(&rest[..end])
        .map_err(|_| CheckpointError::Header("non-UTF-8 header".into()))
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint, CheckpointError> {
    let mut pos = 0;
    if take_line(bytes, &mut pos)? != MAGIC {
        return Err(CheckpointError::Header(format!("missing `{MAGIC}` magic")));
    }
    let mut config = ModelConfig::default();
    let mut seen = std::collections::HashSet::new();
    let seed;
    loop {
        let line = take_line(bytes, &mut pos)?;
        let mut parts = line.split(' ');
        match parts.next() {
            Some("config") => {
                let (Some(key), Some(value), None) = (parts.next(), parts.next(), parts.next())
                else {
                    return Err(CheckpointError::Header(format!("bad config line {line:?}")));
                };
                apply_config(&mut config, key, value)?;
                seen.insert(key.to_string());
            }
            Some("seed") => {
                seed = parts
                    .next()
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| CheckpointError::Header(format!("bad seed line {line:?}")))?;
                break;
            }
            _ => return Err(CheckpointError::Header(format!("unexpected line {line:?}"))),
        }
    }
    if seen.len() != 11 {
        return Err(CheckpointError::Header("incomplete config block".into()));
    }

    let mut params = init_params(&config, 0)?;
    let expected = params
        .named_arrays()
        .into_iter()
        .map(|(n, s, _)| (n, shape_str(&s)))
        .collect::<Vec<_>>();
    let count_line = take_line(bytes, &mut pos)?;
    let count: usize = count_line
        .strip_prefix("arrays ")
        .and_then(|c| c.parse().ok())
        .ok_or_else(|| CheckpointError::Header(format!("bad arrays line {count_line:?}")))?;
    if count != expected.len() {
        return Err(CheckpointError::Header(format!(
            "config implies {} arrays, header lists {count}",
            expected.len()
        )));
    }
    for (name, shape) in &expected {
        let line = take_line(bytes, &mut pos)?;
        let (got_name, got_shape) = line
            .split_once(' ')
            .ok_or_else(|| CheckpointError::Header(format!("bad array line {line:?}")))?;
        if got_name != name {
            return Err(CheckpointError::Header(format!(
                "expected array {name}, found {got_name}"
            )));
        }
        if got_shape != shape {
            return Err(CheckpointError::ShapeMismatch {
                name: name.clone(),
                expected: shape.clone(),
                found: got_shape.to_string(),
            });
        }
    }
    if take_line(bytes, &mut pos)? != "data" {
        return Err(CheckpointError::Header("missing data marker".into()));
    }

    let data = &bytes[pos..];
    let mut arrays = params.all_arrays_mut();
    let total: usize = arrays.iter().map(|a| a.len()).sum();
    if data.len() != total * 8 {
        return Err(CheckpointError::Truncated {
            expected: total * 8,
            found: data.len(),
        });
    }
    let mut chunks = data.chunks_exact(8);
    for array in arrays.iter_mut() {
        for v in array.iter_mut() {
            let chunk = chunks.next().expect("length checked");
            *v = f64::from_le_bytes(chunk.try_into().expect("8 bytes"));
        }
    }
    Ok(Checkpoint {
        config,
        params,
        seed,
    })
}

fn apply_config(config: &mut ModelConfig, key: &str, value: &str) -> Result<(), CheckpointError> {
    let bad = || CheckpointError::Header(format!("bad value {value:?} for {key}"));
    let int = || value.parse::<usize>().map_err(|_| bad());
    let float = || value.parse::<f64>().map_err(|_| bad());
    match key {
        "node_feat_dim" => config.node_feat_dim = int()?,
        "embed_dim" => config.embed_dim = int()?,
        "proj_dim" => config.proj_dim = int()?,
        "hidden" => config.hidden = int()?,
        "n_conv_layers" => config.n_conv_layers = int()?,
        "n_classes" => config.n_classes = int()?,
        "dropout_p" => config.dropout_p = float()?,
        "bn_eps" => config.bn_eps = float()?,
        "bn_momentum" => config.bn_momentum = float()?,
        "fusion" => config.fusion = value.parse::<FusionMode>().map_err(|_| bad())?,
        "block_order" => config.block_order = value.parse::<BlockOrder>().map_err(|_| bad())?,
        other => {
            return Err(CheckpointError::Header(format!(
                "unknown config key {other}"
            )))
        }
    }
    Ok(())
}
