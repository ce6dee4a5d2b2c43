//! Versioned binary checkpoints.
//!
//! Layout (all integers little-endian; full byte map in `docs/format.md`):
//!
//! ```text
//! offset  size  field
//! 0       8     magic "GRITCKPT"
//! 8       4     format version (currently 1)
//! 12      1     element width in bytes (4 = f32, 8 = f64)
//! 13      1     gmp_skip_padding flag (0/1)
//! 14      4     vocab_size (L)
//! 18      4     delta_buckets
//! 22      4     embedding_dim
//! 26      4     hidden_dim
//! 30      8     init seed
//! 38      ...   parameter values, IEEE-754 little-endian, in the fixed
//!               order embedding, forward_lstm.{w_ih,w_hh,bias},
//!               backward_lstm.{w_ih,w_hh,bias}, fc.{weight,bias}
//! end-32  32    SHA-256 of every preceding byte
//! ```
//!
//! A reload is bit-exact: saving and loading reproduces the same forward
//! outputs to the last bit.

use std::path::Path;

use sha2::{Digest, Sha256};
use thiserror::Error;

use super::{GritNet, GritNetConfig};
use crate::events::CourseSchema;
use crate::numeric::{Parameter, Scalar, Tensor};

const MAGIC: &[u8; 8] = b"GRITCKPT";
const VERSION: u32 = 1;
const HEADER_LEN: usize = 38;
const DIGEST_LEN: usize = 32;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("not a checkpoint file (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(u32),
    #[error("checkpoint stores {found}-byte elements, expected {expected}")]
    PrecisionMismatch { found: u8, expected: u8 },
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error(
        "checkpoint vocabulary ({vocab} actions, {deltas} delta buckets) does not match the \
         schema ({schema_vocab} actions, {schema_deltas} delta buckets)"
    )]
    SchemaMismatch {
        vocab: u32,
        deltas: u32,
        schema_vocab: u32,
        schema_deltas: u32,
    },
}

fn io_err(path: &Path, source: std::io::Error) -> CheckpointError {
    CheckpointError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Serializes config and parameters to the format above.
pub fn checkpoint_bytes<F: Scalar>(net: &GritNet<F>) -> Vec<u8> {
    let mut bytes = Vec::with_capacity(HEADER_LEN);
    bytes.extend_from_slice(MAGIC);
    bytes.extend_from_slice(&VERSION.to_le_bytes());
    bytes.push(F::WIDTH);
    bytes.push(u8::from(net.config.gmp_skip_padding));
    bytes.extend_from_slice(&net.config.vocab_size.to_le_bytes());
    bytes.extend_from_slice(&net.config.delta_buckets.to_le_bytes());
    bytes.extend_from_slice(&net.config.embedding_dim.to_le_bytes());
    bytes.extend_from_slice(&net.config.hidden_dim.to_le_bytes());
    bytes.extend_from_slice(&net.config.seed.to_le_bytes());
    for (_, param) in net.named_params() {
        for &v in param.value.data() {
            v.write_le(&mut bytes);
        }
    }
    let digest = Sha256::digest(&bytes);
    bytes.extend_from_slice(&digest);
    bytes
}

/// Hex SHA-256 of a serialized checkpoint.
pub fn checkpoint_hash<F: Scalar>(net: &GritNet<F>) -> String {
    let bytes = checkpoint_bytes(net);
    let digest = Sha256::digest(&bytes);
    let mut hex = String::with_capacity(64);
    for byte in digest {
        hex.push_str(&format!("{byte:02x}"));
    }
    hex
}

/// Writes the checkpoint file.
pub fn save_checkpoint<F: Scalar>(net: &GritNet<F>, path: &Path) -> Result<(), CheckpointError> {
    std::fs::write(path, checkpoint_bytes(net)).map_err(|e| io_err(path, e))
}

fn read_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes"))
}

/// Expected parameter shapes in checkpoint order.
fn param_shapes(config: &GritNetConfig) -> Vec<(usize, usize)> {
    let e = config.embedding_dim as usize;
    let h = config.hidden_dim as usize;
    vec![
        (config.table_rows(), e),
        (e, 4 * h),
        (h, 4 * h),
        (1, 4 * h),
        (e, 4 * h),
        (h, 4 * h),
        (1, 4 * h),
        (2 * h, 1),
        (1, 1),
    ]
}

/// Reads a checkpoint saved with the same element width `F`.
pub fn load_checkpoint<F: Scalar>(path: &Path) -> Result<GritNet<F>, CheckpointError> {
    let bytes = std::fs::read(path).map_err(|e| io_err(path, e))?;
    parse_checkpoint(&bytes)
}

/// Parses serialized checkpoint bytes.
pub fn parse_checkpoint<F: Scalar>(bytes: &[u8]) -> Result<GritNet<F>, CheckpointError> {
    if bytes.len() < HEADER_LEN + DIGEST_LEN {
        return Err(CheckpointError::Corrupt(format!(
            "file is {} bytes, smaller than header plus checksum",
            bytes.len()
        )));
    }
    if &bytes[0..8] != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let version = read_u32(&bytes, 8);
    if version != VERSION {
        return Err(CheckpointError::UnsupportedVersion(version));
    }
    let width = bytes[12];
    if width != F::WIDTH {
        return Err(CheckpointError::PrecisionMismatch {
            found: width,
            expected: F::WIDTH,
        });
    }
    let config = GritNetConfig {
        vocab_size: read_u32(&bytes, 14),
        delta_buckets: read_u32(&bytes, 18),
        embedding_dim: read_u32(&bytes, 22),
        hidden_dim: read_u32(&bytes, 26),
        gmp_skip_padding: bytes[13] != 0,
        seed: u64::from_le_bytes(bytes[30..38].try_into().expect("8 bytes")),
    };
    config
        .validate()
        .map_err(|e| CheckpointError::Corrupt(e.to_string()))?;

    let shapes = param_shapes(&config);
    let value_count: usize = shapes.iter().map(|(r, c)| r * c).sum();
    let expected_len = HEADER_LEN + value_count * width as usize + DIGEST_LEN;
    if bytes.len() != expected_len {
        return Err(CheckpointError::Corrupt(format!(
            "expected {expected_len} bytes for this config, found {}",
            bytes.len()
        )));
    }
    let body_end = bytes.len() - DIGEST_LEN;
    let digest = Sha256::digest(&bytes[..body_end]);
    if digest.as_slice() != &bytes[body_end..] {
        return Err(CheckpointError::Corrupt("checksum mismatch".into()));
    }

    let step = width as usize;
    let mut cursor = HEADER_LEN;
    let mut tensors = Vec::with_capacity(shapes.len());
    for (rows, cols) in shapes {
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows * cols {
            data.push(F::read_le(&bytes[cursor..cursor + step]));
            cursor += step;
        }
        tensors.push(Tensor::from_vec(rows, cols, data));
    }

    let mut drain = tensors.into_iter();
    let mut next = || Parameter::new(drain.next().expect("nine tensors"));
    Ok(GritNet {
        config,
        embedding: next(),
        forward_lstm: super::LstmWeights {
            w_ih: next(),
            w_hh: next(),
            bias: next(),
        },
        backward_lstm: super::LstmWeights {
            w_ih: next(),
            w_hh: next(),
            bias: next(),
        },
        fc_weight: next(),
        fc_bias: next(),
    })
}

/// Loads a checkpoint and verifies that its vocabulary matches `schema`.
pub fn load_checkpoint_for_schema<F: Scalar>(
    path: &Path,
    schema: &CourseSchema,
) -> Result<GritNet<F>, CheckpointError> {
    let net = load_checkpoint(path)?;
    if net.config.vocab_size != schema.vocab_size()
        || net.config.delta_buckets != schema.delta_buckets()
    {
        return Err(CheckpointError::SchemaMismatch {
            vocab: net.config.vocab_size,
            deltas: net.config.delta_buckets,
            schema_vocab: schema.vocab_size(),
            schema_deltas: schema.delta_buckets(),
        });
    }
    Ok(net)
}
