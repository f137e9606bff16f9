//! Model checkpoint.
//!
//! ```text
//! magic     [u8; 4]  "BKGM"
//! version   u32      CHECKPOINT_VERSION
//! dim       u32      d
//! blocks    u32      L
//! vocab     u64      token vocabulary checksum
//! count     u32      number of tensors
//! tensors   repeated: name (u32 length + UTF-8), u32 rank (= 2),
//!           u64 rows, u64 cols, rows × cols f64 in row-major order
//! ```
//!
//! Little-endian throughout. Tensors appear in [`ModelParams::tensors`] order.

use std::path::Path;

use ndarray::Array2;
use thiserror::Error;

use super::{ModelConfig, ModelParams};
use crate::codec::{ByteReader, ByteWriter, DecodeError};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"BKGM";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a checkpoint file (bad magic)")]
    BadMagic,
    #[error("checkpoint format version {found} unsupported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("checkpoint vocabulary checksum {stored:016x} does not match {expected:016x}")]
    VocabMismatch { stored: u64, expected: u64 },
    #[error("checkpoint truncated")]
    Truncated,
    #[error("checkpoint corrupt: {0}")]
    Corrupt(String),
}

impl From<DecodeError> for CheckpointError {
    fn from(e: DecodeError) -> Self {
        match e {
            DecodeError::Truncated(_) => CheckpointError::Truncated,
            DecodeError::Utf8(p) => CheckpointError::Corrupt(format!("invalid utf-8 at byte {p}")),
        }
    }
}

pub fn write_checkpoint(params: &ModelParams, vocab_checksum: u64) -> Vec<u8> {
    let mut w = ByteWriter::new();
    w.put_bytes(CHECKPOINT_MAGIC);
    w.put_u32(CHECKPOINT_VERSION);
    w.put_u32(params.config.dim as u32);
    w.put_u32(params.config.blocks as u32);
    w.put_u64(vocab_checksum);
    let tensors = params.tensors();
    w.put_u32(tensors.len() as u32);
    for (name, t) in tensors {
        w.put_str(&name);
        w.put_u32(2);
        w.put_u64(t.nrows() as u64);
        w.put_u64(t.ncols() as u64);
        for &x in t.iter() {
            w.put_f64(x);
        }
    }
    w.into_inner()
}

/// Decodes a checkpoint, returning the parameters and the stored vocabulary
/// checksum. With `expected_vocab`, a mismatching checksum is an error.
pub fn read_checkpoint(bytes: &[u8], expected_vocab: Option<u64>) -> Result<(ModelParams, u64), CheckpointError> {
    let mut r = ByteReader::new(bytes);
    if r.take(4)? != CHECKPOINT_MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let version = r.get_u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(CheckpointError::VersionMismatch {
            found: version,
            expected: CHECKPOINT_VERSION,
        });
    }
    let dim = r.get_u32()? as usize;
    let blocks = r.get_u32()? as usize;
    let stored = r.get_u64()?;
    if let Some(expected) = expected_vocab {
        if stored != expected {
            return Err(CheckpointError::VocabMismatch { stored, expected });
        }
    }
    let count = r.get_u32()? as usize;
    let mut tensors: Vec<(String, Array2<f64>)> = Vec::with_capacity(count);
    for _ in 0..count {
        let name = r.get_str()?;
        let rank = r.get_u32()?;
        if rank != 2 {
            return Err(CheckpointError::Corrupt(format!("{name}: rank {rank}")));
        }
        let rows = r.get_u64()? as usize;
        let cols = r.get_u64()? as usize;
        let n = rows.checked_mul(cols).ok_or_else(|| CheckpointError::Corrupt(format!("{name}: shape overflow")))?;
        if n.saturating_mul(8) > r.remaining() {
            return Err(CheckpointError::Truncated);
        }
        let data = (0..n).map(|_| r.get_f64()).collect::<Result<Vec<_>, _>>()?;
        let t = Array2::from_shape_vec((rows, cols), data).expect("shape checked");
        tensors.push((name, t));
    }
    if r.remaining() != 0 {
        return Err(CheckpointError::Corrupt(format!("{} trailing bytes", r.remaining())));
    }

    let find = |name: &str| -> Result<&Array2<f64>, CheckpointError> {
        tensors
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
            .ok_or_else(|| CheckpointError::Corrupt(format!("missing tensor {name}")))
    };
    let vocab_size = find("token_embedding")?.nrows();
    let max_len = find("position_embedding")?.nrows();
    let dist_rows = find("distance_embedding")?.nrows();
    if dist_rows < 2 {
        return Err(CheckpointError::Corrupt("distance table too small".into()));
    }
    let config = ModelConfig {
        dim,
        blocks,
        vocab_size,
        max_len,
        max_dist: (dist_rows - 2) as u32,
    };
    let mut params = ModelParams::zeros(config);
    let expected: Vec<String> = params.tensors().into_iter().map(|(n, _)| n).collect();
    if expected.len() != tensors.len() {
        return Err(CheckpointError::Corrupt(format!(
            "expected {} tensors, found {}",
            expected.len(),
            tensors.len()
        )));
    }
    for ((name, slot), (stored_name, t)) in params.tensors_mut().into_iter().zip(tensors) {
        if name != stored_name || slot.dim() != t.dim() {
            return Err(CheckpointError::Corrupt(format!(
                "tensor {stored_name} {:?} does not fit {name} {:?}",
                t.dim(),
                slot.dim()
            )));
        }
        *slot = t;
    }
    Ok((params, stored))
}

pub fn save_checkpoint(path: &Path, params: &ModelParams, vocab_checksum: u64) -> Result<(), CheckpointError> {
    std::fs::write(path, write_checkpoint(params, vocab_checksum))?;
    Ok(())
}

pub fn load_checkpoint(path: &Path, expected_vocab: Option<u64>) -> Result<(ModelParams, u64), CheckpointError> {
    read_checkpoint(&std::fs::read(path)?, expected_vocab)
}
