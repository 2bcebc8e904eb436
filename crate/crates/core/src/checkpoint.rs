//! Binary checkpoints: the training config, epoch counter and every
//! parameter tensor, guarded by fingerprints of the word/user key lists.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic      4 bytes  "QXCK"
//! version    u32
//! config_len u64, then config_len bytes of training-config JSON
//! epoch      u64
//! vocab_fp   32 bytes (SHA-256 over each word key followed by '\n')
//! user_fp    32 bytes (same scheme over user keys)
//! n_tensors  u64
//! per tensor:
//!   name_len u64, name bytes (UTF-8)
//!   ndim     u64, then ndim dimension sizes (u64 each)
//!   data     numel * 8 bytes (f64, little-endian)
//! ```
//!
//! Key lists themselves are not stored; loading requires the same word and
//! user keys the model was built with and verifies them by fingerprint.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::{ConvSpec, ModelParams};
use crate::nn::Tensor;
use crate::train::TrainConfig;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"QXCK";
pub const CHECKPOINT_VERSION: u32 = 1;

/// SHA-256 over every key followed by a newline; order-sensitive.
pub fn fingerprint_keys(keys: &[String]) -> [u8; 32] {
    let mut hasher = Sha256::new();
    for key in keys {
        hasher.update(key.as_bytes());
        hasher.update(b"\n");
    }
    hasher.finalize().into()
}

/// A loaded checkpoint: the reassembled model plus its training context.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub params: ModelParams,
    pub config: TrainConfig,
    pub epoch: u64,
}

fn tensor_entries(params: &ModelParams) -> Vec<(String, &Tensor)> {
    let mut entries = vec![
        ("word_emb".to_string(), &params.word_emb),
        ("user_emb".to_string(), &params.user_emb),
    ];
    for (i, t) in params.filters.iter().enumerate() {
        entries.push((format!("filters_{i}"), t));
    }
    for (i, t) in params.conv_bias.iter().enumerate() {
        entries.push((format!("conv_bias_{i}"), t));
    }
    entries.push(("projection".to_string(), &params.projection));
    entries.push(("proj_bias".to_string(), &params.proj_bias));
    entries
}

/// Write the model and its training context to `path`.
pub fn save_checkpoint(
    path: &Path,
    params: &ModelParams,
    config: &TrainConfig,
    epoch: u64,
) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    out.write_all(CHECKPOINT_MAGIC)?;
    out.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;

    let config_json = serde_json::to_vec(config)
        .map_err(|e| Error::InvalidConfig(format!("unserializable training config: {e}")))?;
    out.write_all(&(config_json.len() as u64).to_le_bytes())?;
    out.write_all(&config_json)?;
    out.write_all(&epoch.to_le_bytes())?;
    out.write_all(&fingerprint_keys(params.word_keys()))?;
    out.write_all(&fingerprint_keys(params.user_keys()))?;

    let entries = tensor_entries(params);
    out.write_all(&(entries.len() as u64).to_le_bytes())?;
    for (name, tensor) in entries {
        out.write_all(&(name.len() as u64).to_le_bytes())?;
        out.write_all(name.as_bytes())?;
        out.write_all(&(tensor.shape().len() as u64).to_le_bytes())?;
        for &dim in tensor.shape() {
            out.write_all(&(dim as u64).to_le_bytes())?;
        }
        for &value in tensor.data() {
            out.write_all(&value.to_le_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

struct Reader<R> {
    inner: R,
}

impl<R: Read> Reader<R> {
    fn bytes(&mut self, n: usize, what: &str) -> Result<Vec<u8>> {
        let mut buf = vec![0u8; n];
        self.inner
            .read_exact(&mut buf)
            .map_err(|_| Error::CorruptCheckpoint(format!("truncated while reading {what}")))?;
        Ok(buf)
    }

    fn u32_le(&mut self, what: &str) -> Result<u32> {
        let b = self.bytes(4, what)?;
        Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")))
    }

    fn u64_le(&mut self, what: &str) -> Result<u64> {
        let b = self.bytes(8, what)?;
        Ok(u64::from_le_bytes(b.try_into().expect("8 bytes")))
    }
}

/// Read a checkpoint back. `word_keys` and `user_keys` must match the ones
/// the checkpoint was saved with (verified by fingerprint) — they rebuild
/// the lookup side of the model that the file does not store.
pub fn load_checkpoint(
    path: &Path,
    word_keys: &[String],
    user_keys: &[String],
) -> Result<Checkpoint> {
    let mut r = Reader {
        inner: BufReader::new(File::open(path)?),
    };
    if r.bytes(4, "magic")? != CHECKPOINT_MAGIC {
        return Err(Error::CorruptCheckpoint("bad magic bytes".into()));
    }
    let version = r.u32_le("version")?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::CheckpointVersion {
            found: version,
            expected: CHECKPOINT_VERSION,
        });
    }
    let config_len = r.u64_le("config length")? as usize;
    if config_len > 1 << 20 {
        return Err(Error::CorruptCheckpoint(format!(
            "implausible config length {config_len}"
        )));
    }
    let config: TrainConfig = serde_json::from_slice(&r.bytes(config_len, "config")?)
        .map_err(|e| Error::CorruptCheckpoint(format!("bad config JSON: {e}")))?;
    let epoch = r.u64_le("epoch")?;

    let vocab_fp = r.bytes(32, "vocab fingerprint")?;
    if vocab_fp.as_slice() != fingerprint_keys(word_keys) {
        return Err(Error::FingerprintMismatch("vocab"));
    }
    let user_fp = r.bytes(32, "user fingerprint")?;
    if user_fp.as_slice() != fingerprint_keys(user_keys) {
        return Err(Error::FingerprintMismatch("users"));
    }

    let n_tensors = r.u64_le("tensor count")? as usize;
    let mut tensors: Vec<(String, Tensor)> = Vec::with_capacity(n_tensors);
    for _ in 0..n_tensors {
        let name_len = r.u64_le("tensor name length")? as usize;
        if name_len > 256 {
            return Err(Error::CorruptCheckpoint(format!(
                "implausible tensor name length {name_len}"
            )));
        }
        let name = String::from_utf8(r.bytes(name_len, "tensor name")?)
            .map_err(|_| Error::CorruptCheckpoint("tensor name is not UTF-8".into()))?;
        let ndim = r.u64_le("tensor rank")? as usize;
        if ndim == 0 || ndim > 8 {
            return Err(Error::CorruptCheckpoint(format!(
                "implausible tensor rank {ndim} for {name:?}"
            )));
        }
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(r.u64_le("tensor dimension")? as usize);
        }
        let numel: usize = shape.iter().product();
        let raw = r.bytes(numel * 8, &format!("data of {name:?}"))?;
        let data: Vec<f64> = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        let tensor = Tensor::new(shape, data)
            .map_err(|e| Error::CorruptCheckpoint(format!("tensor {name:?}: {e}")))?;
        tensors.push((name, tensor));
    }

    let mut take = |name: String| -> Result<Tensor> {
        let at = tensors
            .iter()
            .position(|(n, _)| *n == name)
            .ok_or_else(|| Error::CorruptCheckpoint(format!("missing tensor {name:?}")))?;
        Ok(tensors.swap_remove(at).1)
    };
    let word_emb = take("word_emb".into())?;
    let user_emb = take("user_emb".into())?;
    let mut filters = Vec::with_capacity(config.region_sizes.len());
    let mut conv_bias = Vec::with_capacity(config.region_sizes.len());
    for i in 0..config.region_sizes.len() {
        filters.push(take(format!("filters_{i}"))?);
        conv_bias.push(take(format!("conv_bias_{i}"))?);
    }
    let projection = take("projection".into())?;
    let proj_bias = take("proj_bias".into())?;
    if !tensors.is_empty() {
        return Err(Error::CorruptCheckpoint(format!(
            "unexpected extra tensors: {:?}",
            tensors.iter().map(|(n, _)| n).collect::<Vec<_>>()
        )));
    }

    let params = ModelParams::from_parts(
        ConvSpec {
            region_sizes: config.region_sizes.clone(),
            filters_per_size: config.filters_per_size,
        },
        config.seq_len,
        config.dropout_rate,
        config.fine_tune_users,
        word_keys.to_vec(),
        user_keys.to_vec(),
        word_emb,
        user_emb,
        filters,
        conv_bias,
        projection,
        proj_bias,
    )
    .map_err(|e| Error::CorruptCheckpoint(format!("inconsistent tensors: {e}")))?;
    Ok(Checkpoint {
        params,
        config,
        epoch,
    })
}
