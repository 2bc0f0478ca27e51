//! Checkpoint files: magic, JSON header, then raw f32 little-endian blobs
//! in layout order. Weights are always stored at f32; evaluation widens.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::ModelConfig;
use crate::params::{Layout, Tensors};

const MAGIC: &[u8; 8] = b"POSHCKPT";
const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CkptError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad magic, not a checkpoint")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    BadVersion(u32),
    #[error("header: {0}")]
    Header(#[from] serde_json::Error),
    #[error("body length {got} does not match layout {want}")]
    BodyLength { want: usize, got: usize },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub config: ModelConfig,
    pub step: u64,
    pub epoch: u32,
}

pub fn save_checkpoint(
    path: impl AsRef<Path>,
    meta: &CheckpointMeta,
    params: &Tensors<f32>,
) -> Result<(), CkptError> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    let header = serde_json::to_vec(meta)?;
    w.write_all(&(header.len() as u64).to_le_bytes())?;
    w.write_all(&header)?;
    for &x in &params.data {
        w.write_all(&x.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(CheckpointMeta, Tensors<f32>), CkptError> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(CkptError::BadMagic);
    }
    let mut word = [0u8; 4];
    r.read_exact(&mut word)?;
    let version = u32::from_le_bytes(word);
    if version != VERSION {
        return Err(CkptError::BadVersion(version));
    }
    let mut len8 = [0u8; 8];
    r.read_exact(&mut len8)?;
    let header_len = u64::from_le_bytes(len8) as usize;
    let mut header = vec![0u8; header_len];
    r.read_exact(&mut header)?;
    let meta: CheckpointMeta = serde_json::from_slice(&header)?;
    let layout = Layout::for_config(&meta.config);
    let mut body = Vec::new();
    r.read_to_end(&mut body)?;
    if body.len() != layout.total * 4 {
        return Err(CkptError::BodyLength {
            want: layout.total * 4,
            got: body.len() / 4,
        });
    }
    let mut params = Tensors::<f32>::zeros(layout);
    for (i, chunk) in body.chunks_exact(4).enumerate() {
        params.data[i] = f32::from_le_bytes(chunk.try_into().expect("4-byte chunk"));
    }
    Ok((meta, params))
}

/// Loads and widens to f64 for evaluation.
pub fn load_checkpoint_f64(
    path: impl AsRef<Path>,
) -> Result<(CheckpointMeta, Tensors<f64>), CkptError> {
    let (meta, params) = load_checkpoint(path)?;
    Ok((meta, params.widen()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use posh_core::rng::stream;

    fn cfg() -> ModelConfig {
        ModelConfig {
            hidden_size: 8,
            n_heads: 2,
            n_layers: 2,
            ffn_dim: 16,
            vocab_size: 11,
            context_len: 6,
            dropout_rate: 0.1,
        }
    }

    #[test]
    fn roundtrip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let params = Tensors::<f32>::init(&cfg(), &mut stream(1, "init"));
        let meta = CheckpointMeta {
            config: cfg(),
            step: 123,
            epoch: 4,
        };
        save_checkpoint(&path, &meta, &params).unwrap();
        let (meta2, params2) = load_checkpoint(&path).unwrap();
        assert_eq!(meta2.step, 123);
        assert_eq!(meta2.epoch, 4);
        assert_eq!(meta2.config, cfg());
        assert_eq!(params.data, params2.data);
        let (_, wide) = load_checkpoint_f64(&path).unwrap();
        assert_eq!(wide.data[7], params.data[7] as f64);
    }

    #[test]
    fn rejects_foreign_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("junk");
        std::fs::write(&path, b"not a checkpoint at all").unwrap();
        assert!(matches!(load_checkpoint(&path), Err(CkptError::BadMagic)));
    }

    #[test]
    fn rejects_truncated_body() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let params = Tensors::<f32>::init(&cfg(), &mut stream(2, "init"));
        let meta = CheckpointMeta {
            config: cfg(),
            step: 1,
            epoch: 0,
        };
        save_checkpoint(&path, &meta, &params).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 8]).unwrap();
        assert!(matches!(
            load_checkpoint(&path),
            Err(CkptError::BodyLength { .. })
        ));
    }
}
