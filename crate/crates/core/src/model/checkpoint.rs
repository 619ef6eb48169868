//! Checkpoint files: a versioned text header (config echo, corpus hash,
//! step count, parameter count) followed by `---` and the flat
//! little-endian f64 parameter blob in declared shape order.

use super::{EncoderConfig, ModelState};
use std::io::Write;
use std::path::Path;
use thiserror::Error;

const MAGIC: &str = "mvcode-checkpoint v1";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CheckpointMeta {
    pub corpus_hash: String,
    pub steps: usize,
}

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed checkpoint: {0}")]
    Malformed(String),
}

pub fn save_checkpoint(
    state: &ModelState,
    meta: &CheckpointMeta,
    path: &Path,
) -> Result<(), CheckpointError> {
    let c = &state.config;
    let mut header = String::new();
    header.push_str(MAGIC);
    header.push('\n');
    header.push_str(&format!("vocab_size = {}\n", c.vocab_size));
    header.push_str(&format!("type_classes = {}\n", c.type_classes));
    header.push_str(&format!("hidden = {}\n", c.hidden));
    header.push_str(&format!("layers = {}\n", c.layers));
    header.push_str(&format!("heads = {}\n", c.heads));
    header.push_str(&format!("feed_forward = {}\n", c.feed_forward));
    header.push_str(&format!("max_positions = {}\n", c.max_positions));
    header.push_str(&format!("lambda = {}\n", c.lambda));
    header.push_str(&format!("learning_rate = {}\n", c.learning_rate));
    header.push_str(&format!("seed = {}\n", c.seed));
    header.push_str(&format!("corpus_hash = {}\n", meta.corpus_hash));
    header.push_str(&format!("steps = {}\n", meta.steps));
    header.push_str(&format!("params = {}\n", state.scalar_count()));
    header.push_str("---\n");

    let mut file = std::fs::File::create(path)?;
    file.write_all(header.as_bytes())?;
    let mut blob = Vec::with_capacity(state.scalar_count() * 8);
    for i in 0..state.param_count() {
        for &v in &state.tensor(i).data {
            blob.extend_from_slice(&v.to_le_bytes());
        }
    }
    file.write_all(&blob)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<(ModelState, CheckpointMeta), CheckpointError> {
    let bytes = std::fs::read(path)?;
    let sep = b"---\n";
    let split = bytes
        .windows(sep.len())
        .position(|w| w == sep)
        .ok_or_else(|| CheckpointError::Malformed("missing header separator".into()))?;
    let header = std::str::from_utf8(&bytes[..split])
        .map_err(|_| CheckpointError::Malformed("non-utf8 header".into()))?;
    let blob = &bytes[split + sep.len()..];

    let mut lines = header.lines();
    let magic = lines.next().unwrap_or_default();
    if magic != MAGIC {
        return Err(CheckpointError::Malformed(format!("bad magic: {magic}")));
    }
    let mut fields = std::collections::BTreeMap::new();
    for line in lines {
        if let Some((k, v)) = line.split_once(" = ") {
            fields.insert(k.to_string(), v.to_string());
        }
    }
    let get = |k: &str| -> Result<&String, CheckpointError> {
        fields.get(k).ok_or_else(|| CheckpointError::Malformed(format!("missing field {k}")))
    };
    let parse_usize = |k: &str| -> Result<usize, CheckpointError> {
        get(k)?.parse().map_err(|_| CheckpointError::Malformed(format!("bad {k}")))
    };
    let parse_f64 = |k: &str| -> Result<f64, CheckpointError> {
        get(k)?.parse().map_err(|_| CheckpointError::Malformed(format!("bad {k}")))
    };

    let config = EncoderConfig {
        vocab_size: parse_usize("vocab_size")?,
        type_classes: parse_usize("type_classes")?,
        hidden: parse_usize("hidden")?,
        layers: parse_usize("layers")?,
        heads: parse_usize("heads")?,
        feed_forward: parse_usize("feed_forward")?,
        max_positions: parse_usize("max_positions")?,
        lambda: parse_f64("lambda")?,
        learning_rate: parse_f64("learning_rate")?,
        seed: get("seed")?.parse().map_err(|_| CheckpointError::Malformed("bad seed".into()))?,
    };
    let meta = CheckpointMeta {
        corpus_hash: get("corpus_hash")?.clone(),
        steps: parse_usize("steps")?,
    };
    let declared = parse_usize("params")?;
    if blob.len() != declared * 8 {
        return Err(CheckpointError::Malformed(format!(
            "blob holds {} bytes, header declares {} values",
            blob.len(),
            declared
        )));
    }

    let mut state = ModelState::init(config)
        .map_err(|e| CheckpointError::Malformed(format!("config rejected: {e}")))?;
    if state.scalar_count() != declared {
        return Err(CheckpointError::Malformed(format!(
            "shape order yields {} values, header declares {declared}",
            state.scalar_count()
        )));
    }
    let mut offset = 0;
    for i in 0..state.param_count() {
        let tensor = state.tensor_mut(i);
        for v in &mut tensor.data {
            let mut buf = [0u8; 8];
            buf.copy_from_slice(&blob[offset..offset + 8]);
            *v = f64::from_le_bytes(buf);
            offset += 8;
        }
    }
    Ok((state, meta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::EncoderConfig;

    #[test]
    fn save_load_roundtrip() {
        let config = EncoderConfig {
            vocab_size: 40,
            hidden: 8,
            layers: 1,
            heads: 2,
            feed_forward: 16,
            max_positions: 16,
            seed: 123,
            ..Default::default()
        };
        let state = ModelState::init(config).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let meta = CheckpointMeta { corpus_hash: "abc123".into(), steps: 42 };
        save_checkpoint(&state, &meta, &path).unwrap();
        let (loaded, loaded_meta) = load_checkpoint(&path).unwrap();
        assert_eq!(loaded, state);
        assert_eq!(loaded_meta, meta);
    }

    #[test]
    fn truncated_blob_rejected() {
        let config = EncoderConfig {
            vocab_size: 40,
            hidden: 8,
            layers: 1,
            heads: 2,
            feed_forward: 16,
            max_positions: 16,
            ..Default::default()
        };
        let state = ModelState::init(config).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let meta = CheckpointMeta { corpus_hash: "h".into(), steps: 1 };
        save_checkpoint(&state, &meta, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 9]).unwrap();
        assert!(matches!(load_checkpoint(&path), Err(CheckpointError::Malformed(_))));
    }
}
