//! `NTGM` model files.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "NTGM"
//! u32            header length H
//! H bytes        JSON {"config": ModelConfig, "labels": [label names in id order]}
//! u32            tensor count
//! per tensor, in ModelConfig::tensor_shapes order:
//!   u16          name length, then UTF-8 name
//!   u8           rank, then rank × u32 dims
//!   f32 × Π dims values, row-major
//! ```

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{ModelConfig, ModelError, ModelParameters};
use crate::tokenizer::Vocabulary;

const MAGIC: &[u8; 4] = b"NTGM";

#[derive(Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    labels: Vec<String>,
}

/// Parameters together with the vocabulary they were trained on.
#[derive(Debug, Clone, PartialEq)]
pub struct SavedModel {
    pub params: ModelParameters,
    pub vocab: Vocabulary,
}

pub fn write_model<W: Write>(mut w: W, params: &ModelParameters, vocab: &Vocabulary) -> Result<(), ModelError> {
    if vocab.size() != params.config().vocab_size {
        return Err(ModelError::InvalidConfig(format!(
            "vocabulary has {} tokens, model expects {}",
            vocab.size(),
            params.config().vocab_size
        )));
    }
    let header = serde_json::to_vec(&Header {
        config: params.config().clone(),
        labels: vocab.labels().to_vec(),
    })?;
    let mut buf = Vec::with_capacity(16 + header.len() + 4 * params.data.len());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(header.len() as u32).to_le_bytes());
    buf.extend_from_slice(&header);
    let named = params.named();
    buf.extend_from_slice(&(named.len() as u32).to_le_bytes());
    for (name, shape, values) in named {
        buf.extend_from_slice(&(name.len() as u16).to_le_bytes());
        buf.extend_from_slice(name.as_bytes());
        buf.push(shape.len() as u8);
        for dim in &shape {
            buf.extend_from_slice(&(*dim as u32).to_le_bytes());
        }
        for &v in values {
            buf.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    w.write_all(&buf)?;
    Ok(())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ModelError> {
        let out = self
            .bytes
            .get(self.pos..self.pos + n)
            .ok_or_else(|| ModelError::BadModelFile(format!("truncated at byte {}", self.pos)))?;
        self.pos += n;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32, ModelError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

pub fn parse_model(bytes: &[u8]) -> Result<SavedModel, ModelError> {
    let bad = |m: String| ModelError::BadModelFile(m);
    let mut cur = Cursor { bytes, pos: 0 };
    if cur.take(4)? != MAGIC {
        return Err(bad("missing NTGM magic".into()));
    }
    let header_len = cur.u32()? as usize;
    let header: Header = serde_json::from_slice(cur.take(header_len)?)?;
    let config = header.config;
    config.validate()?;
    let vocab = Vocabulary::new(header.labels).map_err(|e| bad(e.to_string()))?;
    if vocab.size() != config.vocab_size {
        return Err(bad("label count does not match vocab_size".into()));
    }

    let expected = config.tensor_shapes();
    let count = cur.u32()? as usize;
    if count != expected.len() {
        return Err(bad(format!("expected {} tensors, found {count}", expected.len())));
    }
    let mut data = Vec::with_capacity(config.parameter_count());
    for (want_name, want_shape) in expected {
        let name_len = u16::from_le_bytes(cur.take(2)?.try_into().unwrap()) as usize;
        let name = std::str::from_utf8(cur.take(name_len)?).map_err(|e| bad(e.to_string()))?;
        let rank = cur.take(1)?[0] as usize;
        let shape = (0..rank)
            .map(|_| cur.u32().map(|d| d as usize))
            .collect::<Result<Vec<_>, _>>()?;
        if name != want_name || shape != want_shape {
            return Err(bad(format!(
                "tensor {name} {shape:?} does not match expected {want_name} {want_shape:?}"
            )));
        }
        let n: usize = shape.iter().product();
        data.extend(
            cur.take(4 * n)?
                .chunks_exact(4)
                .map(|c| f64::from(f32::from_le_bytes(c.try_into().unwrap()))),
        );
    }
    if cur.pos != bytes.len() {
        return Err(bad("trailing bytes after last tensor".into()));
    }
    Ok(SavedModel {
        params: ModelParameters::from_data(&config, data)?,
        vocab,
    })
}

pub fn read_model<R: Read>(mut r: R) -> Result<SavedModel, ModelError> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    parse_model(&bytes)
}
