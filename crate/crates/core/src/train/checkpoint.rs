//! Binary checkpoint: `PLNS1`, a little-endian `u32` header length, a JSON
//! header, then every parameter as `u32` name length, name, `u32` rank,
//! `u32` dims and little-endian `f32` values, in header order.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{hex, Vocabulary};
use crate::error::{Error, Result};
use crate::models::{Model, ModelConfig, CLASS_ORDER};
use crate::nn::{SeededRng, Tensor};

pub const MAGIC: &[u8; 5] = b"PLNS1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub trainable: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub config: ModelConfig,
    pub vocab_hash: String,
    pub vocab_size: usize,
    pub class_order: Vec<String>,
    pub parameters: Vec<ParamEntry>,
}

/// A model read back from disk together with its header.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub model: Model<f32>,
    /// short content hash of the checkpoint bytes
    pub model_id: String,
}

/// Where the vocabulary belonging to a checkpoint is stored.
pub fn vocab_path_for(checkpoint: &Path) -> PathBuf {
    let mut s = checkpoint.as_os_str().to_owned();
    s.push(".vocab.tsv");
    PathBuf::from(s)
}

pub fn model_id(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes))[..16].to_string()
}

pub fn encode_checkpoint(model: &Model<f32>, vocab_hash: &str) -> Result<Vec<u8>> {
    let params = model.named_params();
    let header = CheckpointHeader {
        config: model.config().clone(),
        vocab_hash: vocab_hash.to_string(),
        vocab_size: model.vocab_size(),
        class_order: CLASS_ORDER.iter().map(|l| l.as_str().to_string()).collect(),
        parameters: params
            .iter()
            .map(|(n, p)| ParamEntry {
                name: n.clone(),
                shape: p.shape().to_vec(),
                trainable: p.trainable,
            })
            .collect(),
    };
    let json = serde_json::to_vec(&header).map_err(|e| Error::Format(e.to_string()))?;
    let body: usize = params.iter().map(|(n, p)| 8 + n.len() + 4 * p.shape().len() + 4 * p.len()).sum();
    let mut out = Vec::with_capacity(MAGIC.len() + 4 + json.len() + body);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for (name, p) in &params {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(p.shape().len() as u32).to_le_bytes());
        for &d in p.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &x in p.value.data() {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Format(format!(
                "checkpoint truncated while reading {what} at byte {}",
                self.pos
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()) as usize)
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(MAGIC.len(), "magic")? != MAGIC {
        return Err(Error::Format("not a checkpoint (bad magic)".into()));
    }
    let hlen = r.u32("header length")?;
    let header: CheckpointHeader =
        serde_json::from_slice(r.take(hlen, "header")?).map_err(|e| Error::Format(format!("checkpoint header: {e}")))?;
    let expected: Vec<String> = CLASS_ORDER.iter().map(|l| l.as_str().to_string()).collect();
    if header.class_order != expected {
        return Err(Error::Compatibility(format!(
            "checkpoint class order {:?} differs from {:?}",
            header.class_order, expected
        )));
    }
    let embedding = Tensor::zeros(&[header.vocab_size.max(2), header.config.embed_dim.max(1)]);
    let mut model = Model::<f32>::build(&header.config, embedding, &mut SeededRng::new(0))
        .map_err(|e| Error::Format(format!("checkpoint config: {e}")))?;
    {
        let mut params = model.named_params_mut();
        if params.len() != header.parameters.len() {
            return Err(Error::Format(format!(
                "checkpoint lists {} parameters, architecture has {}",
                header.parameters.len(),
                params.len()
            )));
        }
        for ((name, p), entry) in params.iter_mut().zip(&header.parameters) {
            if *name != entry.name || p.shape() != entry.shape.as_slice() {
                return Err(Error::Format(format!(
                    "parameter {} {:?} does not match architecture {name} {:?}",
                    entry.name,
                    entry.shape,
                    p.shape()
                )));
            }
            let nlen = r.u32("name length")?;
            let stored = r.take(nlen, "name")?;
            if stored != entry.name.as_bytes() {
                return Err(Error::Format(format!("parameter block out of order at {}", entry.name)));
            }
            let rank = r.u32("rank")?;
            let mut dims = Vec::with_capacity(rank);
            for _ in 0..rank {
                dims.push(r.u32("dims")?);
            }
            if dims != entry.shape {
                return Err(Error::Format(format!("shape of {} disagrees with header", entry.name)));
            }
            let raw = r.take(4 * p.len(), &entry.name)?;
            for (x, c) in p.value.data_mut().iter_mut().zip(raw.chunks_exact(4)) {
                *x = f32::from_le_bytes(c.try_into().unwrap());
            }
            p.trainable = entry.trainable;
        }
    }
    if r.pos != bytes.len() {
        return Err(Error::Format(format!("{} trailing bytes after last parameter", bytes.len() - r.pos)));
    }
    Ok(Checkpoint {
        header,
        model,
        model_id: model_id(bytes),
    })
}

pub fn save_checkpoint(model: &Model<f32>, vocab_hash: &str, path: &Path) -> Result<String> {
    let bytes = encode_checkpoint(model, vocab_hash)?;
    std::fs::write(path, &bytes).map_err(|e| Error::io(path, e))?;
    Ok(model_id(&bytes))
}

/// Reads a checkpoint; when `vocab` is given its hash must match the one
/// recorded at save time.
pub fn load_checkpoint(path: &Path, vocab: Option<&Vocabulary>) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let ckpt = decode_checkpoint(&bytes)?;
    if let Some(v) = vocab {
        let h = v.hash();
        if h != ckpt.header.vocab_hash {
            return Err(Error::Compatibility(format!(
                "vocabulary hash {h} does not match checkpoint ({})",
                ckpt.header.vocab_hash
            )));
        }
    }
    Ok(ckpt)
}

/// Writes the checkpoint and its vocabulary side by side.
pub fn save_bundle(model: &Model<f32>, vocab: &Vocabulary, path: &Path) -> Result<String> {
    if vocab.len() != model.vocab_size() {
        return Err(Error::Compatibility(format!(
            "vocabulary has {} entries, model embedding has {}",
            vocab.len(),
            model.vocab_size()
        )));
    }
    vocab.save(&vocab_path_for(path))?;
    save_checkpoint(model, &vocab.hash(), path)
}

/// Reads a checkpoint and the vocabulary stored next to it.
pub fn load_bundle(path: &Path) -> Result<(Checkpoint, Vocabulary)> {
    let vocab = Vocabulary::load(&vocab_path_for(path))?;
    let ckpt = load_checkpoint(path, Some(&vocab))?;
    Ok((ckpt, vocab))
}
