//! Versioned binary checkpoints.
//!
//! Layout: magic + format version, a JSON header (encoder config, variant,
//! personalization mode, skill order, vocabulary digests, provenance), the
//! embedded vocabulary files, length-prefixed parameter records (path,
//! shape, little-endian float64 payload) in lexicographic path order with
//! model buffers under a `buffer.` prefix, and a SHA-256 trailer over
//! everything before it. Save -> load -> save is byte-identical, and a
//! loaded checkpoint reproduces bitwise-identical inference.

use std::io::{Cursor, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::encoder::{EncoderConfig, Vocabulary};
use crate::model::{ModelVariant, PersonalizationMode, SkillModel};
use crate::numeric::Tensor;

const MAGIC: &[u8; 8] = b"SKRTCKP1";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error("checkpoint digest mismatch (file damaged or truncated)")]
    DigestMismatch,
    #[error(transparent)]
    Model(#[from] crate::model::ModelError),
    #[error(transparent)]
    Numeric(#[from] crate::numeric::NumericError),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format_version: u32,
    pub encoder: EncoderConfig,
    pub variant: ModelVariant,
    pub mode: PersonalizationMode,
    pub embedding_dim: usize,
    pub skills: Vec<String>,
    pub chars_digest: String,
    pub words_digest: String,
    #[serde(default)]
    pub provenance: serde_json::Value,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    let out = h.finalize();
    let mut s = String::with_capacity(64);
    for b in out {
        s.push_str(&format!("{b:02x}"));
    }
    s
}

fn put_bytes(out: &mut Vec<u8>, bytes: &[u8]) {
    out.extend_from_slice(&(bytes.len() as u64).to_le_bytes());
    out.extend_from_slice(bytes);
}

fn put_tensor(out: &mut Vec<u8>, name: &str, t: &Tensor) {
    put_bytes(out, name.as_bytes());
    out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
    for &d in t.shape() {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    for v in t.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

/// Serializes a model (with provenance) to checkpoint bytes.
pub fn save(model: &SkillModel, provenance: serde_json::Value) -> Result<Vec<u8>, CheckpointError> {
    let chars = model.vocab.chars_file();
    let words = model.vocab.words_file();
    let header = CheckpointHeader {
        format_version: FORMAT_VERSION,
        encoder: model.encoder_cfg,
        variant: model.variant,
        mode: model.mode,
        embedding_dim: model.embedding_dim(),
        skills: model.skills().to_vec(),
        chars_digest: sha256_hex(chars.as_bytes()),
        words_digest: sha256_hex(words.as_bytes()),
        provenance,
    };
    let header_json = serde_json::to_vec(&header)
        .map_err(|e| CheckpointError::Corrupt(format!("header serialize: {e}")))?;

    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    put_bytes(&mut out, &header_json);
    put_bytes(&mut out, chars.as_bytes());
    put_bytes(&mut out, words.as_bytes());

    let record_count = model.store.len() + model.buffers.len();
    out.extend_from_slice(&(record_count as u64).to_le_bytes());
    for (name, param) in model.store.iter() {
        put_tensor(&mut out, name, &param.value);
    }
    for (name, tensor) in &model.buffers {
        put_tensor(&mut out, &format!("buffer.{name}"), tensor);
    }

    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    Ok(out)
}

pub fn save_file(
    path: &Path,
    model: &SkillModel,
    provenance: serde_json::Value,
) -> Result<(), CheckpointError> {
    let bytes = save(model, provenance)?;
    let mut f = std::fs::File::create(path).map_err(|source| CheckpointError::Io {
        path: path.display().to_string(),
        source,
    })?;
    f.write_all(&bytes).map_err(|source| CheckpointError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn take_bytes(cur: &mut Cursor<&[u8]>) -> Result<Vec<u8>, CheckpointError> {
    let mut len = [0u8; 8];
    cur.read_exact(&mut len)
        .map_err(|_| CheckpointError::Corrupt("truncated length".into()))?;
    let len = u64::from_le_bytes(len) as usize;
    let mut buf = vec![0u8; len];
    cur.read_exact(&mut buf)
        .map_err(|_| CheckpointError::Corrupt("truncated payload".into()))?;
    Ok(buf)
}

/// Restores a model; verifies the whole-file digest and the vocabulary
/// digests recorded in the header.
pub fn load(bytes: &[u8]) -> Result<(SkillModel, CheckpointHeader), CheckpointError> {
    if bytes.len() < MAGIC.len() + 32 {
        return Err(CheckpointError::Corrupt("file too short".into()));
    }
    let (body, trailer) = bytes.split_at(bytes.len() - 32);
    let digest = Sha256::digest(body);
    if digest.as_slice() != trailer {
        return Err(CheckpointError::DigestMismatch);
    }
    let mut cur = Cursor::new(body);
    let mut magic = [0u8; 8];
    cur.read_exact(&mut magic)
        .map_err(|_| CheckpointError::Corrupt("missing magic".into()))?;
    if &magic != MAGIC {
        return Err(CheckpointError::Corrupt("bad magic".into()));
    }
    let header_json = take_bytes(&mut cur)?;
    let header: CheckpointHeader = serde_json::from_slice(&header_json)
        .map_err(|e| CheckpointError::Corrupt(format!("header parse: {e}")))?;
    if header.format_version != FORMAT_VERSION {
        return Err(CheckpointError::Corrupt(format!(
            "unsupported format version {}",
            header.format_version
        )));
    }
    let chars = String::from_utf8(take_bytes(&mut cur)?)
        .map_err(|_| CheckpointError::Corrupt("chars.txt not utf-8".into()))?;
    let words = String::from_utf8(take_bytes(&mut cur)?)
        .map_err(|_| CheckpointError::Corrupt("words.txt not utf-8".into()))?;
    if sha256_hex(chars.as_bytes()) != header.chars_digest
        || sha256_hex(words.as_bytes()) != header.words_digest
    {
        return Err(CheckpointError::Corrupt(
            "vocabulary digests do not match header".into(),
        ));
    }
    let vocab = Vocabulary::from_files(&chars, &words);

    let mut count = [0u8; 8];
    cur.read_exact(&mut count)
        .map_err(|_| CheckpointError::Corrupt("missing record count".into()))?;
    let count = u64::from_le_bytes(count) as usize;

    // Rebuild via an empty shell, filling parameters purely from records.
    let mut model = SkillModel::shell(header.encoder, vocab, header.variant, header.mode);
    for _ in 0..count {
        let name = String::from_utf8(take_bytes(&mut cur)?)
            .map_err(|_| CheckpointError::Corrupt("record name not utf-8".into()))?;
        let mut ndim = [0u8; 4];
        cur.read_exact(&mut ndim)
            .map_err(|_| CheckpointError::Corrupt("truncated record".into()))?;
        let ndim = u32::from_le_bytes(ndim) as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            let mut d = [0u8; 8];
            cur.read_exact(&mut d)
                .map_err(|_| CheckpointError::Corrupt("truncated shape".into()))?;
            shape.push(u64::from_le_bytes(d) as usize);
        }
        let numel: usize = shape.iter().product();
        let mut data = vec![0.0; numel];
        for v in &mut data {
            let mut b = [0u8; 8];
            cur.read_exact(&mut b)
                .map_err(|_| CheckpointError::Corrupt("truncated payload".into()))?;
            *v = f64::from_le_bytes(b);
        }
        let tensor = Tensor::new(shape, data)?;
        if let Some(buffer_name) = name.strip_prefix("buffer.") {
            model.buffers.insert(buffer_name.to_string(), tensor);
        } else {
            model.store.register(&name, tensor)?;
        }
    }
    for s in &header.skills {
        model.adopt_skill(s)?;
    }
    Ok((model, header))
}

pub fn load_file(path: &Path) -> Result<(SkillModel, CheckpointHeader), CheckpointError> {
    let bytes = std::fs::read(path).map_err(|source| CheckpointError::Io {
        path: path.display().to_string(),
        source,
    })?;
    load(&bytes)
}
