//! Binary checkpoint container.
//!
//! ```text
//! magic      8 bytes  "PVCAST\0\x01"
//! version    u32 LE
//! header     u64 LE length + UTF-8 `key = value` text (model config, metadata)
//! blocks     u32 LE count, then per block:
//!              u32 name length, name, u32 rank, u64 dims…, f64 LE values
//! checksum   SHA-256 of everything above
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::dataset::manifest::parse_key_values;
use crate::error::{Error, Result};
use crate::models::{build_model, Model, ModelConfig};

const MAGIC: &[u8; 8] = b"PVCAST\0\x01";
pub const FORMAT_VERSION: u32 = 1;
const META_PREFIX: &str = "meta.";
const CHECKSUM_LEN: usize = 32;

/// Extra `key = value` pairs stored next to the model, such as the
/// normalization constants the model was trained with.
pub type Metadata = BTreeMap<String, String>;

pub fn save_checkpoint(model: &Model, path: &Path) -> Result<()> {
    save_checkpoint_with(model, &Metadata::new(), path)
}

pub fn save_checkpoint_with(model: &Model, meta: &Metadata, path: &Path) -> Result<()> {
    fs::write(path, encode(model, meta)?)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Model> {
    load_checkpoint_with(path).map(|(m, _)| m)
}

pub fn load_checkpoint_with(path: &Path) -> Result<(Model, Metadata)> {
    decode(&fs::read(path)?)
}

pub fn encode(model: &Model, meta: &Metadata) -> Result<Vec<u8>> {
    let mut header = model.config.to_text();
    for (k, v) in meta {
        if k.contains(['=', '\n', '#']) || v.contains(['\n', '#']) {
            return Err(Error::Format(format!("metadata entry `{k}` cannot be stored as key-value text")));
        }
        header.push_str(&format!("{META_PREFIX}{k} = {v}\n"));
    }
    let mut out = Vec::with_capacity(64 + header.len() + 8 * model.params.scalar_count());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(header.as_bytes());
    out.extend_from_slice(&(model.params.len() as u32).to_le_bytes());
    for (_, p) in model.params.iter() {
        out.extend_from_slice(&(p.name.len() as u32).to_le_bytes());
        out.extend_from_slice(p.name.as_bytes());
        out.extend_from_slice(&(p.tensor.rank() as u32).to_le_bytes());
        for &d in p.tensor.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in p.tensor.values() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let digest = Sha256::digest(&out);
    out.extend_from_slice(digest.as_slice());
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Format("checkpoint is truncated".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn len(&mut self, wide: bool) -> Result<usize> {
        let n = if wide { self.u64()? } else { u64::from(self.u32()?) };
        usize::try_from(n).ok().filter(|&n| n <= self.bytes.len()).ok_or_else(|| Error::Format("implausible length".into()))
    }
}

/// Parses a checkpoint; any defect yields a format error and no model.
pub fn decode(bytes: &[u8]) -> Result<(Model, Metadata)> {
    if bytes.len() < MAGIC.len() + 4 + CHECKSUM_LEN {
        return Err(Error::Format("checkpoint is truncated".into()));
    }
    if &bytes[..MAGIC.len()] != MAGIC {
        return Err(Error::Format("not a checkpoint file".into()));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!("checkpoint version {version}, expected {FORMAT_VERSION}")));
    }
    let (body, checksum) = bytes.split_at(bytes.len() - CHECKSUM_LEN);
    if Sha256::digest(body).as_slice() != checksum {
        return Err(Error::Format("checkpoint checksum mismatch (corrupted or truncated)".into()));
    }
    let mut r = Reader { bytes: body, pos: 12 };
    let header_len = r.len(true)?;
    let header = std::str::from_utf8(r.take(header_len)?)
        .map_err(|_| Error::Format("checkpoint header is not UTF-8".into()))?;
    let kv = parse_key_values(header).map_err(|e| Error::Format(format!("checkpoint header: {e}")))?;
    let (meta, config_kv): (Vec<_>, Vec<_>) = kv.into_iter().partition(|(k, _)| k.starts_with(META_PREFIX));
    let config_text: String = config_kv.iter().map(|(k, v)| format!("{k} = {v}\n")).collect();
    let config = ModelConfig::parse(&config_text).map_err(|e| Error::Format(format!("checkpoint config: {e}")))?;
    let meta = meta.into_iter().map(|(k, v)| (k[META_PREFIX.len()..].to_string(), v)).collect();

    let mut model = build_model(&config).map_err(|e| Error::Format(format!("checkpoint config: {e}")))?;
    let count = r.u32()? as usize;
    if count != model.params.len() {
        return Err(Error::Format(format!("checkpoint has {count} parameter blocks, model needs {}", model.params.len())));
    }
    let mut filled = vec![false; count];
    for _ in 0..count {
        let name_len = r.len(false)?;
        let name = std::str::from_utf8(r.take(name_len)?)
            .map_err(|_| Error::Format("parameter name is not UTF-8".into()))?
            .to_string();
        let rank = r.len(false)?;
        let shape = (0..rank).map(|_| r.len(true)).collect::<Result<Vec<_>>>()?;
        let id = model.params.find(&name).ok_or_else(|| Error::Format(format!("unknown parameter `{name}`")))?;
        let tensor = model.params.get_mut(id);
        if tensor.shape() != shape.as_slice() {
            return Err(Error::Format(format!("parameter `{name}` has shape {shape:?}, expected {:?}", tensor.shape())));
        }
        let raw = r.take(8 * tensor.len())?;
        for (dst, chunk) in tensor.values_mut().iter_mut().zip(raw.chunks_exact(8)) {
            *dst = f64::from_le_bytes(chunk.try_into().expect("8 bytes"));
        }
        if std::mem::replace(&mut filled[id.index()], true) {
            return Err(Error::Format(format!("parameter `{name}` appears twice")));
        }
    }
    if r.pos != body.len() {
        return Err(Error::Format("trailing bytes after parameter blocks".into()));
    }
    Ok((model, meta))
}
