//! Binary model file.
//!
//! ```text
//! magic      8 bytes  "CPTNNMDL"
//! version    u32      1
//! dims       5 x u32  char_dim, provider_dim, hidden1, hidden2, hidden3
//! fingerprint u64     vocabulary hash
//! icd_count  u32
//! labels     u32 count, then per label: u8 length + bytes
//! providers  u32 count, then per provider: u16 length + bytes
//! tensors    f32 values in Weights tensor order
//! checksum   32 bytes SHA-256 of everything above
//! ```
//!
//! All integers and floats are little-endian.

use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::model::{ModelParams, Weights};
use super::{Dims, NnError};
use crate::codes::CptCode;
use crate::dataset::Vocabularies;

pub const MAGIC: &[u8; 8] = b"CPTNNMDL";
pub const VERSION: u32 = 1;
const CHECKSUM_LEN: usize = 32;

pub fn to_bytes(model: &ModelParams) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    let d = &model.dims;
    for v in [d.char_dim, d.provider_dim, d.hidden[0], d.hidden[1], d.hidden[2]] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    out.extend_from_slice(&model.fingerprint().to_le_bytes());
    out.extend_from_slice(&(model.vocabs.icd_count() as u32).to_le_bytes());
    out.extend_from_slice(&(model.vocabs.label_count() as u32).to_le_bytes());
    for label in model.vocabs.labels() {
        out.push(label.as_str().len() as u8);
        out.extend_from_slice(label.as_str().as_bytes());
    }
    out.extend_from_slice(&(model.vocabs.provider_count() as u32).to_le_bytes());
    for p in model.vocabs.providers() {
        out.extend_from_slice(&(p.len() as u16).to_le_bytes());
        out.extend_from_slice(p.as_bytes());
    }
    for tensor in model.weights.tensors() {
        for v in tensor {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], NnError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| NnError::Corrupt("unexpected end of model data".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, NnError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, NnError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, NnError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, NnError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn string(&mut self, len: usize) -> Result<String, NnError> {
        String::from_utf8(self.take(len)?.to_vec()).map_err(|_| NnError::Corrupt("non UTF-8 string".into()))
    }
}

pub fn from_bytes(bytes: &[u8]) -> Result<ModelParams, NnError> {
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return Err(NnError::BadMagic);
    }
    if bytes.len() < MAGIC.len() + 4 + CHECKSUM_LEN {
        return Err(NnError::ChecksumMismatch);
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != VERSION {
        return Err(NnError::VersionMismatch(version));
    }
    let (body, checksum) = bytes.split_at(bytes.len() - CHECKSUM_LEN);
    if Sha256::digest(body).as_slice() != checksum {
        return Err(NnError::ChecksumMismatch);
    }

    let mut r = Reader { buf: body, pos: 12 };
    let mut dims = [0usize; 5];
    for d in &mut dims {
        *d = r.u32()? as usize;
    }
    let dims = Dims {
        char_dim: dims[0],
        provider_dim: dims[1],
        hidden: [dims[2], dims[3], dims[4]],
    };
    dims.validate()?;
    let fingerprint = r.u64()?;
    let icd_count = r.u32()? as usize;
    let n_labels = r.u32()? as usize;
    let mut labels = Vec::with_capacity(n_labels.min(1 << 16));
    for _ in 0..n_labels {
        let len = r.u8()? as usize;
        let text = r.string(len)?;
        labels.push(CptCode::parse(&text).map_err(|e| NnError::Corrupt(e.to_string()))?);
    }
    let n_providers = r.u32()? as usize;
    let mut providers = Vec::with_capacity(n_providers.min(1 << 16));
    for _ in 0..n_providers {
        let len = r.u16()? as usize;
        providers.push(r.string(len)?);
    }
    let vocabs = Vocabularies::from_parts(labels, providers, icd_count);
    if vocabs.fingerprint() != fingerprint {
        return Err(NnError::VocabMismatch);
    }

    let mut weights = Weights::zeros(&dims, vocabs.provider_count(), vocabs.label_count());
    for tensor in weights.tensors_mut() {
        let raw = r.take(tensor.len() * 4)?;
        for (v, b) in tensor.iter_mut().zip(raw.chunks_exact(4)) {
            *v = f32::from_le_bytes(b.try_into().unwrap());
        }
    }
    if r.pos != body.len() {
        return Err(NnError::Corrupt("trailing bytes after tensors".into()));
    }
    Ok(ModelParams { dims, vocabs, weights })
}

pub fn save_model(model: &ModelParams, path: impl AsRef<Path>) -> Result<(), NnError> {
    fs::write(path, to_bytes(model))?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<ModelParams, NnError> {
    from_bytes(&fs::read(path)?)
}

/// Loads a model and checks it was trained with `vocabs`.
pub fn load_model_for(path: impl AsRef<Path>, vocabs: &Vocabularies) -> Result<ModelParams, NnError> {
    let model = load_model(path)?;
    model.check_vocabs(vocabs)?;
    Ok(model)
}
