//! `VPSE` checkpoint files: magic, u32 version, u32 d_in / d_hidden /
//! d_embed, then `w1, b1, w2, b2` as little-endian f64, row-major.

use std::fs;
use std::path::Path;

use super::head::EmbeddingHeadParams;
use crate::binio::LeReader;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"VPSE";
const VERSION: u32 = 1;

pub fn encode_checkpoint(params: &EmbeddingHeadParams) -> Vec<u8> {
    let mut out = Vec::with_capacity(20 + 8 * params.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    for d in [params.d_in, params.d_hidden, params.d_embed] {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for v in params.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<EmbeddingHeadParams> {
    let mut r = LeReader::new(bytes);
    if r.take(4).map_err(|_| Error::BadMagic)? != MAGIC {
        return Err(Error::BadMagic);
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let d_in = r.u32()? as usize;
    let d_hidden = r.u32()? as usize;
    let d_embed = r.u32()? as usize;
    let count = d_in
        .checked_mul(d_hidden)
        .zip(d_hidden.checked_mul(d_embed))
        .and_then(|(a, b)| a.checked_add(b)?.checked_add(d_hidden + d_embed))
        .filter(|n| n.checked_mul(8).is_some_and(|b| b <= r.remaining()))
        .ok_or(Error::TruncatedFile)?;
    let mut params = EmbeddingHeadParams::zeros(d_in, d_hidden, d_embed);
    debug_assert_eq!(params.len(), count);
    for v in params.values_mut() {
        *v = r.f64()?;
    }
    r.finish()?;
    Ok(params)
}

pub fn read_checkpoint(path: impl AsRef<Path>) -> Result<EmbeddingHeadParams> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::from(e).at(path))?;
    decode_checkpoint(&bytes).map_err(|e| e.at(path))
}

pub fn write_checkpoint(params: &EmbeddingHeadParams, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_checkpoint(params)).map_err(|e| Error::from(e).at(path))
}
