//! Binary checkpoint container, all integers and floats little-endian:
//!
//! ```text
//! magic "EARLCKPT" | format u32 | k u32 | P u32 | bag u8 | D u32 | S u32
//! | V u32 | pad u32 | vocab hash [64 ascii] | version u64
//! | W [F·V f64] | b [V f64]
//! ```

use std::path::Path;

use crate::minirtl::Vocab;
use crate::policy::{descriptor_anchors, FeatureSpec, PolicyParams};

const MAGIC: &[u8; 8] = b"EARLCKPT";
const FORMAT: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("checkpoint io: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed checkpoint: {0}")]
    Format(String),
    #[error("checkpoint vocabulary hash {found} does not match {expected}")]
    VocabMismatch { expected: String, found: String },
}

pub fn encode(params: &PolicyParams) -> Vec<u8> {
    let s = params.spec;
    let mut out = Vec::with_capacity(128 + 8 * (params.w.len() + params.b.len()));
    out.extend_from_slice(MAGIC);
    for x in [
        FORMAT,
        s.context as u32,
        s.position_buckets as u32,
    ] {
        out.extend_from_slice(&x.to_le_bytes());
    }
    out.push(u8::from(s.prompt_bag));
    for x in [
        s.descriptor_buckets as u32,
        s.prompt_slots as u32,
        params.vocab_size as u32,
        params.pad,
    ] {
        out.extend_from_slice(&x.to_le_bytes());
    }
    let mut hash = [b' '; 64];
    let h = params.vocab_hash.as_bytes();
    hash[..h.len().min(64)].copy_from_slice(&h[..h.len().min(64)]);
    out.extend_from_slice(&hash);
    out.extend_from_slice(&params.version.to_le_bytes());
    for x in params.w.iter().chain(&params.b) {
        out.extend_from_slice(&x.to_le_bytes());
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        let end = self.at.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| CheckpointError::Format("unexpected end of file".into()))?;
        let s = &self.bytes[self.at..end];
        self.at = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>, CheckpointError> {
        let raw = self.take(n.checked_mul(8).ok_or_else(|| CheckpointError::Format("size overflow".into()))?)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }
}

/// Decodes a checkpoint for `vocab`, rejecting any other vocabulary.
pub fn decode(bytes: &[u8], vocab: &Vocab) -> Result<PolicyParams, CheckpointError> {
    let mut r = Reader { bytes, at: 0 };
    if r.take(8)? != MAGIC {
        return Err(CheckpointError::Format("bad magic".into()));
    }
    let format = r.u32()?;
    if format != FORMAT {
        return Err(CheckpointError::Format(format!("unsupported format version {format}")));
    }
    let context = r.u32()? as usize;
    let position_buckets = r.u32()? as usize;
    let prompt_bag = match r.take(1)?[0] {
        0 => false,
        1 => true,
        b => return Err(CheckpointError::Format(format!("bad bag flag {b}"))),
    };
    let spec = FeatureSpec {
        context,
        position_buckets,
        prompt_bag,
        descriptor_buckets: r.u32()? as usize,
        prompt_slots: r.u32()? as usize,
    };
    let v = r.u32()? as usize;
    let pad = r.u32()?;
    let found = std::str::from_utf8(r.take(64)?)
        .map_err(|_| CheckpointError::Format("vocabulary hash is not ascii".into()))?
        .trim_end()
        .to_string();
    let expected = vocab.hash();
    if found != expected || v != vocab.len() {
        return Err(CheckpointError::VocabMismatch { expected, found });
    }
    if context == 0 || position_buckets == 0 {
        return Err(CheckpointError::Format("zero context or position buckets".into()));
    }
    let version = r.u64()?;
    let w = r.f64s(spec.dim(v) * v)?;
    let b = r.f64s(v)?;
    if r.at != bytes.len() {
        return Err(CheckpointError::Format("trailing bytes".into()));
    }
    let params = PolicyParams {
        spec,
        vocab_size: v,
        pad,
        vocab_hash: found,
        anchors: descriptor_anchors(vocab),
        version,
        w,
        b,
    };
    if !params.is_finite() {
        return Err(CheckpointError::Format("non-finite parameter".into()));
    }
    Ok(params)
}

pub fn save(path: &Path, params: &PolicyParams) -> Result<(), CheckpointError> {
    std::fs::write(path, encode(params))?;
    Ok(())
}

pub fn load(path: &Path, vocab: &Vocab) -> Result<PolicyParams, CheckpointError> {
    decode(&std::fs::read(path)?, vocab)
}
