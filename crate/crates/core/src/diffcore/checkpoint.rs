//! Binary checkpoint container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "VPNF"                      magic
//! u32                         format version
//! u32                         number of tensor records
//! (u32 role, u32 rows, u32 cols) * records
//! f32 * Σ rows·cols           parameter block
//! u64                         trailer length in bytes
//! [u8]                        JSON metadata trailer
//! ```
//!
//! Parameters are held in double precision in memory and rounded to single
//! precision on write.

use std::io::{Read, Write};

use crate::diffcore::params::{ParamStore, TensorRole};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"VPNF";
pub const CHECKPOINT_VERSION: u32 = 1;

const KIND: &str = "checkpoint";

pub fn write_checkpoint<W: Write>(out: &mut W, params: &ParamStore, trailer: &serde_json::Value) -> Result<()> {
    let mut buf = Vec::with_capacity(16 + params.len() * 4);
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(params.manifest().len() as u32).to_le_bytes());
    for rec in params.manifest() {
        buf.extend_from_slice(&rec.role.tag().to_le_bytes());
        buf.extend_from_slice(&(rec.rows as u32).to_le_bytes());
        buf.extend_from_slice(&(rec.cols as u32).to_le_bytes());
    }
    for &v in params.values() {
        buf.extend_from_slice(&(v as f32).to_le_bytes());
    }
    let meta = serde_json::to_vec(trailer)?;
    buf.extend_from_slice(&(meta.len() as u64).to_le_bytes());
    buf.extend_from_slice(&meta);
    out.write_all(&buf).map_err(|e| Error::io("<checkpoint stream>", e))
}

/// Reads a checkpoint; `omega0` is taken from the trailer's `omega0` field.
pub fn read_checkpoint<R: Read>(input: &mut R) -> Result<(ParamStore, serde_json::Value)> {
    let mut bytes = Vec::new();
    input
        .read_to_end(&mut bytes)
        .map_err(|e| Error::io("<checkpoint stream>", e))?;
    let mut cur = Cursor { bytes: &bytes, pos: 0 };

    if cur.take(4)? != CHECKPOINT_MAGIC {
        return Err(Error::format(KIND, "bad magic"));
    }
    let version = cur.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::format(KIND, format!("unsupported version {version}")));
    }
    let n = cur.u32()? as usize;
    let mut shapes = Vec::with_capacity(n);
    for _ in 0..n {
        let tag = cur.u32()?;
        let role = TensorRole::from_tag(tag).ok_or_else(|| Error::format(KIND, format!("unknown role tag {tag}")))?;
        let rows = cur.u32()? as usize;
        let cols = cur.u32()? as usize;
        shapes.push((role, rows, cols));
    }
    let count: usize = shapes.iter().map(|(_, r, c)| r * c).sum();
    let raw = cur.take(count * 4)?;
    let values = raw
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
        .collect();
    let meta_len = cur.u64()? as usize;
    let trailer: serde_json::Value = serde_json::from_slice(cur.take(meta_len)?)?;
    if cur.pos != bytes.len() {
        return Err(Error::format(KIND, "trailing bytes after metadata"));
    }
    let omega0 = trailer
        .get("omega0")
        .and_then(serde_json::Value::as_f64)
        .ok_or_else(|| Error::format(KIND, "metadata lacks omega0"))?;
    let params = ParamStore::from_parts(&shapes, values, omega0)?;
    Ok((params, trailer))
}

pub(crate) struct Cursor<'a> {
    pub bytes: &'a [u8],
    pub pos: usize,
}

impl<'a> Cursor<'a> {
    pub fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::format("binary", format!("truncated at byte {}", self.pos)));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffcore::params::MlpConfig;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use serde_json::json;

    fn sample() -> (ParamStore, serde_json::Value) {
        let cfg = MlpConfig::new(2, 8, 1);
        let p = ParamStore::siren_init(&cfg, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        (p, json!({"omega0": 30.0, "depth": 2, "width": 8, "head": "vpnf"}))
    }

    #[test]
    fn bytes_round_trip_exactly() {
        let (p, meta) = sample();
        let mut a = Vec::new();
        write_checkpoint(&mut a, &p, &meta).unwrap();
        let (q, meta2) = read_checkpoint(&mut a.as_slice()).unwrap();
        assert_eq!(q, p.rounded_to_f32());
        assert_eq!(meta2, meta);
        let mut b = Vec::new();
        write_checkpoint(&mut b, &q, &meta2).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_corruption() {
        let (p, meta) = sample();
        let mut a = Vec::new();
        write_checkpoint(&mut a, &p, &meta).unwrap();
        let mut bad = a.clone();
        bad[0] = b'X';
        assert!(matches!(read_checkpoint(&mut bad.as_slice()), Err(Error::Format { .. })));
        let truncated = &a[..a.len() - 3];
        assert!(read_checkpoint(&mut &truncated[..]).is_err());
    }
}
