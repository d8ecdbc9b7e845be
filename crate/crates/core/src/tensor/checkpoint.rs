//! `PJXT` parameter files.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic     4 bytes  "PJXT"
//! version   u32
//! count     u64      number of tensor records
//! record*   name_len u64, name (UTF-8), rank u64, dims u64 * rank,
//!           values f64 * prod(dims)
//! ```

use std::io::{Read, Write};

use super::{ParamStore, Tensor};
use crate::error::{PjxError, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"PJXT";
pub const CHECKPOINT_VERSION: u32 = 1;

fn io_err(e: std::io::Error) -> PjxError {
    PjxError::io("<checkpoint stream>", e)
}

pub fn write_checkpoint<W: Write>(store: &ParamStore, mut out: W) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(store.len() as u64).to_le_bytes());
    for (name, t) in store.named() {
        buf.extend_from_slice(&(name.len() as u64).to_le_bytes());
        buf.extend_from_slice(name.as_bytes());
        buf.extend_from_slice(&(t.rank() as u64).to_le_bytes());
        for &d in t.shape() {
            buf.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in t.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    out.write_all(&buf).map_err(io_err)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| PjxError::Checkpoint(format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn len(&mut self, limit: usize) -> Result<usize> {
        let v = self.u64()?;
        usize::try_from(v)
            .ok()
            .filter(|&n| n <= limit)
            .ok_or_else(|| PjxError::Checkpoint(format!("implausible length {v}")))
    }
}

/// Reads every `(name, tensor)` record; rejects bad magic, unknown versions,
/// truncation and trailing bytes.
pub fn read_checkpoint<R: Read>(mut input: R) -> Result<Vec<(String, Tensor)>> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes).map_err(io_err)?;
    let mut c = Cursor {
        bytes: &bytes,
        pos: 0,
    };
    if c.take(4)? != CHECKPOINT_MAGIC {
        return Err(PjxError::Checkpoint("bad magic, expected PJXT".into()));
    }
    let version = u32::from_le_bytes(c.take(4)?.try_into().unwrap());
    if version != CHECKPOINT_VERSION {
        return Err(PjxError::Checkpoint(format!(
            "unsupported version {version}, expected {CHECKPOINT_VERSION}"
        )));
    }
    let remaining = bytes.len();
    let count = c.len(remaining)?;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let name_len = c.len(remaining)?;
        let name = std::str::from_utf8(c.take(name_len)?)
            .map_err(|_| PjxError::Checkpoint("tensor name is not UTF-8".into()))?
            .to_string();
        let rank = c.len(64)?;
        let dims = (0..rank)
            .map(|_| c.len(remaining))
            .collect::<Result<Vec<_>>>()?;
        let numel: usize = dims.iter().product();
        let raw = c.take(numel.checked_mul(8).unwrap_or(usize::MAX))?;
        let values = raw
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
            .collect();
        let t = Tensor::new(dims, values)
            .map_err(|e| PjxError::Checkpoint(format!("tensor `{name}`: {e}")))?;
        out.push((name, t));
    }
    if c.pos != bytes.len() {
        return Err(PjxError::Checkpoint(format!(
            "{} trailing bytes",
            bytes.len() - c.pos
        )));
    }
    Ok(out)
}
