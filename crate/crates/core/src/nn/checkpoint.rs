//! Little-endian binary checkpoints.
//!
//! ```text
//! "RPLB" | version u32 | param count u32
//! per parameter: name len u32 | utf-8 name | rank u32 | extents u32 x rank | f32 values
//! ```
//!
//! Batchnorm running statistics are stored as ordinary entries.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::nn::Model;

pub const MAGIC: &[u8; 4] = b"RPLB";
pub const VERSION: u32 = 1;

pub fn encode_checkpoint(model: &Model) -> Vec<u8> {
    let params = model.params();
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for p in params {
        out.extend_from_slice(&(p.name.len() as u32).to_le_bytes());
        out.extend_from_slice(p.name.as_bytes());
        out.extend_from_slice(&(p.dims.len() as u32).to_le_bytes());
        for &d in &p.dims {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in p.value.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn save_checkpoint(path: impl AsRef<Path>, model: &Model) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_checkpoint(model)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>, model: &mut Model) -> Result<()> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes, model)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::format(format!(
                "checkpoint truncated at byte offset {} reading {what} ({n} bytes needed, {} left)",
                self.pos,
                self.bytes.len() - self.pos
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }
}

/// Loads checkpoint bytes into `model`, which must have the same parameter
/// names and shapes in the same order. Nothing is modified on error.
pub fn decode_checkpoint(bytes: &[u8], model: &mut Model) -> Result<()> {
    let mut r = Reader { bytes, pos: 0 };
    let magic = r.take(4, "magic")?;
    if magic != MAGIC {
        return Err(Error::format(format!(
            "bad checkpoint magic {magic:?} at byte offset 0, expected \"RPLB\""
        )));
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(Error::format(format!(
            "unsupported checkpoint version {version} at byte offset 4"
        )));
    }
    let count = r.u32("parameter count")? as usize;
    let expected = model.params().len();
    if count != expected {
        return Err(Error::format(format!(
            "checkpoint holds {count} parameters, model {} expects {expected}",
            model.name()
        )));
    }

    let mut values = Vec::with_capacity(count);
    for p in model.params() {
        let at = r.pos;
        let name_len = r.u32("name length")? as usize;
        let name = std::str::from_utf8(r.take(name_len, "name")?)
            .map_err(|_| Error::format(format!("parameter name at byte offset {at} is not utf-8")))?;
        let rank = r.u32("rank")? as usize;
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            dims.push(r.u32("extent")? as usize);
        }
        if name != p.name || dims != p.dims {
            return Err(Error::format(format!(
                "shape mismatch at parameter {} (byte offset {at}): checkpoint has {name} {dims:?}, model expects {} {:?}",
                p.name, p.name, p.dims
            )));
        }
        let len: usize = dims.iter().product();
        let raw = r.take(len * 4, "values")?;
        values.push(
            raw.chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                .collect::<Vec<f32>>(),
        );
    }
    if r.pos != bytes.len() {
        return Err(Error::format(format!(
            "{} trailing bytes after checkpoint end at byte offset {}",
            bytes.len() - r.pos,
            r.pos
        )));
    }
    for (p, v) in model.params_mut().into_iter().zip(values) {
        p.value.data_mut().copy_from_slice(&v);
    }
    Ok(())
}
