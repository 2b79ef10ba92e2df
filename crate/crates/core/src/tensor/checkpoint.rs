//! Checkpoint layout: `"SDUA"`, version byte `1`, then records of
//! `u16 LE` name length, UTF-8 name, `u8` rank, `u32 LE` dims, and the
//! `f32 LE` payload, repeated to end of file.

use std::path::Path;

use super::{ParameterStore, Scalar, Tensor};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"SDUA";
const VERSION: u8 = 1;

pub fn encode_checkpoint<T: Scalar>(store: &ParameterStore<T>) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(5 + store.num_scalars() * 4);
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    for (name, t) in store.iter() {
        let len = u16::try_from(name.len())
            .map_err(|_| Error::Parameter(format!("parameter name too long: {name}")))?;
        out.extend_from_slice(&len.to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(t.shape().len() as u8);
        for d in t.shape() {
            let d = u32::try_from(*d)
                .map_err(|_| Error::Parameter(format!("dimension too large in {name}")))?;
            out.extend_from_slice(&d.to_le_bytes());
        }
        for x in t.data() {
            out.extend_from_slice(&(x.as_f64() as f32).to_le_bytes());
        }
    }
    Ok(out)
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::format(
                self.pos,
                format!("truncated {what}: need {n} bytes, {} left", self.buf.len() - self.pos),
            ));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<ParameterStore<f32>> {
    let mut cur = Cursor { buf: bytes, pos: 0 };
    if cur.take(4, "magic")? != MAGIC {
        return Err(Error::format(0, "bad magic, expected \"SDUA\""));
    }
    let version = cur.take(1, "version")?[0];
    if version != VERSION {
        return Err(Error::format(4, format!("unsupported version {version}")));
    }
    let mut store = ParameterStore::new();
    while cur.pos < bytes.len() {
        let start = cur.pos;
        let len = u16::from_le_bytes(cur.take(2, "name length")?.try_into().unwrap()) as usize;
        let name = std::str::from_utf8(cur.take(len, "name")?)
            .map_err(|_| Error::format(start + 2, "name is not UTF-8"))?
            .to_string();
        let rank_at = cur.pos;
        let rank = cur.take(1, "rank")?[0] as usize;
        if rank == 0 || rank > 2 {
            return Err(Error::format(rank_at, format!("unsupported rank {rank}")));
        }
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(u32::from_le_bytes(cur.take(4, "dim")?.try_into().unwrap()) as usize);
        }
        let count = shape
            .iter()
            .try_fold(1usize, |a, d| a.checked_mul(*d))
            .and_then(|c| c.checked_mul(4))
            .ok_or_else(|| Error::format(rank_at, "payload size overflows"))?;
        let payload = cur.take(count, "payload")?;
        let data = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        store
            .insert(name, Tensor::new(&shape, data)?)
            .map_err(|e| Error::format(start, e.to_string()))?;
    }
    Ok(store)
}

pub fn write_checkpoint<T: Scalar>(path: &Path, store: &ParameterStore<T>) -> Result<()> {
    let bytes = encode_checkpoint(store)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint(path: &Path) -> Result<ParameterStore<f32>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}
