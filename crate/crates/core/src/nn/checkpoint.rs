//! Flat container of named tensors.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic  b"FFCK"
//! u32    version (1)
//! u32    entry count
//! per entry:  u32 name length, UTF-8 name, u8 dtype tag (0 = f32, 1 = f64),
//!             u32 rank, u64 × rank dims
//! payload: each entry's values, raw little-endian, in header order
//! ```

use std::path::Path;

use crate::error::{Error, Result};

use super::scalar::{DType, Scalar};
use super::tensor::Tensor;

const MAGIC: &[u8; 4] = b"FFCK";
const VERSION: u32 = 1;

pub fn encode<T: Scalar>(tensors: &[(String, Tensor<T>)]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (name, t) in tensors {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(T::DTYPE.tag());
        out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
        for &d in t.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
    }
    for (_, t) in tensors {
        for &v in t.data() {
            v.write_le(&mut out);
        }
    }
    out
}

struct Reader<'b> {
    bytes: &'b [u8],
    pos: usize,
    context: &'b str,
}

impl<'b> Reader<'b> {
    fn fail(&self, message: impl Into<String>) -> Error {
        Error::Format {
            context: self.context.to_string(),
            offset: self.pos as u64,
            message: message.into(),
        }
    }

    fn take(&mut self, n: usize) -> Result<&'b [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(self.fail(format!("truncated: need {n} more bytes")));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

pub fn decode<T: Scalar>(bytes: &[u8], context: &str) -> Result<Vec<(String, Tensor<T>)>> {
    let mut r = Reader {
        bytes,
        pos: 0,
        context,
    };
    if r.take(4)? != MAGIC {
        return Err(Error::Format {
            context: context.to_string(),
            offset: 0,
            message: "bad magic".into(),
        });
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(r.fail(format!("unsupported version {version}")));
    }
    let count = r.u32()? as usize;
    let mut header = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|_| r.fail("tensor name is not UTF-8"))?
            .to_string();
        let tag = r.take(1)?[0];
        let dtype = DType::from_tag(tag).ok_or_else(|| r.fail(format!("unknown dtype tag {tag}")))?;
        if dtype != T::DTYPE {
            return Err(r.fail(format!("tensor {name} is {dtype:?}, expected {:?}", T::DTYPE)));
        }
        let rank = r.u32()? as usize;
        let mut shape = Vec::with_capacity(rank.min(16));
        for _ in 0..rank {
            shape.push(r.u64()? as usize);
        }
        header.push((name, shape));
    }
    let size = T::DTYPE.size();
    let mut out = Vec::with_capacity(header.len());
    for (name, shape) in header {
        let numel = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| r.fail(format!("tensor {name} shape overflows")))?;
        let raw = r.take(numel.checked_mul(size).ok_or_else(|| r.fail("payload overflows"))?)?;
        let data = raw.chunks_exact(size).map(T::read_le).collect();
        out.push((name, Tensor::new(shape, data)?));
    }
    if r.pos != bytes.len() {
        return Err(r.fail("trailing bytes after payload"));
    }
    Ok(out)
}

pub fn save<T: Scalar>(path: impl AsRef<Path>, tensors: &[(String, Tensor<T>)]) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode(tensors)).map_err(|e| Error::io(path, e))
}

pub fn load<T: Scalar>(path: impl AsRef<Path>) -> Result<Vec<(String, Tensor<T>)>> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, &path.display().to_string())
}
