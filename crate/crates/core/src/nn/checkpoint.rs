//! Named-tensor checkpoints.
//!
//! Little-endian layout:
//!
//! ```text
//! magic   "LEAPCKPT"        8 bytes
//! version u32 = 1
//! count   u64
//! count × { name_len u32, name utf-8, ndim u32, ndim × u64 dims, Π dims × f32 }
//! ```
//!
//! Values are stored as `f32`; loading widens back to `f64`.

use std::io::{Read, Write};

use super::{NnError, Tensor};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"LEAPCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Checkpoint {
    tensors: Vec<(String, Tensor)>,
}

impl Checkpoint {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: impl Into<String>, t: Tensor) {
        self.tensors.push((name.into(), t));
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    /// Fetch a tensor and check its shape.
    pub fn expect(&self, name: &str, shape: &[usize]) -> Result<Tensor, NnError> {
        let t = self
            .get(name)
            .ok_or_else(|| NnError::Checkpoint(format!("missing tensor {name:?}")))?;
        if t.shape() != shape {
            return Err(NnError::Checkpoint(format!(
                "tensor {name:?} has shape {:?}, expected {:?}",
                t.shape(),
                shape
            )));
        }
        Ok(t.clone())
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.iter().map(|(n, _)| n.as_str())
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }
}

pub fn write_checkpoint<W: Write>(ckpt: &Checkpoint, mut w: W) -> Result<(), NnError> {
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    w.write_all(&(ckpt.tensors.len() as u64).to_le_bytes())?;
    for (name, t) in &ckpt.tensors {
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        w.write_all(&(t.shape().len() as u32).to_le_bytes())?;
        for &d in t.shape() {
            w.write_all(&(d as u64).to_le_bytes())?;
        }
        let mut buf = Vec::with_capacity(t.len() * 4);
        for &v in t.data() {
            buf.extend_from_slice(&(v as f32).to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    Ok(())
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], NnError> {
        if self.buf.len() - self.pos < n {
            return Err(NnError::Checkpoint("truncated checkpoint".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, NnError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, NnError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<Checkpoint, NnError> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)?;
    let mut c = Cursor { buf: &buf, pos: 0 };
    if c.take(8)? != CHECKPOINT_MAGIC {
        return Err(NnError::Checkpoint("bad magic".into()));
    }
    let version = c.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(NnError::Checkpoint(format!("unsupported version {version}")));
    }
    let count = c.u64()?;
    let mut ckpt = Checkpoint::new();
    for _ in 0..count {
        let name_len = c.u32()? as usize;
        let name = std::str::from_utf8(c.take(name_len)?)
            .map_err(|_| NnError::Checkpoint("tensor name is not utf-8".into()))?
            .to_string();
        let ndim = c.u32()? as usize;
        let mut shape = Vec::with_capacity(ndim.min(8));
        for _ in 0..ndim {
            shape.push(c.u64()? as usize);
        }
        let n = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .and_then(|n| n.checked_mul(4).map(|_| n))
            .ok_or_else(|| NnError::Checkpoint("tensor size overflow".into()))?;
        let raw = c.take(n * 4)?;
        let data = raw
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64)
            .collect();
        ckpt.push(name, Tensor::from_vec(&shape, data)?);
    }
    if c.pos != buf.len() {
        return Err(NnError::Checkpoint("trailing bytes after tensor table".into()));
    }
    Ok(ckpt)
}
