//! Versioned binary container for named `f32` tensors plus a UTF-8 JSON
//! metadata block. Layout (all integers little-endian):
//!
//! ```text
//! magic       8 bytes  "RTNETCKP"
//! version     u32      1
//! meta_len    u32
//! meta        meta_len bytes of UTF-8 JSON
//! count       u32      number of tensors
//! repeated `count` times:
//!   name_len  u32
//!   name      name_len bytes UTF-8
//!   rank      u32
//!   dims      rank × u32
//!   values    prod(dims) × f32
//! ```

use std::io::{Read, Write};

use super::{ParamStore, Real};

pub const MAGIC: &[u8; 8] = b"RTNETCKP";
pub const VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a checkpoint (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("malformed checkpoint: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub meta: String,
    pub tensors: Vec<NamedTensor>,
}

impl Checkpoint {
    pub fn from_params<F: Real>(meta: String, params: &ParamStore<F>) -> Self {
        let tensors = params
            .specs()
            .iter()
            .map(|s| NamedTensor {
                name: s.name.clone(),
                shape: s.shape.clone(),
                values: s
                    .slot
                    .of(params.values())
                    .iter()
                    .map(|v| v.as_f64() as f32)
                    .collect(),
            })
            .collect();
        Self { meta, tensors }
    }

    /// Copies every tensor into `params`; names and shapes must match exactly.
    pub fn load_into<F: Real>(&self, params: &mut ParamStore<F>) -> Result<(), CheckpointError> {
        if self.tensors.len() != params.specs().len() {
            return Err(CheckpointError::Malformed(format!(
                "checkpoint has {} tensors, model expects {}",
                self.tensors.len(),
                params.specs().len()
            )));
        }
        for t in &self.tensors {
            let data: Vec<F> = t.values.iter().map(|&v| F::of(f64::from(v))).collect();
            params
                .set(&t.name, &t.shape, &data)
                .map_err(|e| CheckpointError::Malformed(format!("tensor {}: {e}", t.name)))?;
        }
        Ok(())
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), CheckpointError> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        write_bytes(&mut w, self.meta.as_bytes())?;
        w.write_all(&len_u32(self.tensors.len())?.to_le_bytes())?;
        for t in &self.tensors {
            write_bytes(&mut w, t.name.as_bytes())?;
            w.write_all(&len_u32(t.shape.len())?.to_le_bytes())?;
            for &d in &t.shape {
                w.write_all(&len_u32(d)?.to_le_bytes())?;
            }
            let mut buf = Vec::with_capacity(t.values.len() * 4);
            for v in &t.values {
                buf.extend_from_slice(&v.to_le_bytes());
            }
            w.write_all(&buf)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_to(&mut out).expect("writing to a Vec cannot fail");
        out
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self, CheckpointError> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        let version = read_u32(&mut r)?;
        if version != VERSION {
            return Err(CheckpointError::Version(version));
        }
        let meta = String::from_utf8(read_bytes(&mut r)?)
            .map_err(|_| CheckpointError::Malformed("metadata is not UTF-8".into()))?;
        let count = read_u32(&mut r)? as usize;
        let mut tensors = Vec::with_capacity(count.min(4096));
        for _ in 0..count {
            let name = String::from_utf8(read_bytes(&mut r)?)
                .map_err(|_| CheckpointError::Malformed("tensor name is not UTF-8".into()))?;
            let rank = read_u32(&mut r)? as usize;
            if rank > 8 {
                return Err(CheckpointError::Malformed(format!("tensor {name} has rank {rank}")));
            }
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(read_u32(&mut r)? as usize);
            }
            let n: usize = shape.iter().product();
            let mut raw = vec![0u8; n * 4];
            r.read_exact(&mut raw)?;
            let values = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            tensors.push(NamedTensor { name, shape, values });
        }
        Ok(Self { meta, tensors })
    }
}

fn len_u32(n: usize) -> Result<u32, CheckpointError> {
    u32::try_from(n).map_err(|_| CheckpointError::Malformed(format!("length {n} exceeds u32")))
}

fn write_bytes<W: Write>(w: &mut W, bytes: &[u8]) -> Result<(), CheckpointError> {
    w.write_all(&len_u32(bytes.len())?.to_le_bytes())?;
    w.write_all(bytes)?;
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32, CheckpointError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_bytes<R: Read>(r: &mut R) -> Result<Vec<u8>, CheckpointError> {
    let n = read_u32(r)? as usize;
    if n > 1 << 30 {
        return Err(CheckpointError::Malformed(format!("block of {n} bytes")));
    }
    let mut v = vec![0u8; n];
    r.read_exact(&mut v)?;
    Ok(v)
}
