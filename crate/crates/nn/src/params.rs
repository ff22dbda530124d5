//! Named parameter and buffer storage shared by all layers of a network.
//!
//! Parameters are trainable (they carry gradients); buffers hold
//! non-trainable state such as batch-norm running statistics. Both are
//! registered in construction order, which fixes the checkpoint layout.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ParamId(pub(crate) usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BufferId(pub(crate) usize);

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a checkpoint file (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("malformed checkpoint header: {0}")]
    Header(#[from] serde_json::Error),
    #[error("checkpoint does not match model: {0}")]
    Mismatch(String),
}

#[derive(Serialize, Deserialize)]
struct EntryMeta {
    name: String,
    shape: [usize; 4],
}

#[derive(Serialize, Deserialize)]
struct CheckpointHeader {
    meta: serde_json::Value,
    params: Vec<EntryMeta>,
    buffers: Vec<EntryMeta>,
}

const MAGIC: &[u8; 4] = b"CSEG";
const VERSION: u32 = 1;

#[derive(Default)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Tensor>,
    grads: Vec<Tensor>,
    buf_names: Vec<String>,
    buf_values: Vec<Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_param(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        let name = name.into();
        debug_assert!(
            !self.names.contains(&name),
            "duplicate parameter name {name}"
        );
        let id = ParamId(self.values.len());
        self.grads.push(Tensor::zeros(value.raw_dim()));
        self.values.push(value);
        self.names.push(name);
        id
    }

    pub fn add_buffer(&mut self, name: impl Into<String>, value: Tensor) -> BufferId {
        let id = BufferId(self.buf_values.len());
        self.buf_names.push(name.into());
        self.buf_values.push(value);
        id
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.values[id.0]
    }

    pub fn grad(&self, id: ParamId) -> &Tensor {
        &self.grads[id.0]
    }

    pub fn accumulate_grad(&mut self, id: ParamId, delta: &Tensor) {
        self.grads[id.0] += delta;
    }

    pub fn zero_grads(&mut self) {
        for g in &mut self.grads {
            g.fill(0.0);
        }
    }

    pub fn buffer(&self, id: BufferId) -> &Tensor {
        &self.buf_values[id.0]
    }

    pub fn buffer_mut(&mut self, id: BufferId) -> &mut Tensor {
        &mut self.buf_values[id.0]
    }

    pub fn num_params(&self) -> usize {
        self.values.len()
    }

    /// Total number of trainable scalars.
    pub fn param_count(&self) -> usize {
        self.values.iter().map(|v| v.len()).sum()
    }

    pub fn param_names(&self) -> impl Iterator<Item = &str> {
        self.names.iter().map(|s| s.as_str())
    }

    /// `(name, value)` pairs in registration order.
    pub fn params(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(|s| s.as_str()).zip(self.values.iter())
    }

    /// `(name, gradient)` pairs in registration order.
    pub fn param_grads(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(|s| s.as_str()).zip(self.grads.iter())
    }

    /// Applies `f(value, grad)` to every parameter in registration order.
    pub fn update_params(&mut self, mut f: impl FnMut(usize, &mut Tensor, &Tensor)) {
        for (i, (v, g)) in self.values.iter_mut().zip(self.grads.iter()).enumerate() {
            f(i, v, g);
        }
    }

    fn dims(t: &Tensor) -> [usize; 4] {
        let d = t.dim();
        [d.0, d.1, d.2, d.3]
    }

    /// Serializes all parameters and buffers plus a caller-supplied metadata
    /// document. Layout: magic, version, header length, JSON header, then raw
    /// little-endian f32 data in registration order.
    pub fn save(
        &self,
        mut w: impl Write,
        meta: &serde_json::Value,
    ) -> Result<(), CheckpointError> {
        let header = CheckpointHeader {
            meta: meta.clone(),
            params: self
                .names
                .iter()
                .zip(&self.values)
                .map(|(n, v)| EntryMeta {
                    name: n.clone(),
                    shape: Self::dims(v),
                })
                .collect(),
            buffers: self
                .buf_names
                .iter()
                .zip(&self.buf_values)
                .map(|(n, v)| EntryMeta {
                    name: n.clone(),
                    shape: Self::dims(v),
                })
                .collect(),
        };
        let header_bytes = serde_json::to_vec(&header)?;
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(header_bytes.len() as u64).to_le_bytes())?;
        w.write_all(&header_bytes)?;
        for t in self.values.iter().chain(self.buf_values.iter()) {
            for v in t.iter() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    /// Reads only the metadata document of a checkpoint stream.
    pub fn read_meta(mut r: impl Read) -> Result<serde_json::Value, CheckpointError> {
        let header = Self::read_header(&mut r)?;
        Ok(header.meta)
    }

    fn read_header(r: &mut impl Read) -> Result<CheckpointHeader, CheckpointError> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        let mut v = [0u8; 4];
        r.read_exact(&mut v)?;
        let version = u32::from_le_bytes(v);
        if version != VERSION {
            return Err(CheckpointError::Version(version));
        }
        let mut len = [0u8; 8];
        r.read_exact(&mut len)?;
        let len = u64::from_le_bytes(len) as usize;
        let mut header_bytes = vec![0u8; len];
        r.read_exact(&mut header_bytes)?;
        Ok(serde_json::from_slice(&header_bytes)?)
    }

    /// Loads checkpoint data into this store. Every name and shape must match
    /// the store's registration order exactly; returns the stored metadata.
    pub fn load(&mut self, mut r: impl Read) -> Result<serde_json::Value, CheckpointError> {
        let header = Self::read_header(&mut r)?;
        if header.params.len() != self.names.len() {
            return Err(CheckpointError::Mismatch(format!(
                "checkpoint has {} parameters, model has {}",
                header.params.len(),
                self.names.len()
            )));
        }
        if header.buffers.len() != self.buf_names.len() {
            return Err(CheckpointError::Mismatch(format!(
                "checkpoint has {} buffers, model has {}",
                header.buffers.len(),
                self.buf_names.len()
            )));
        }
        let check = |entry: &EntryMeta, name: &str, t: &Tensor| {
            if entry.name != name {
                return Err(CheckpointError::Mismatch(format!(
                    "expected tensor {name}, checkpoint has {}",
                    entry.name
                )));
            }
            if entry.shape != Self::dims(t) {
                return Err(CheckpointError::Mismatch(format!(
                    "tensor {name}: shape {:?} vs model {:?}",
                    entry.shape,
                    Self::dims(t)
                )));
            }
            Ok(())
        };
        for (entry, (name, t)) in header.params.iter().zip(self.names.iter().zip(&self.values)) {
            check(entry, name, t)?;
        }
        for (entry, (name, t)) in header
            .buffers
            .iter()
            .zip(self.buf_names.iter().zip(&self.buf_values))
        {
            check(entry, name, t)?;
        }
        let mut buf = Vec::new();
        for t in self.values.iter_mut().chain(self.buf_values.iter_mut()) {
            buf.resize(t.len() * 4, 0);
            r.read_exact(&mut buf)?;
            for (chunk, v) in buf.chunks_exact(4).zip(t.iter_mut()) {
                *v = f32::from_le_bytes(chunk.try_into().unwrap());
            }
        }
        Ok(header.meta)
    }
}
