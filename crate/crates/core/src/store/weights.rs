//! Named-tensor weight container.
//!
//! Binary layout, all integers little-endian:
//!
//! ```text
//! "CNSP" | u32 version (=1) | u32 tensor count
//! per tensor: u16 name length | UTF-8 name | u8 ndim | ndim x u32 dims | f32 data
//! ```

use indexmap::IndexMap;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::store::spec::ShapePlan;
use crate::tensor::Tensor;

pub const WEIGHTS_MAGIC: [u8; 4] = *b"CNSP";
pub const WEIGHTS_VERSION: u32 = 1;

pub fn conv_kernels(i: usize) -> String {
    format!("conv{i}.kernels")
}

pub fn conv_bias(i: usize) -> String {
    format!("conv{i}.bias")
}

pub fn fc_weights(i: usize) -> String {
    format!("fc{i}.weights")
}

pub fn fc_bias(i: usize) -> String {
    format!("fc{i}.bias")
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct WeightStore {
    entries: IndexMap<String, Tensor>,
}

impl WeightStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) {
        self.entries.insert(name.into(), tensor);
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.entries
            .get(name)
            .ok_or_else(|| Error::MissingTensor(name.to_string()))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor> {
        self.entries
            .get_mut(name)
            .ok_or_else(|| Error::MissingTensor(name.to_string()))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.entries.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Tensor)> {
        self.entries.iter_mut()
    }

    /// Names and dims every model with this plan must carry, in canonical order.
    pub fn expected_layout(plan: &ShapePlan) -> Vec<(String, Vec<usize>)> {
        let mut out = Vec::new();
        for (i, c) in plan.convs.iter().enumerate() {
            out.push((
                conv_kernels(i),
                vec![c.out_channels, c.in_channels, c.kernel_size, c.kernel_size],
            ));
            out.push((conv_bias(i), vec![c.out_channels]));
        }
        for (i, f) in plan.fcs.iter().enumerate() {
            out.push((fc_weights(i), vec![f.out_features, f.in_features]));
            out.push((fc_bias(i), vec![f.out_features]));
        }
        out
    }

    pub fn validate(&self, plan: &ShapePlan) -> Result<()> {
        let layout = Self::expected_layout(plan);
        for (name, dims) in &layout {
            let t = self.get(name)?;
            if t.dims() != dims.as_slice() {
                return Err(Error::TensorShape {
                    name: name.clone(),
                    expected: dims.clone(),
                    found: t.dims().to_vec(),
                });
            }
        }
        if self.entries.len() != layout.len() {
            let extra = self
                .entries
                .keys()
                .find(|k| !layout.iter().any(|(n, _)| n == *k))
                .cloned()
                .unwrap_or_default();
            return Err(Error::Malformed(format!("unexpected tensor {extra:?}")));
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let payload: usize = self
            .entries
            .iter()
            .map(|(n, t)| 2 + n.len() + 1 + 4 * t.dims().len() + 4 * t.len())
            .sum();
        let mut out = Vec::with_capacity(12 + payload);
        out.extend_from_slice(&WEIGHTS_MAGIC);
        out.extend_from_slice(&WEIGHTS_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        for (name, t) in &self.entries {
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.push(t.dims().len() as u8);
            for &d in t.dims() {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for &v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        let magic = r.magic()?;
        if magic != WEIGHTS_MAGIC {
            return Err(Error::BadMagic {
                expected: WEIGHTS_MAGIC,
                found: magic,
            });
        }
        let version = r.u32("version")?;
        if version != WEIGHTS_VERSION {
            return Err(Error::VersionMismatch {
                expected: WEIGHTS_VERSION,
                found: version,
            });
        }
        let count = r.u32("tensor count")? as usize;
        let mut store = WeightStore::new();
        for i in 0..count {
            let name_len = r.u16("name length")? as usize;
            let name = std::str::from_utf8(r.take(name_len, "tensor name")?)
                .map_err(|e| Error::Malformed(format!("tensor {i} name: {e}")))?
                .to_string();
            let ndim = r.take(1, "ndim")?[0] as usize;
            let dims = (0..ndim)
                .map(|_| r.u32("dims").map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            let n: usize = dims.iter().product();
            let raw = r.take(n * 4, &format!("data of {name:?}"))?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            if store.entries.contains_key(&name) {
                return Err(Error::Malformed(format!("duplicate tensor {name:?}")));
            }
            store.insert(name, Tensor::new(dims, data)?);
        }
        if !r.is_done() {
            return Err(Error::Malformed(format!(
                "{} trailing bytes",
                bytes.len() - r.pos
            )));
        }
        Ok(store)
    }

    /// SHA-256 over the serialized container, hex encoded.
    pub fn fingerprint(&self) -> String {
        hex::encode(Sha256::digest(self.to_bytes()))
    }
}

pub fn save_weights(store: &WeightStore) -> Vec<u8> {
    store.to_bytes()
}

pub fn load_weights(bytes: &[u8]) -> Result<WeightStore> {
    WeightStore::from_bytes(bytes)
}

pub(crate) struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub(crate) fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    pub(crate) fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Truncated(format!(
                "{what}: need {n} bytes at offset {}, have {}",
                self.pos,
                self.bytes.len() - self.pos
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub(crate) fn magic(&mut self) -> Result<[u8; 4]> {
        let b = self.take(4, "magic")?;
        Ok([b[0], b[1], b[2], b[3]])
    }

    pub(crate) fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    pub(crate) fn u16(&mut self, what: &str) -> Result<u16> {
        let b = self.take(2, what)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    pub(crate) fn is_done(&self) -> bool {
        self.pos == self.bytes.len()
    }

    pub(crate) fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }
}
