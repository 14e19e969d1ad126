//! Labeled image dataset and its binary container.
//!
//! ```text
//! "CNDS" | u32 count | u32 C | u32 H | u32 W | u32 classes
//! count*C*H*W f32 pixels | count u32 labels
//! ```

use crate::error::{Error, Result};
use crate::store::weights::Reader;
use crate::tensor::Tensor;

pub const DATASET_MAGIC: [u8; 4] = *b"CNDS";

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    /// (C, H, W) of each image.
    sample_dims: [usize; 3],
    pixels: Vec<f32>,
    labels: Vec<usize>,
    num_classes: usize,
}

impl LabeledDataset {
    pub fn new(
        sample_dims: [usize; 3],
        pixels: Vec<f32>,
        labels: Vec<usize>,
        num_classes: usize,
    ) -> Result<Self> {
        let per: usize = sample_dims.iter().product();
        if pixels.len() != per * labels.len() {
            return Err(Error::Shape(format!(
                "{} labels need {} pixels, got {}",
                labels.len(),
                per * labels.len(),
                pixels.len()
            )));
        }
        if let Some((index, &label)) = labels.iter().enumerate().find(|(_, &l)| l >= num_classes) {
            return Err(Error::LabelOutOfRange {
                index,
                label,
                classes: num_classes,
            });
        }
        Ok(Self {
            sample_dims,
            pixels,
            labels,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn sample_dims(&self) -> [usize; 3] {
        self.sample_dims
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn pixels(&self, i: usize) -> &[f32] {
        let per: usize = self.sample_dims.iter().product();
        &self.pixels[i * per..(i + 1) * per]
    }

    pub fn image(&self, i: usize) -> Tensor {
        Tensor::new(self.sample_dims.to_vec(), self.pixels(i).to_vec())
            .expect("dims checked at construction")
    }

    /// All images as one [count, C, H, W] tensor.
    pub fn images(&self) -> Tensor {
        let [c, h, w] = self.sample_dims;
        Tensor::new(vec![self.len(), c, h, w], self.pixels.clone())
            .expect("dims checked at construction")
    }

    pub fn class_indices(&self, class: usize) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.labels[i] == class).collect()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    pub fn subset(&self, indices: &[usize]) -> LabeledDataset {
        let mut pixels = Vec::with_capacity(indices.len() * self.pixels(0).len().max(1));
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            pixels.extend_from_slice(self.pixels(i));
            labels.push(self.labels[i]);
        }
        LabeledDataset {
            sample_dims: self.sample_dims,
            pixels,
            labels,
            num_classes: self.num_classes,
        }
    }

    /// Samples whose label is not `class`.
    pub fn without_class(&self, class: usize) -> LabeledDataset {
        let keep: Vec<usize> = (0..self.len()).filter(|&i| self.labels[i] != class).collect();
        self.subset(&keep)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(24 + 4 * (self.pixels.len() + self.labels.len()));
        out.extend_from_slice(&DATASET_MAGIC);
        out.extend_from_slice(&(self.len() as u32).to_le_bytes());
        for d in self.sample_dims {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        out.extend_from_slice(&(self.num_classes as u32).to_le_bytes());
        for &p in &self.pixels {
            out.extend_from_slice(&p.to_le_bytes());
        }
        for &l in &self.labels {
            out.extend_from_slice(&(l as u32).to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        let magic = r.magic()?;
        if magic != DATASET_MAGIC {
            return Err(Error::BadMagic {
                expected: DATASET_MAGIC,
                found: magic,
            });
        }
        let count = r.u32("count")? as usize;
        let c = r.u32("channels")? as usize;
        let h = r.u32("height")? as usize;
        let w = r.u32("width")? as usize;
        let classes = r.u32("classes")? as usize;
        let per = c * h * w;
        let expected = 4 * (count * per + count);
        if r.remaining() != expected {
            return Err(if r.remaining() < expected {
                Error::Truncated(format!(
                    "header declares {count} samples of {c}x{h}x{w} ({expected} bytes), {} present",
                    r.remaining()
                ))
            } else {
                Error::Malformed(format!(
                    "{} bytes after declared payload",
                    r.remaining() - expected
                ))
            });
        }
        let raw = r.take(4 * count * per, "pixels")?;
        let pixels = raw
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        let labels = (0..count)
            .map(|_| r.u32("labels").map(|l| l as usize))
            .collect::<Result<Vec<_>>>()?;
        LabeledDataset::new([c, h, w], pixels, labels, classes)
    }
}

pub fn save_dataset(ds: &LabeledDataset) -> Vec<u8> {
    ds.to_bytes()
}

pub fn load_dataset(bytes: &[u8]) -> Result<LabeledDataset> {
    LabeledDataset::from_bytes(bytes)
}
