//! Activation-sum kernel importance.
//!
//! For class `n`, a kernel's importance is the mean over up to `m` class-`n`
//! samples of the sum of its post-ReLU feature map.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engine::forward::Forward;
use crate::error::{Error, Result};
use crate::store::dataset::LabeledDataset;
use crate::store::model::Model;

pub const DEFAULT_SAMPLE_CAP: usize = 500;

/// Scores indexed `[class][conv][kernel]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceTable {
    pub scores: Vec<Vec<Vec<f64>>>,
}

impl ImportanceTable {
    pub fn num_classes(&self) -> usize {
        self.scores.len()
    }

    pub fn class(&self, n: usize) -> &[Vec<f64>] {
        &self.scores[n]
    }

    /// Class-agnostic importance: mean over classes, `[conv][kernel]`.
    pub fn class_mean(&self) -> Vec<Vec<f64>> {
        let n = self.scores.len() as f64;
        let mut out = self.scores[0].clone();
        for class in &self.scores[1..] {
            for (acc, layer) in out.iter_mut().zip(class) {
                acc.iter_mut().zip(layer).for_each(|(a, v)| *a += v);
            }
        }
        out.iter_mut()
            .for_each(|l| l.iter_mut().for_each(|v| *v /= n));
        out
    }
}

/// Importance of every kernel for one class, `[conv][kernel]`.
pub fn kernel_importance(
    model: &Model,
    data: &LabeledDataset,
    class: usize,
    sample_cap: usize,
) -> Result<Vec<Vec<f64>>> {
    let indices: Vec<usize> = data
        .class_indices(class)
        .into_iter()
        .take(sample_cap.max(1))
        .collect();
    if indices.is_empty() {
        return Err(Error::NoClassSamples(class));
    }
    let widths = model.conv_widths();
    let per_sample: Vec<Vec<Vec<f64>>> = indices
        .par_iter()
        .map(|&i| {
            let mut sums: Vec<Vec<f64>> = widths.iter().map(|&w| vec![0.0; w]).collect();
            Forward::new(model).run(&data.image(i), &mut |conv, map| {
                let plane = map.len() / widths[conv];
                for (k, s) in sums[conv].iter_mut().enumerate() {
                    *s = map.data()[k * plane..(k + 1) * plane]
                        .iter()
                        .map(|&v| v as f64)
                        .sum();
                }
            })?;
            Ok(sums)
        })
        .collect::<Result<_>>()?;
    let m = indices.len() as f64;
    let mut out: Vec<Vec<f64>> = widths.iter().map(|&w| vec![0.0; w]).collect();
    for sample in &per_sample {
        for (acc, layer) in out.iter_mut().zip(sample) {
            acc.iter_mut().zip(layer).for_each(|(a, v)| *a += v);
        }
    }
    out.iter_mut()
        .for_each(|l| l.iter_mut().for_each(|v| *v /= m));
    Ok(out)
}

pub fn importance_table(model: &Model, data: &LabeledDataset, sample_cap: usize) -> Result<ImportanceTable> {
    let scores = (0..model.num_classes())
        .map(|n| kernel_importance(model, data, n, sample_cap))
        .collect::<Result<_>>()?;
    Ok(ImportanceTable { scores })
}
