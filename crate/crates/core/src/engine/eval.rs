//! Batch prediction helpers.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::store::dataset::LabeledDataset;
use crate::store::model::Model;
use crate::tensor::argmax;

/// Logits for every sample, in dataset order.
pub fn all_logits(model: &Model, data: &LabeledDataset) -> Result<Vec<Vec<f32>>> {
    (0..data.len())
        .into_par_iter()
        .map(|i| model.forward(&data.image(i)).map(|t| t.into_data()))
        .collect()
}

pub fn predictions(model: &Model, data: &LabeledDataset) -> Result<Vec<usize>> {
    Ok(all_logits(model, data)?.iter().map(|l| argmax(l)).collect())
}

pub fn accuracy(model: &Model, data: &LabeledDataset) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let preds = predictions(model, data)?;
    let hits = preds
        .iter()
        .zip(data.labels())
        .filter(|(p, l)| p == l)
        .count();
    Ok(hits as f64 / data.len() as f64)
}
