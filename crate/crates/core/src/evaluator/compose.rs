use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::store::dataset::LabeledDataset;
use crate::store::model::Model;
use crate::tensor::argmax;

/// `O[k]` is module k's own logit for its own class.
///
/// `classes[k]` names the class module k stands for; each module output
/// must cover that index.
pub fn compose_outputs(module_outputs: &[Vec<f32>], classes: &[usize]) -> Result<Vec<f32>> {
    if module_outputs.len() != classes.len() {
        return Err(Error::Shape(format!(
            "{} module outputs for {} classes",
            module_outputs.len(),
            classes.len()
        )));
    }
    module_outputs
        .iter()
        .zip(classes)
        .map(|(out, &c)| {
            out.get(c).copied().ok_or_else(|| {
                Error::Shape(format!("module output of length {} has no logit {c}", out.len()))
            })
        })
        .collect()
}

/// One module per class, over an ascending class subset.
#[derive(Debug, Clone)]
pub struct ComposedModel {
    pub classes: Vec<usize>,
    pub modules: Vec<Model>,
}

impl ComposedModel {
    pub fn new(classes: Vec<usize>, modules: Vec<Model>) -> Result<Self> {
        if classes.len() != modules.len() || classes.is_empty() {
            return Err(Error::Config(format!(
                "{} classes for {} modules",
                classes.len(),
                modules.len()
            )));
        }
        if classes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("composed classes must be strictly ascending".into()));
        }
        Ok(Self { classes, modules })
    }

    /// Composed output for one input, indexed positionally within `classes`.
    pub fn output(&self, input: &crate::Tensor) -> Result<Vec<f32>> {
        let outs = self
            .modules
            .iter()
            .map(|m| m.forward(input).map(|t| t.into_data()))
            .collect::<Result<Vec<_>>>()?;
        compose_outputs(&outs, &self.classes)
    }

    /// Predicted class id (ties go to the lowest class).
    pub fn predict(&self, input: &crate::Tensor) -> Result<usize> {
        Ok(self.classes[argmax(&self.output(input)?)])
    }

    /// Accuracy on the samples whose label is one of this model's classes.
    pub fn accuracy(&self, data: &LabeledDataset) -> Result<f64> {
        let idx: Vec<usize> = (0..data.len())
            .filter(|&i| self.classes.contains(&data.label(i)))
            .collect();
        if idx.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let hits = idx
            .par_iter()
            .map(|&i| Ok(usize::from(self.predict(&data.image(i))? == data.label(i))))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .sum::<usize>();
        Ok(hits as f64 / idx.len() as f64)
    }
}
