//! Per-layer sensitivity to kernel removal.
//!
//! Each conv layer is probed on its own: the least important 10%..90% of
//! its kernels (class-mean importance) are masked out and validation
//! accuracy is re-measured. A layer is sensitive when the loss at 90%
//! exceeds the threshold. Masking the post-activation maps equals physical
//! removal because the engine has no normalization layers.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::grouping::importance_order;
use crate::engine::forward::{ChannelMask, Forward};
use crate::error::{Error, Result};
use crate::store::dataset::LabeledDataset;
use crate::store::model::Model;
use crate::tensor::argmax;

pub const DROP_RATIOS: [f64; 9] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];
pub const DEFAULT_LOSS_THRESHOLD: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSensitivity {
    pub conv: usize,
    pub sensitive: bool,
    /// (drop ratio, kernels dropped, accuracy)
    pub curve: Vec<(f64, usize, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityProfile {
    pub baseline_accuracy: f64,
    pub threshold: f64,
    pub layers: Vec<LayerSensitivity>,
}

impl SensitivityProfile {
    pub fn is_sensitive(&self, conv: usize) -> bool {
        self.layers[conv].sensitive
    }

    /// Same flag for every layer; for tests and ablations.
    pub fn uniform(convs: usize, sensitive: bool) -> Self {
        Self {
            baseline_accuracy: 1.0,
            threshold: DEFAULT_LOSS_THRESHOLD,
            layers: (0..convs)
                .map(|conv| LayerSensitivity {
                    conv,
                    sensitive,
                    curve: Vec::new(),
                })
                .collect(),
        }
    }
}

/// Number of kernels removed at `ratio`; at least one kernel always stays.
pub fn drop_count(width: usize, ratio: f64) -> usize {
    ((ratio * width as f64).round() as usize).min(width.saturating_sub(1))
}

/// Kernels removed from a layer at `ratio`: the tail of the importance order.
pub fn dropped_kernels(scores: &[f64], ratio: f64) -> Vec<usize> {
    let order = importance_order(scores);
    let d = drop_count(scores.len(), ratio);
    let mut out = order[order.len() - d..].to_vec();
    out.sort_unstable();
    out
}

pub fn masked_accuracy(model: &Model, data: &LabeledDataset, mask: Option<&ChannelMask>) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let hits = (0..data.len())
        .into_par_iter()
        .map(|i| {
            let f = match mask {
                Some(m) => Forward::new(model).with_mask(m),
                None => Forward::new(model),
            };
            f.logits(&data.image(i))
                .map(|l| usize::from(argmax(l.data()) == data.label(i)))
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .sum::<usize>();
    Ok(hits as f64 / data.len() as f64)
}

/// `importance` is class-agnostic, `[conv][kernel]`.
pub fn layer_sensitivity(
    model: &Model,
    val: &LabeledDataset,
    importance: &[Vec<f64>],
    loss_threshold: f64,
) -> Result<SensitivityProfile> {
    let widths = model.conv_widths();
    if importance.len() != widths.len() {
        return Err(Error::Shape("importance does not cover every conv layer".into()));
    }
    let baseline = masked_accuracy(model, val, None)?;
    let mut layers = Vec::with_capacity(widths.len());
    for (conv, &width) in widths.iter().enumerate() {
        let mut curve = Vec::with_capacity(DROP_RATIOS.len());
        for &ratio in &DROP_RATIOS {
            let dropped = dropped_kernels(&importance[conv], ratio);
            let mut mask = ChannelMask::all(&widths);
            for &k in &dropped {
                mask.drop_channel(conv, k);
            }
            let acc = masked_accuracy(model, val, Some(&mask))?;
            curve.push((ratio, dropped.len(), acc));
        }
        debug_assert!(width > 0);
        let loss_at_max = baseline - curve.last().map(|c| c.2).unwrap_or(baseline);
        layers.push(LayerSensitivity {
            conv,
            sensitive: loss_at_max > loss_threshold,
            curve,
        });
    }
    Ok(SensitivityProfile {
        baseline_accuracy: baseline,
        threshold: loss_threshold,
        layers,
    })
}
