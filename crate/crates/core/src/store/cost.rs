//! Kernel and FLOP accounting.
//!
//! FLOPs count multiplies and adds separately: a conv layer costs
//! `2 * C_in * K^2 * H_out * W_out * C_out`, an fc layer `2 * D_in * D_out`.
//! Pooling, activations, bias adds and residual adds are not counted.

use crate::error::Result;
use crate::store::spec::ModelSpec;

pub fn count_kernels(spec: &ModelSpec) -> usize {
    spec.conv_specs().iter().map(|c| c.out_channels).sum()
}

pub fn count_flops(spec: &ModelSpec) -> Result<u64> {
    let plan = spec.infer_shapes()?;
    let conv: u64 = plan
        .convs
        .iter()
        .map(|c| {
            2 * (c.in_channels * c.kernel_size * c.kernel_size) as u64
                * (c.out_hw.0 * c.out_hw.1) as u64
                * c.out_channels as u64
        })
        .sum();
    let fc: u64 = plan
        .fcs
        .iter()
        .map(|f| 2 * f.in_features as u64 * f.out_features as u64)
        .sum();
    Ok(conv + fc)
}

/// `1 - part / whole`, the fraction removed.
pub fn reduction(part: f64, whole: f64) -> f64 {
    if whole == 0.0 {
        0.0
    } else {
        1.0 - part / whole
    }
}
