//! Layer primitives. Storage is f32; dot products accumulate in f64.

use crate::error::{Error, Result};
use crate::store::spec::conv_output_size;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy)]
pub struct ConvLayerWeights<'a> {
    /// [C_out, C_in, K, K]
    pub kernels: &'a Tensor,
    /// [C_out]
    pub bias: &'a Tensor,
    pub stride: usize,
    pub padding: usize,
}

/// Range of output positions `o` with `0 <= o*stride + k - pad < len`.
#[inline]
pub(crate) fn valid_range(out: usize, len: usize, k: usize, stride: usize, pad: usize) -> (usize, usize) {
    // lower bound: o*stride >= pad - k
    let lo = if pad > k { (pad - k).div_ceil(stride) } else { 0 };
    // upper bound: o*stride + k - pad <= len - 1
    let hi = if len + pad > k {
        ((len + pad - k - 1) / stride + 1).min(out)
    } else {
        0
    };
    (lo.min(hi), hi)
}

pub fn conv2d_forward(input: &Tensor, layer: ConvLayerWeights<'_>) -> Result<Tensor> {
    let kd = layer.kernels.dims();
    if kd.len() != 4 || kd[2] != kd[3] {
        return Err(Error::Shape(format!("kernel dims {kd:?} are not [C_out, C_in, K, K]")));
    }
    let (c_out, c_in, k) = (kd[0], kd[1], kd[2]);
    let id = input.dims();
    if id.len() != 3 {
        return Err(Error::Shape(format!("conv input dims {id:?} are not [C, H, W]")));
    }
    if id[0] != c_in {
        return Err(Error::ChannelMismatch {
            context: "conv2d input".into(),
            expected: c_in,
            actual: id[0],
        });
    }
    if layer.bias.len() != c_out {
        return Err(Error::ChannelMismatch {
            context: "conv2d bias".into(),
            expected: c_out,
            actual: layer.bias.len(),
        });
    }
    let (h, w) = (id[1], id[2]);
    let (s, p) = (layer.stride, layer.padding);
    let (Some(oh), Some(ow)) = (conv_output_size(h, k, s, p), conv_output_size(w, k, s, p)) else {
        return Err(Error::Shape(format!(
            "kernel {k} with padding {p} does not fit {h}x{w} input"
        )));
    };
    let x = input.data();
    let wts = layer.kernels.data();
    let bias = layer.bias.data();
    let mut out = vec![0.0f32; c_out * oh * ow];
    let mut acc = vec![0.0f64; oh * ow];
    for co in 0..c_out {
        acc.iter_mut().for_each(|a| *a = bias[co] as f64);
        for ci in 0..c_in {
            let plane = &x[ci * h * w..(ci + 1) * h * w];
            for ky in 0..k {
                let (oy0, oy1) = valid_range(oh, h, ky, s, p);
                for kx in 0..k {
                    let wv = wts[((co * c_in + ci) * k + ky) * k + kx] as f64;
                    if wv == 0.0 {
                        continue;
                    }
                    let (ox0, ox1) = valid_range(ow, w, kx, s, p);
                    for oy in oy0..oy1 {
                        let iy = oy * s + ky - p;
                        let row = &plane[iy * w..(iy + 1) * w];
                        let arow = &mut acc[oy * ow..(oy + 1) * ow];
                        for ox in ox0..ox1 {
                            arow[ox] += wv * row[ox * s + kx - p] as f64;
                        }
                    }
                }
            }
        }
        for (o, a) in out[co * oh * ow..(co + 1) * oh * ow].iter_mut().zip(&acc) {
            *o = *a as f32;
        }
    }
    Tensor::new(vec![c_out, oh, ow], out)
}

pub fn maxpool2d(input: &Tensor, window: usize, stride: usize) -> Result<Tensor> {
    let id = input.dims();
    if id.len() != 3 {
        return Err(Error::Shape(format!("pool input dims {id:?} are not [C, H, W]")));
    }
    let (c, h, w) = (id[0], id[1], id[2]);
    if window == 0 || stride == 0 || window > h || window > w {
        return Err(Error::Shape(format!(
            "pool window {window} (stride {stride}) does not fit {h}x{w} map"
        )));
    }
    let oh = (h - window) / stride + 1;
    let ow = (w - window) / stride + 1;
    let x = input.data();
    let mut out = Vec::with_capacity(c * oh * ow);
    for ch in 0..c {
        let plane = &x[ch * h * w..(ch + 1) * h * w];
        for oy in 0..oh {
            for ox in 0..ow {
                let mut m = f32::NEG_INFINITY;
                for dy in 0..window {
                    let row = (oy * stride + dy) * w + ox * stride;
                    for v in &plane[row..row + window] {
                        m = m.max(*v);
                    }
                }
                out.push(m);
            }
        }
    }
    Tensor::new(vec![c, oh, ow], out)
}

pub fn relu(input: &Tensor) -> Tensor {
    let mut t = input.clone();
    relu_in_place(&mut t);
    t
}

pub(crate) fn relu_in_place(t: &mut Tensor) {
    t.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
}

pub fn fc_forward(input: &Tensor, weights: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let wd = weights.dims();
    if wd.len() != 2 {
        return Err(Error::Shape(format!("fc weight dims {wd:?} are not [D_out, D]")));
    }
    let (d_out, d) = (wd[0], wd[1]);
    if input.len() != d {
        return Err(Error::ChannelMismatch {
            context: "fc input features".into(),
            expected: d,
            actual: input.len(),
        });
    }
    if bias.len() != d_out {
        return Err(Error::ChannelMismatch {
            context: "fc bias".into(),
            expected: d_out,
            actual: bias.len(),
        });
    }
    let x = input.data();
    let out = weights
        .data()
        .chunks_exact(d.max(1))
        .take(d_out)
        .zip(bias.data())
        .map(|(row, b)| {
            let dot: f64 = row.iter().zip(x).map(|(&a, &b)| a as f64 * b as f64).sum();
            (dot + *b as f64) as f32
        })
        .collect::<Vec<_>>();
    let out = if d == 0 { bias.data().to_vec() } else { out };
    Ok(Tensor::from_vec(out))
}

/// Max-subtracted softmax.
pub fn softmax(input: &Tensor) -> Tensor {
    Tensor::from_vec(softmax_slice(input.data()))
}

pub fn softmax_slice(x: &[f32]) -> Vec<f32> {
    let m = x.iter().copied().fold(f32::NEG_INFINITY, f32::max) as f64;
    let exps: Vec<f64> = x.iter().map(|&v| (v as f64 - m).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.iter().map(|e| (e / z) as f32).collect()
}
