//! Whole-model forward pass.
//!
//! ReLU follows every conv (after any residual addition) and every hidden
//! fc layer; the final fc emits raw logits. Flatten is channel-major.

use crate::engine::ops::{conv2d_forward, fc_forward, maxpool2d, relu_in_place, ConvLayerWeights};
use crate::error::{Error, Result};
use crate::store::model::Model;
use crate::store::spec::{Layer, ModelSpec};
use crate::store::weights::{self, WeightStore};
use crate::tensor::Tensor;

/// Per-conv keep flags; masked channels have their post-activation map zeroed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChannelMask {
    keep: Vec<Vec<bool>>,
}

impl ChannelMask {
    pub fn all(widths: &[usize]) -> Self {
        Self {
            keep: widths.iter().map(|&w| vec![true; w]).collect(),
        }
    }

    pub fn from_keep(keep: Vec<Vec<bool>>) -> Self {
        Self { keep }
    }

    pub fn drop_channel(&mut self, conv: usize, channel: usize) {
        self.keep[conv][channel] = false;
    }

    pub fn keeps(&self, conv: usize, channel: usize) -> bool {
        self.keep[conv][channel]
    }

    pub fn layer(&self, conv: usize) -> &[bool] {
        &self.keep[conv]
    }
}

/// Forward-pass driver with optional masking and conv-output observation.
pub struct Forward<'m> {
    model: &'m Model,
    mask: Option<&'m ChannelMask>,
}

impl<'m> Forward<'m> {
    pub fn new(model: &'m Model) -> Self {
        Self { model, mask: None }
    }

    pub fn with_mask(mut self, mask: &'m ChannelMask) -> Self {
        self.mask = Some(mask);
        self
    }

    pub fn logits(&self, input: &Tensor) -> Result<Tensor> {
        self.run(input, &mut |_, _| {})
    }

    /// Runs the model, calling `observe(conv_ordinal, post_activation_map)`
    /// for every conv layer.
    pub fn run(&self, input: &Tensor, observe: &mut dyn FnMut(usize, &Tensor)) -> Result<Tensor> {
        run_layers(&self.model.spec, &self.model.weights, input, self.mask, observe)
    }
}

impl Model {
    pub fn forward(&self, input: &Tensor) -> Result<Tensor> {
        Forward::new(self).logits(input)
    }
}

pub fn model_forward(spec: &ModelSpec, weights: &WeightStore, input: &Tensor) -> Result<Tensor> {
    spec.infer_shapes()?;
    run_layers(spec, weights, input, None, &mut |_, _| {})
}

fn run_layers(
    spec: &ModelSpec,
    store: &WeightStore,
    input: &Tensor,
    mask: Option<&ChannelMask>,
    observe: &mut dyn FnMut(usize, &Tensor),
) -> Result<Tensor> {
    if input.dims() != spec.input {
        return Err(Error::Shape(format!(
            "input dims {:?} do not match spec input {:?}",
            input.dims(),
            spec.input
        )));
    }
    let n_conv = spec.conv_count();
    let n_fc = spec.layers.iter().filter(|l| matches!(l, Layer::Fc { .. })).count();
    let mut skip: Vec<Option<Tensor>> = vec![None; n_conv];
    let is_source: Vec<bool> = (0..n_conv)
        .map(|c| spec.residual_pairs.iter().any(|&(s, _)| s == c))
        .collect();

    let mut cur = input.clone();
    let (mut conv_i, mut fc_i) = (0, 0);
    for layer in &spec.layers {
        match *layer {
            Layer::Conv(c) => {
                let k = store.get(&weights::conv_kernels(conv_i))?;
                let b = store.get(&weights::conv_bias(conv_i))?;
                let mut out = conv2d_forward(
                    &cur,
                    ConvLayerWeights {
                        kernels: k,
                        bias: b,
                        stride: c.stride,
                        padding: c.padding,
                    },
                )?;
                if let Some(&(src, _)) = spec.residual_pairs.iter().find(|&&(_, d)| d == conv_i) {
                    let s = skip[src].as_ref().ok_or_else(|| Error::Residual {
                        src,
                        dst: conv_i,
                        reason: "source output unavailable".into(),
                    })?;
                    if s.dims() != out.dims() {
                        return Err(Error::Residual {
                            src,
                            dst: conv_i,
                            reason: format!("cannot add {:?} to {:?}", s.dims(), out.dims()),
                        });
                    }
                    out.data_mut()
                        .iter_mut()
                        .zip(s.data())
                        .for_each(|(o, v)| *o += v);
                }
                relu_in_place(&mut out);
                if let Some(m) = mask {
                    apply_mask(&mut out, m.layer(conv_i));
                }
                observe(conv_i, &out);
                if is_source[conv_i] {
                    skip[conv_i] = Some(out.clone());
                }
                cur = out;
                conv_i += 1;
            }
            Layer::MaxPool { window, stride } => cur = maxpool2d(&cur, window, stride)?,
            Layer::Flatten => {
                let n = cur.len();
                cur = cur.reshape(vec![n])?;
            }
            Layer::Fc { .. } => {
                let w = store.get(&weights::fc_weights(fc_i))?;
                let b = store.get(&weights::fc_bias(fc_i))?;
                cur = fc_forward(&cur, w, b)?;
                fc_i += 1;
                if fc_i < n_fc {
                    relu_in_place(&mut cur);
                }
            }
        }
    }
    Ok(cur)
}

fn apply_mask(map: &mut Tensor, keep: &[bool]) {
    let plane = map.len() / keep.len().max(1);
    for (c, &k) in keep.iter().enumerate() {
        if !k {
            map.data_mut()[c * plane..(c + 1) * plane].fill(0.0);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::store::spec::ModelSpec;

    fn store(entries: Vec<(&str, Tensor)>) -> WeightStore {
        let mut s = WeightStore::new();
        for (n, t) in entries {
            s.insert(n, t);
        }
        s
    }

    #[test]
    fn identity_net_returns_flattened_input() {
        let spec = ModelSpec::parse(
            "classes = 4\ninput = 1x2x2\nlayers:\n conv out=1 kernel=1\n flatten\n fc out=4\n",
        )
        .unwrap();
        let mut eye = vec![0.0; 16];
        for i in 0..4 {
            eye[i * 4 + i] = 1.0;
        }
        let w = store(vec![
            ("conv0.kernels", Tensor::new(vec![1, 1, 1, 1], vec![1.0]).unwrap()),
            ("conv0.bias", Tensor::zeros(vec![1])),
            ("fc0.weights", Tensor::new(vec![4, 4], eye).unwrap()),
            ("fc0.bias", Tensor::zeros(vec![4])),
        ]);
        let model = Model::new(spec, w).unwrap();
        // non-negative input survives the conv ReLU unchanged
        let x = Tensor::new(vec![1, 2, 2], vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        assert_eq!(model.forward(&x).unwrap().data(), x.data());
    }

    #[test]
    fn zeroed_residual_destination_passes_skip_through() {
        let spec = ModelSpec::parse(
            "classes = 2\ninput = 1x2x2\nlayers:\n conv out=1 kernel=1\n conv out=1 kernel=1\n flatten\n fc out=2\nresidual:\n 0 -> 1\n",
        )
        .unwrap();
        let w = store(vec![
            ("conv0.kernels", Tensor::new(vec![1, 1, 1, 1], vec![2.0]).unwrap()),
            ("conv0.bias", Tensor::from_vec(vec![0.5])),
            ("conv1.kernels", Tensor::zeros(vec![1, 1, 1, 1])),
            ("conv1.bias", Tensor::zeros(vec![1])),
            ("fc0.weights", Tensor::zeros(vec![2, 4])),
            ("fc0.bias", Tensor::zeros(vec![2])),
        ]);
        let model = Model::new(spec, w).unwrap();
        let x = Tensor::new(vec![1, 2, 2], vec![1.0, -1.0, 0.0, 2.0]).unwrap();
        let mut maps = Vec::new();
        Forward::new(&model)
            .run(&x, &mut |i, t| maps.push((i, t.clone())))
            .unwrap();
        assert_eq!(maps[0].1, maps[1].1);
        assert_eq!(maps[0].1.data(), &[2.5, 0.0, 0.5, 4.5]);
    }

    #[test]
    fn rejects_wrong_input_dims() {
        let spec = ModelSpec::parse(
            "classes = 1\ninput = 1x2x2\nlayers:\n flatten\n fc out=1\n",
        )
        .unwrap();
        let w = store(vec![
            ("fc0.weights", Tensor::zeros(vec![1, 4])),
            ("fc0.bias", Tensor::zeros(vec![1])),
        ]);
        assert!(model_forward(&spec, &w, &Tensor::zeros(vec![1, 3, 3])).is_err());
        assert!(model_forward(&spec, &w, &Tensor::zeros(vec![1, 2, 2])).is_ok());
    }
}
