//! Helpers shared by integration tests: a loop-nest reference forward pass
//! and small model fixtures.
#![allow(dead_code)]

use modsplit::engine::{init_weights, sgd_train, TrainConfig};
use modsplit::store::weights::{conv_bias, conv_kernels, fc_bias, fc_weights};
use modsplit::store::{Layer, LabeledDataset, Model, ModelSpec};
use modsplit::synth::{generate, SynthConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Straightforward f64 re-implementation of the forward pass.
pub fn naive_forward(model: &Model, input: &[f32]) -> Vec<f64> {
    let spec = &model.spec;
    let w = &model.weights;
    let [c0, h0, w0] = spec.input;
    let mut x: Vec<f64> = input.iter().map(|&v| v as f64).collect();
    let (mut c, mut h, mut wd) = (c0, h0, w0);
    let mut saved: Vec<Option<Vec<f64>>> = vec![None; spec.conv_count()];
    let n_fc = spec.layers.iter().filter(|l| matches!(l, Layer::Fc { .. })).count();
    let (mut ci, mut fi) = (0, 0);
    for layer in &spec.layers {
        match *layer {
            Layer::Conv(cs) => {
                let k = w.get(&conv_kernels(ci)).unwrap().data();
                let b = w.get(&conv_bias(ci)).unwrap().data();
                let (kk, s, p) = (cs.kernel_size, cs.stride, cs.padding as isize);
                let oh = (h + 2 * cs.padding - kk) / s + 1;
                let ow = (wd + 2 * cs.padding - kk) / s + 1;
                let co = cs.out_channels;
                let mut y = vec![0.0f64; co * oh * ow];
                for o in 0..co {
                    for oy in 0..oh {
                        for ox in 0..ow {
                            let mut acc = b[o] as f64;
                            for i in 0..c {
                                for dy in 0..kk {
                                    for dx in 0..kk {
                                        let iy = (oy * s + dy) as isize - p;
                                        let ix = (ox * s + dx) as isize - p;
                                        if iy < 0 || ix < 0 || iy >= h as isize || ix >= wd as isize {
                                            continue;
                                        }
                                        let xv = x[(i * h + iy as usize) * wd + ix as usize];
                                        let kv = k[((o * c + i) * kk + dy) * kk + dx] as f64;
                                        acc += xv * kv;
                                    }
                                }
                            }
                            y[(o * oh + oy) * ow + ox] = acc;
                        }
                    }
                }
                if let Some(&(src, _)) = spec.residual_pairs.iter().find(|&&(_, d)| d == ci) {
                    let sv = saved[src].as_ref().unwrap();
                    for (a, b) in y.iter_mut().zip(sv) {
                        *a += b;
                    }
                }
                for v in &mut y {
                    *v = v.max(0.0);
                }
                saved[ci] = Some(y.clone());
                x = y;
                (c, h, wd) = (co, oh, ow);
                ci += 1;
            }
            Layer::MaxPool { window, stride } => {
                let oh = (h - window) / stride + 1;
                let ow = (wd - window) / stride + 1;
                let mut y = vec![f64::NEG_INFINITY; c * oh * ow];
                for ch in 0..c {
                    for oy in 0..oh {
                        for ox in 0..ow {
                            for dy in 0..window {
                                for dx in 0..window {
                                    let v = x[(ch * h + oy * stride + dy) * wd + ox * stride + dx];
                                    let t = &mut y[(ch * oh + oy) * ow + ox];
                                    *t = t.max(v);
                                }
                            }
                        }
                    }
                }
                x = y;
                (h, wd) = (oh, ow);
            }
            Layer::Flatten => {}
            Layer::Fc { out_features } => {
                let m = w.get(&fc_weights(fi)).unwrap().data();
                let b = w.get(&fc_bias(fi)).unwrap().data();
                let d = x.len();
                let mut y: Vec<f64> = (0..out_features)
                    .map(|r| b[r] as f64 + (0..d).map(|j| m[r * d + j] as f64 * x[j]).sum::<f64>())
                    .collect();
                fi += 1;
                if fi < n_fc {
                    for v in &mut y {
                        *v = v.max(0.0);
                    }
                }
                x = y;
            }
        }
    }
    x
}

/// Model with He-initialized weights and small random non-zero biases.
pub fn random_model(text: &str, seed: u64) -> Model {
    let spec = ModelSpec::parse(text).unwrap();
    let mut weights = init_weights(&spec, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    for (name, t) in weights.iter_mut() {
        if name.ends_with(".bias") {
            for v in t.data_mut() {
                *v = rng.gen_range(-0.1..0.1);
            }
        }
    }
    Model::new(spec, weights).unwrap()
}

pub fn random_input(model: &Model, rng: &mut ChaCha8Rng) -> modsplit::Tensor {
    let dims = model.spec.input.to_vec();
    let n = dims.iter().product();
    modsplit::Tensor::new(dims, (0..n).map(|_| rng.gen_range(0.0..1.0)).collect()).unwrap()
}

pub fn max_rel_err(a: &[f32], b: &[f64]) -> f64 {
    let scale = b.iter().fold(1e-3f64, |m, v| m.max(v.abs()));
    a.iter()
        .zip(b)
        .map(|(&x, &y)| (x as f64 - y).abs() / scale)
        .fold(0.0, f64::max)
}

pub struct Trained {
    pub model: Model,
    pub train: LabeledDataset,
    pub val: LabeledDataset,
}

/// Desk-scale SimCNN trained on synthetic glyphs.
pub fn trained_desk(classes: usize, epochs: usize, seed: u64) -> Trained {
    let train = generate(&SynthConfig { classes, per_class: 120, seed, ..SynthConfig::default() }).unwrap();
    let val = generate(&SynthConfig { classes, per_class: 50, seed: seed + 1000, ..SynthConfig::default() }).unwrap();
    let spec = modsplit::store::presets::simcnn_desk(classes);
    let init = init_weights(&spec, seed).unwrap();
    let model = Model::new(spec.clone(), init).unwrap();
    let cfg = TrainConfig { epochs, seed, ..TrainConfig::default() };
    let (weights, _) = sgd_train(&model, &train, &cfg, None).unwrap();
    Trained { model: Model::new(spec, weights).unwrap(), train, val }
}
