//! Mini-batch SGD with momentum for the fixed layer set.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::engine::ops::{conv2d_forward, fc_forward, maxpool2d, softmax_slice, ConvLayerWeights};
use crate::error::{Error, Result};
use crate::store::dataset::LabeledDataset;
use crate::store::model::Model;
use crate::store::spec::{Layer, ModelSpec};
use crate::store::weights::{self, WeightStore};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f32,
    pub momentum: f32,
    pub weight_decay: f32,
    pub epochs: usize,
    pub batch_size: usize,
    /// Random shifts of up to one pixel.
    pub augment: bool,
    /// Inverted dropout on the input of every fc layer.
    pub dropout_rate: f32,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            momentum: 0.9,
            weight_decay: 1e-4,
            epochs: 30,
            batch_size: 16,
            augment: true,
            dropout_rate: 0.2,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be finite and non-negative");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum must be in [0, 1)");
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad("weight_decay must be non-negative");
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return bad("epochs and batch_size must be positive");
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return bad("dropout_rate must be in [0, 1)");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss: f64,
    pub train_accuracy: f64,
    pub val_accuracy: Option<f64>,
}

/// He-normal kernels and weights, zero biases.
pub fn init_weights(spec: &ModelSpec, seed: u64) -> Result<WeightStore> {
    let plan = spec.infer_shapes()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = WeightStore::new();
    for (name, dims) in WeightStore::expected_layout(&plan) {
        let n: usize = dims.iter().product();
        let data = if name.ends_with(".bias") {
            vec![0.0; n]
        } else {
            let fan_in: usize = dims[1..].iter().product();
            let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive std");
            (0..n).map(|_| normal.sample(&mut rng) as f32).collect()
        };
        store.insert(name, Tensor::new(dims, data)?);
    }
    Ok(store)
}

enum Step {
    Conv {
        index: usize,
        input: Tensor,
        out: Tensor,
        stride: usize,
        padding: usize,
    },
    Pool {
        in_dims: Vec<usize>,
        argmax: Vec<usize>,
    },
    Flatten,
    Fc {
        index: usize,
        input: Tensor,
        out: Tensor,
        hidden: bool,
        dropout: Option<Vec<f32>>,
    },
}

struct Grads {
    names: Vec<String>,
    values: Vec<Vec<f64>>,
}

impl Grads {
    fn zeros_like(store: &WeightStore) -> Self {
        let (names, values) = store
            .iter()
            .map(|(n, t)| (n.clone(), vec![0.0; t.len()]))
            .unzip();
        Self { names, values }
    }

    fn slot(&mut self, name: &str) -> &mut Vec<f64> {
        let i = self.names.iter().position(|n| n == name).expect("known tensor");
        &mut self.values[i]
    }

    fn clear(&mut self) {
        self.values.iter_mut().for_each(|v| v.fill(0.0));
    }
}

/// Trains a copy of `model`'s weights. Deterministic for a fixed seed.
pub fn sgd_train(
    model: &Model,
    data: &LabeledDataset,
    cfg: &TrainConfig,
    val: Option<&LabeledDataset>,
) -> Result<(WeightStore, Vec<EpochStats>)> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if data.num_classes() > model.num_classes() {
        return Err(Error::Config(format!(
            "dataset has {} classes, model emits {}",
            data.num_classes(),
            model.num_classes()
        )));
    }
    let spec = &model.spec;
    let mut params = model.weights.clone();
    let mut velocity = Grads::zeros_like(&params);
    let mut grads = Grads::zeros_like(&params);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for (batch_i, batch) in order.chunks(cfg.batch_size).enumerate() {
            grads.clear();
            let mut batch_loss = 0.0;
            for &i in batch {
                let mut x = data.image(i);
                if cfg.augment {
                    x = augment(&x, &mut rng);
                }
                let (logits, steps) = forward_train(spec, &params, &x, cfg.dropout_rate, &mut rng)?;
                let probs = softmax_slice(logits.data());
                let y = data.label(i);
                batch_loss += -(probs[y].max(1e-12) as f64).ln();
                if crate::tensor::argmax(logits.data()) == y {
                    correct += 1;
                }
                let mut g: Vec<f64> = probs.iter().map(|&p| p as f64).collect();
                g[y] -= 1.0;
                backward(spec, &params, steps, g, &mut grads)?;
            }
            if !batch_loss.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch: batch_i,
                });
            }
            loss_sum += batch_loss;
            let scale = 1.0 / batch.len() as f64;
            for (k, (_, p)) in params.iter_mut().enumerate() {
                let v = &mut velocity.values[k];
                let g = &grads.values[k];
                for ((w, vel), &gr) in p.data_mut().iter_mut().zip(v.iter_mut()).zip(g) {
                    let step = gr * scale + cfg.weight_decay as f64 * *w as f64;
                    *vel = cfg.momentum as f64 * *vel + step;
                    *w -= (cfg.learning_rate as f64 * *vel) as f32;
                }
            }
        }
        if params.iter().any(|(_, t)| !t.is_finite()) {
            return Err(Error::NonFiniteLoss {
                epoch,
                batch: order.len().div_ceil(cfg.batch_size),
            });
        }
        let val_accuracy = match val {
            Some(v) => Some(crate::engine::eval::accuracy(
                &Model {
                    spec: model.spec.clone(),
                    plan: model.plan.clone(),
                    weights: params.clone(),
                },
                v,
            )?),
            None => None,
        };
        history.push(EpochStats {
            epoch,
            loss: loss_sum / data.len() as f64,
            train_accuracy: correct as f64 / data.len() as f64,
            val_accuracy,
        });
        log::debug!("epoch {epoch}: {:?}", history.last());
    }
    Ok((params, history))
}

fn augment(x: &Tensor, rng: &mut ChaCha8Rng) -> Tensor {
    let d = x.dims();
    let (c, h, w) = (d[0], d[1], d[2]);
    let dy = rng.gen_range(-1i64..=1);
    let dx = rng.gen_range(-1i64..=1);
    let src = x.data();
    let mut out = vec![0.0f32; src.len()];
    for ch in 0..c {
        for y in 0..h {
            let sy = y as i64 - dy;
            if sy < 0 || sy >= h as i64 {
                continue;
            }
            for xx in 0..w {
                let sx = xx as i64 - dx;
                if sx < 0 || sx >= w as i64 {
                    continue;
                }
                out[(ch * h + y) * w + xx] = src[(ch * h + sy as usize) * w + sx as usize];
            }
        }
    }
    Tensor::new(d.to_vec(), out).expect("same dims")
}

fn forward_train(
    spec: &ModelSpec,
    store: &WeightStore,
    input: &Tensor,
    dropout: f32,
    rng: &mut ChaCha8Rng,
) -> Result<(Tensor, Vec<Step>)> {
    let n_fc = spec.layers.iter().filter(|l| matches!(l, Layer::Fc { .. })).count();
    let mut skip: Vec<Option<Tensor>> = vec![None; spec.conv_count()];
    let mut steps = Vec::with_capacity(spec.layers.len());
    let mut cur = input.clone();
    let (mut conv_i, mut fc_i) = (0, 0);
    for layer in &spec.layers {
        match *layer {
            Layer::Conv(c) => {
                let mut out = conv2d_forward(
                    &cur,
                    ConvLayerWeights {
                        kernels: store.get(&weights::conv_kernels(conv_i))?,
                        bias: store.get(&weights::conv_bias(conv_i))?,
                        stride: c.stride,
                        padding: c.padding,
                    },
                )?;
                if let Some(&(src, _)) = spec.residual_pairs.iter().find(|&&(_, d)| d == conv_i) {
                    let s = skip[src].as_ref().expect("source precedes destination");
                    out.data_mut().iter_mut().zip(s.data()).for_each(|(o, v)| *o += v);
                }
                out.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
                if spec.residual_pairs.iter().any(|&(s, _)| s == conv_i) {
                    skip[conv_i] = Some(out.clone());
                }
                steps.push(Step::Conv {
                    index: conv_i,
                    input: std::mem::replace(&mut cur, out.clone()),
                    out,
                    stride: c.stride,
                    padding: c.padding,
                });
                conv_i += 1;
            }
            Layer::MaxPool { window, stride } => {
                let d = cur.dims().to_vec();
                let (c, h, w) = (d[0], d[1], d[2]);
                let pooled = maxpool2d(&cur, window, stride)?;
                let (oh, ow) = (pooled.dims()[1], pooled.dims()[2]);
                let mut argmax = Vec::with_capacity(pooled.len());
                let x = cur.data();
                for ch in 0..c {
                    for oy in 0..oh {
                        for ox in 0..ow {
                            let mut best = usize::MAX;
                            for dy in 0..window {
                                for dx in 0..window {
                                    let idx = (ch * h + oy * stride + dy) * w + ox * stride + dx;
                                    if best == usize::MAX || x[idx] > x[best] {
                                        best = idx;
                                    }
                                }
                            }
                            argmax.push(best);
                        }
                    }
                }
                steps.push(Step::Pool { in_dims: d, argmax });
                cur = pooled;
            }
            Layer::Flatten => {
                steps.push(Step::Flatten);
                let n = cur.len();
                cur = cur.reshape(vec![n])?;
            }
            Layer::Fc { .. } => {
                let mask = (dropout > 0.0).then(|| {
                    let keep = 1.0 - dropout;
                    (0..cur.len())
                        .map(|_| if rng.gen::<f32>() < keep { 1.0 / keep } else { 0.0 })
                        .collect::<Vec<f32>>()
                });
                if let Some(m) = &mask {
                    cur.data_mut().iter_mut().zip(m).for_each(|(v, s)| *v *= s);
                }
                let mut out = fc_forward(
                    &cur,
                    store.get(&weights::fc_weights(fc_i))?,
                    store.get(&weights::fc_bias(fc_i))?,
                )?;
                let hidden = fc_i + 1 < n_fc;
                if hidden {
                    out.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
                }
                steps.push(Step::Fc {
                    index: fc_i,
                    input: std::mem::replace(&mut cur, out.clone()),
                    out,
                    hidden,
                    dropout: mask,
                });
                fc_i += 1;
            }
        }
    }
    Ok((cur, steps))
}

fn backward(
    spec: &ModelSpec,
    store: &WeightStore,
    steps: Vec<Step>,
    grad_logits: Vec<f64>,
    grads: &mut Grads,
) -> Result<()> {
    let mut pending: Vec<Option<Vec<f64>>> = vec![None; spec.conv_count()];
    let mut g = grad_logits;
    for step in steps.into_iter().rev() {
        match step {
            Step::Fc {
                index,
                input,
                out,
                hidden,
                dropout,
            } => {
                if hidden {
                    g.iter_mut().zip(out.data()).for_each(|(gv, &o)| {
                        if o <= 0.0 {
                            *gv = 0.0
                        }
                    });
                }
                let w = store.get(&weights::fc_weights(index))?;
                let d = input.len();
                let x = input.data();
                {
                    let dw = grads.slot(&weights::fc_weights(index));
                    for (o, &gv) in g.iter().enumerate() {
                        if gv == 0.0 {
                            continue;
                        }
                        for (dwv, &xv) in dw[o * d..(o + 1) * d].iter_mut().zip(x) {
                            *dwv += gv * xv as f64;
                        }
                    }
                }
                grads
                    .slot(&weights::fc_bias(index))
                    .iter_mut()
                    .zip(&g)
                    .for_each(|(b, gv)| *b += gv);
                let mut dx = vec![0.0f64; d];
                for (o, &gv) in g.iter().enumerate() {
                    if gv == 0.0 {
                        continue;
                    }
                    for (dxv, &wv) in dx.iter_mut().zip(&w.data()[o * d..(o + 1) * d]) {
                        *dxv += gv * wv as f64;
                    }
                }
                if let Some(m) = dropout {
                    dx.iter_mut().zip(&m).for_each(|(v, &s)| *v *= s as f64);
                }
                g = dx;
            }
            Step::Flatten => {}
            Step::Pool { in_dims, argmax } => {
                let mut dx = vec![0.0f64; in_dims.iter().product()];
                for (gv, &idx) in g.iter().zip(&argmax) {
                    dx[idx] += gv;
                }
                g = dx;
            }
            Step::Conv {
                index,
                input,
                out,
                stride,
                padding,
            } => {
                if let Some(p) = pending[index].take() {
                    g.iter_mut().zip(&p).for_each(|(a, b)| *a += b);
                }
                g.iter_mut().zip(out.data()).for_each(|(gv, &o)| {
                    if o <= 0.0 {
                        *gv = 0.0
                    }
                });
                if let Some(&(src, _)) = spec.residual_pairs.iter().find(|&&(_, d)| d == index) {
                    match &mut pending[src] {
                        Some(p) => p.iter_mut().zip(&g).for_each(|(a, b)| *a += b),
                        slot => *slot = Some(g.clone()),
                    }
                }
                g = conv_backward(store, grads, index, &input, &out, &g, stride, padding, index > 0)?;
            }
        }
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn conv_backward(
    store: &WeightStore,
    grads: &mut Grads,
    index: usize,
    input: &Tensor,
    out: &Tensor,
    gz: &[f64],
    stride: usize,
    padding: usize,
    need_input_grad: bool,
) -> Result<Vec<f64>> {
    let k_t = store.get(&weights::conv_kernels(index))?;
    let kd = k_t.dims();
    let (c_out, c_in, k) = (kd[0], kd[1], kd[2]);
    let (h, w) = (input.dims()[1], input.dims()[2]);
    let (oh, ow) = (out.dims()[1], out.dims()[2]);
    let x = input.data();
    let kw = k_t.data();
    let mut dx = if need_input_grad {
        vec![0.0f64; x.len()]
    } else {
        Vec::new()
    };
    let mut dk = vec![0.0f64; kw.len()];
    let mut db = vec![0.0f64; c_out];
    for co in 0..c_out {
        let gplane = &gz[co * oh * ow..(co + 1) * oh * ow];
        db[co] += gplane.iter().sum::<f64>();
        if gplane.iter().all(|&v| v == 0.0) {
            continue;
        }
        for ci in 0..c_in {
            let xplane = &x[ci * h * w..(ci + 1) * h * w];
            for ky in 0..k {
                let (oy0, oy1) = crate::engine::ops::valid_range(oh, h, ky, stride, padding);
                for kx in 0..k {
                    let (ox0, ox1) = crate::engine::ops::valid_range(ow, w, kx, stride, padding);
                    let widx = ((co * c_in + ci) * k + ky) * k + kx;
                    let wv = kw[widx] as f64;
                    let mut acc = 0.0;
                    for oy in oy0..oy1 {
                        let iy = oy * stride + ky - padding;
                        for ox in ox0..ox1 {
                            let ix = ox * stride + kx - padding;
                            let gv = gplane[oy * ow + ox];
                            acc += gv * xplane[iy * w + ix] as f64;
                            if need_input_grad {
                                dx[ci * h * w + iy * w + ix] += wv * gv;
                            }
                        }
                    }
                    dk[widx] += acc;
                }
            }
        }
    }
    grads
        .slot(&weights::conv_kernels(index))
        .iter_mut()
        .zip(&dk)
        .for_each(|(a, b)| *a += b);
    grads
        .slot(&weights::conv_bias(index))
        .iter_mut()
        .zip(&db)
        .for_each(|(a, b)| *a += b);
    Ok(dx)
}
