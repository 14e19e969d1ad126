//! Model architecture descriptions and shape inference.
//!
//! Text format (one directive per line, `#` starts a comment):
//!
//! ```text
//! name = simcnn-desk
//! classes = 3
//! input = 1x12x12
//!
//! layers:
//!   conv out=8 kernel=3 stride=1 pad=1
//!   maxpool window=2 stride=2
//!   flatten
//!   fc out=3
//!
//! residual:
//!   0 -> 2
//! ```
//!
//! Residual pairs refer to conv ordinals (the n-th conv layer), not layer
//! positions. The source's post-activation output is added to the
//! destination's pre-activation output; ReLU follows the addition.

use std::fmt::Write as _;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvSpec {
    pub out_channels: usize,
    pub kernel_size: usize,
    pub stride: usize,
    pub padding: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layer {
    Conv(ConvSpec),
    MaxPool { window: usize, stride: usize },
    Flatten,
    Fc { out_features: usize },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelSpec {
    pub name: String,
    pub num_classes: usize,
    /// Input dims as (channels, height, width).
    pub input: [usize; 3],
    pub layers: Vec<Layer>,
    /// (source conv ordinal, destination conv ordinal).
    pub residual_pairs: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConvInfo {
    pub layer_index: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel_size: usize,
    pub stride: usize,
    pub padding: usize,
    pub in_hw: (usize, usize),
    pub out_hw: (usize, usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FcInfo {
    pub layer_index: usize,
    pub in_features: usize,
    pub out_features: usize,
}

/// Result of shape inference over a [`ModelSpec`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShapePlan {
    /// Output dims of every layer, in order.
    pub layer_outputs: Vec<Vec<usize>>,
    pub convs: Vec<ConvInfo>,
    pub fcs: Vec<FcInfo>,
    /// (channels, height, width) entering the flatten layer.
    pub flatten_input: (usize, usize, usize),
    /// Conv ordinal whose channels reach the flatten layer, if any.
    pub last_conv: Option<usize>,
}

pub fn conv_output_size(input: usize, kernel: usize, stride: usize, padding: usize) -> Option<usize> {
    let padded = input + 2 * padding;
    if padded < kernel || stride == 0 {
        return None;
    }
    Some((padded - kernel) / stride + 1)
}

impl ModelSpec {
    pub fn conv_count(&self) -> usize {
        self.layers
            .iter()
            .filter(|l| matches!(l, Layer::Conv(_)))
            .count()
    }

    pub fn conv_specs(&self) -> Vec<ConvSpec> {
        self.layers
            .iter()
            .filter_map(|l| match l {
                Layer::Conv(c) => Some(*c),
                _ => None,
            })
            .collect()
    }

    /// Shape inference; accepts exactly the specs the forward pass can run.
    pub fn infer_shapes(&self) -> Result<ShapePlan> {
        let [c0, h0, w0] = self.input;
        if c0 == 0 || h0 == 0 || w0 == 0 {
            return Err(Error::SpecInvalid("input dims must be positive".into()));
        }
        if self.num_classes == 0 {
            return Err(Error::SpecInvalid("classes must be positive".into()));
        }
        let mut layer_outputs = Vec::with_capacity(self.layers.len());
        let mut convs = Vec::new();
        let mut fcs = Vec::new();
        let mut cur = vec![c0, h0, w0];
        let mut flatten_input = None;
        let mut last_conv = None;
        for (i, layer) in self.layers.iter().enumerate() {
            match *layer {
                Layer::Conv(c) => {
                    if flatten_input.is_some() {
                        return Err(Error::SpecInvalid(format!(
                            "layer {i}: conv after flatten"
                        )));
                    }
                    if c.out_channels == 0 || c.kernel_size == 0 || c.stride == 0 {
                        return Err(Error::SpecInvalid(format!(
                            "layer {i}: conv out, kernel and stride must be positive"
                        )));
                    }
                    let oh = conv_output_size(cur[1], c.kernel_size, c.stride, c.padding);
                    let ow = conv_output_size(cur[2], c.kernel_size, c.stride, c.padding);
                    let (Some(oh), Some(ow)) = (oh, ow) else {
                        return Err(Error::SpecInvalid(format!(
                            "layer {i}: kernel {} does not fit {}x{} input with padding {}",
                            c.kernel_size, cur[1], cur[2], c.padding
                        )));
                    };
                    convs.push(ConvInfo {
                        layer_index: i,
                        in_channels: cur[0],
                        out_channels: c.out_channels,
                        kernel_size: c.kernel_size,
                        stride: c.stride,
                        padding: c.padding,
                        in_hw: (cur[1], cur[2]),
                        out_hw: (oh, ow),
                    });
                    last_conv = Some(convs.len() - 1);
                    cur = vec![c.out_channels, oh, ow];
                }
                Layer::MaxPool { window, stride } => {
                    if flatten_input.is_some() {
                        return Err(Error::SpecInvalid(format!(
                            "layer {i}: maxpool after flatten"
                        )));
                    }
                    if window == 0 || stride == 0 {
                        return Err(Error::SpecInvalid(format!(
                            "layer {i}: pool window and stride must be positive"
                        )));
                    }
                    if window > cur[1] || window > cur[2] {
                        return Err(Error::SpecInvalid(format!(
                            "layer {i}: pool window {window} exceeds {}x{} map",
                            cur[1], cur[2]
                        )));
                    }
                    cur = vec![
                        cur[0],
                        (cur[1] - window) / stride + 1,
                        (cur[2] - window) / stride + 1,
                    ];
                }
                Layer::Flatten => {
                    if flatten_input.is_some() {
                        return Err(Error::SpecInvalid(format!("layer {i}: second flatten")));
                    }
                    flatten_input = Some((cur[0], cur[1], cur[2]));
                    cur = vec![cur.iter().product()];
                }
                Layer::Fc { out_features } => {
                    if flatten_input.is_none() {
                        return Err(Error::SpecInvalid(format!(
                            "layer {i}: fc before flatten"
                        )));
                    }
                    if out_features == 0 {
                        return Err(Error::SpecInvalid(format!(
                            "layer {i}: fc out must be positive"
                        )));
                    }
                    fcs.push(FcInfo {
                        layer_index: i,
                        in_features: cur[0],
                        out_features,
                    });
                    cur = vec![out_features];
                }
            }
            layer_outputs.push(cur.clone());
        }
        let Some(flatten_input) = flatten_input else {
            return Err(Error::SpecInvalid("missing flatten layer".into()));
        };
        let Some(last_fc) = fcs.last() else {
            return Err(Error::SpecInvalid("at least one fc layer is required".into()));
        };
        if last_fc.out_features != self.num_classes {
            return Err(Error::SpecInvalid(format!(
                "final fc emits {} logits but classes = {}",
                last_fc.out_features, self.num_classes
            )));
        }
        let mut seen_dst = Vec::new();
        for &(src, dst) in &self.residual_pairs {
            let fail = |reason: String| Error::Residual { src, dst, reason };
            if src >= convs.len() || dst >= convs.len() {
                return Err(fail(format!("model has only {} conv layers", convs.len())));
            }
            if src >= dst {
                return Err(fail("source must precede destination".into()));
            }
            if seen_dst.contains(&dst) {
                return Err(fail(format!("conv{dst} is already a residual destination")));
            }
            seen_dst.push(dst);
            let (a, b) = (&convs[src], &convs[dst]);
            if a.out_channels != b.out_channels {
                return Err(fail(format!(
                    "channel mismatch: conv{src} has {} channels, conv{dst} has {}",
                    a.out_channels, b.out_channels
                )));
            }
            if a.out_hw != b.out_hw {
                return Err(fail(format!(
                    "spatial mismatch: conv{src} is {:?}, conv{dst} is {:?}",
                    a.out_hw, b.out_hw
                )));
            }
        }
        Ok(ShapePlan {
            layer_outputs,
            convs,
            fcs,
            flatten_input,
            last_conv,
        })
    }

    pub fn parse(text: &str) -> Result<Self> {
        parse_spec(text)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let [c, h, w] = self.input;
        let _ = writeln!(out, "name = {}", self.name);
        let _ = writeln!(out, "classes = {}", self.num_classes);
        let _ = writeln!(out, "input = {c}x{h}x{w}");
        let _ = writeln!(out, "\nlayers:");
        for layer in &self.layers {
            let _ = match layer {
                Layer::Conv(c) => writeln!(
                    out,
                    "  conv out={} kernel={} stride={} pad={}",
                    c.out_channels, c.kernel_size, c.stride, c.padding
                ),
                Layer::MaxPool { window, stride } => {
                    writeln!(out, "  maxpool window={window} stride={stride}")
                }
                Layer::Flatten => writeln!(out, "  flatten"),
                Layer::Fc { out_features } => writeln!(out, "  fc out={out_features}"),
            };
        }
        if !self.residual_pairs.is_empty() {
            let _ = writeln!(out, "\nresidual:");
            for (s, d) in &self.residual_pairs {
                let _ = writeln!(out, "  {s} -> {d}");
            }
        }
        out
    }
}

/// Parse and shape-check a spec.
pub fn load_model_spec(text: &str) -> Result<(ModelSpec, ShapePlan)> {
    let spec = parse_spec(text)?;
    let plan = spec.infer_shapes()?;
    Ok((spec, plan))
}

#[derive(PartialEq)]
enum Section {
    Header,
    Layers,
    Residual,
}

fn parse_spec(text: &str) -> Result<ModelSpec> {
    let mut name = None;
    let mut classes = None;
    let mut input = None;
    let mut layers = Vec::new();
    let mut residual_pairs = Vec::new();
    let mut section = Section::Header;

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let err = |message: String| Error::SpecParse {
            line: line_no,
            message,
        };
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        match line {
            "layers:" => {
                section = Section::Layers;
                continue;
            }
            "residual:" => {
                section = Section::Residual;
                continue;
            }
            _ => {}
        }
        if let Some((key, value)) = line.split_once('=').filter(|_| section == Section::Header) {
            let (key, value) = (key.trim(), value.trim());
            match key {
                "name" => name = Some(value.to_string()),
                "classes" => {
                    classes = Some(value.parse::<usize>().map_err(|e| err(format!("classes: {e}")))?)
                }
                "input" => {
                    let dims: Vec<usize> = value
                        .split('x')
                        .map(|d| d.trim().parse::<usize>())
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|e| err(format!("input: {e}")))?;
                    if dims.len() != 3 {
                        return Err(err("input must be CxHxW".into()));
                    }
                    input = Some([dims[0], dims[1], dims[2]]);
                }
                other => return Err(err(format!("unknown key {other:?}"))),
            }
            continue;
        }
        match section {
            Section::Header => return Err(err(format!("unexpected line {line:?}"))),
            Section::Layers => layers.push(parse_layer(line).map_err(err)?),
            Section::Residual => {
                let (a, b) = line
                    .split_once("->")
                    .ok_or_else(|| err("residual entries look like `src -> dst`".into()))?;
                let a = a.trim().parse::<usize>().map_err(|e| err(format!("{e}")))?;
                let b = b.trim().parse::<usize>().map_err(|e| err(format!("{e}")))?;
                residual_pairs.push((a, b));
            }
        }
    }
    Ok(ModelSpec {
        name: name.unwrap_or_else(|| "model".to_string()),
        num_classes: classes.ok_or_else(|| Error::SpecInvalid("missing `classes`".into()))?,
        input: input.ok_or_else(|| Error::SpecInvalid("missing `input`".into()))?,
        layers,
        residual_pairs,
    })
}

fn parse_layer(line: &str) -> std::result::Result<Layer, String> {
    let mut parts = line.split_whitespace();
    let kind = parts.next().unwrap_or_default();
    let mut params = Vec::new();
    for p in parts {
        let (k, v) = p
            .split_once('=')
            .ok_or_else(|| format!("expected key=value, got {p:?}"))?;
        let v = v
            .parse::<usize>()
            .map_err(|e| format!("{k}: {e}"))?;
        params.push((k, v));
    }
    let get = |key: &str| params.iter().find(|(k, _)| *k == key).map(|&(_, v)| v);
    let known = |allowed: &[&str]| -> std::result::Result<(), String> {
        match params.iter().find(|(k, _)| !allowed.contains(k)) {
            Some((k, _)) => Err(format!("{kind}: unknown parameter {k:?}")),
            None => Ok(()),
        }
    };
    match kind {
        "conv" => {
            known(&["out", "kernel", "stride", "pad"])?;
            Ok(Layer::Conv(ConvSpec {
                out_channels: get("out").ok_or("conv needs out=")?,
                kernel_size: get("kernel").ok_or("conv needs kernel=")?,
                stride: get("stride").unwrap_or(1),
                padding: get("pad").unwrap_or(0),
            }))
        }
        "maxpool" => {
            known(&["window", "stride"])?;
            let window = get("window").ok_or("maxpool needs window=")?;
            Ok(Layer::MaxPool {
                window,
                stride: get("stride").unwrap_or(window),
            })
        }
        "flatten" => {
            known(&[])?;
            Ok(Layer::Flatten)
        }
        "fc" => {
            known(&["out"])?;
            Ok(Layer::Fc {
                out_features: get("out").ok_or("fc needs out=")?,
            })
        }
        other => Err(format!("unknown layer kind {other:?}")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "classes = 2\ninput = 1x4x4\nlayers:\n conv out=3 kernel=3\n flatten\n fc out=2\n";

    #[test]
    fn minimal_spec_parses() {
        let (spec, plan) = load_model_spec(MINIMAL).unwrap();
        assert_eq!(spec.conv_count(), 1);
        assert_eq!(plan.flatten_input, (3, 2, 2));
        assert_eq!(plan.fcs[0].in_features, 12);
    }

    #[test]
    fn unknown_layer_kind_is_located() {
        let text = "classes = 2\ninput = 1x4x4\nlayers:\n conv out=3 kernel=3\n batchnorm\n";
        match load_model_spec(text) {
            Err(Error::SpecParse { line, message }) => {
                assert_eq!(line, 5);
                assert!(message.contains("batchnorm"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn residual_channel_mismatch_names_both_layers() {
        let text = "classes = 2\ninput = 1x6x6\nlayers:\n conv out=4 kernel=3 pad=1\n conv out=8 kernel=3 pad=1\n flatten\n fc out=2\nresidual:\n 0 -> 1\n";
        let err = load_model_spec(text).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("conv0") && msg.contains("conv1"), "{msg}");
    }

    #[test]
    fn text_round_trip() {
        let text = "name = r\nclasses = 2\ninput = 1x6x6\nlayers:\n conv out=4 kernel=3 pad=1\n conv out=4 kernel=3 pad=1\n maxpool window=2\n flatten\n fc out=2\nresidual:\n 0 -> 1\n";
        let spec = ModelSpec::parse(text).unwrap();
        assert_eq!(ModelSpec::parse(&spec.to_text()).unwrap(), spec);
    }

    #[test]
    fn final_fc_must_emit_class_logits() {
        let text = "classes = 3\ninput = 1x4x4\nlayers:\n conv out=3 kernel=3\n flatten\n fc out=2\n";
        assert!(load_model_spec(text).is_err());
    }
}
