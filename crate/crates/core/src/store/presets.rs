//! Built-in architecture presets.
//!
//! The `*_full` presets carry the full-size layer widths (4224 and 4288
//! kernels); the `*_desk` presets are small enough to train and modularize
//! on a single CPU core.

use crate::store::spec::ModelSpec;

pub fn simcnn_full_text() -> String {
    let mut layers = String::new();
    let plan: &[&[usize]] = &[
        &[64, 64],
        &[128, 128],
        &[256, 256, 256],
        &[512, 512, 512],
        &[512, 512, 512],
    ];
    for block in plan {
        for &c in *block {
            layers.push_str(&format!("  conv out={c} kernel=3 stride=1 pad=1\n"));
        }
        layers.push_str("  maxpool window=2 stride=2\n");
    }
    format!(
        "name = simcnn\nclasses = 10\ninput = 3x32x32\n\nlayers:\n{layers}  flatten\n  fc out=512\n  fc out=512\n  fc out=10\n"
    )
}

pub fn rescnn_full_text() -> String {
    let widths = [64, 128, 128, 128, 256, 256, 256, 512, 512, 512, 768, 768];
    let pool_after = [3, 6, 9, 11];
    let mut layers = String::new();
    for (i, c) in widths.iter().enumerate() {
        layers.push_str(&format!("  conv out={c} kernel=3 stride=1 pad=1\n"));
        if pool_after.contains(&i) {
            layers.push_str("  maxpool window=2 stride=2\n");
        }
    }
    format!(
        "name = rescnn\nclasses = 10\ninput = 3x32x32\n\nlayers:\n{layers}  flatten\n  fc out=10\n\nresidual:\n  1 -> 3\n  4 -> 6\n  7 -> 9\n"
    )
}

pub fn simcnn_desk_text(classes: usize) -> String {
    format!(
        "name = simcnn-desk
classes = {classes}
input = 1x12x12

layers:
  conv out=8 kernel=3 stride=1 pad=1
  conv out=8 kernel=3 stride=1 pad=1
  maxpool window=2 stride=2
  conv out=16 kernel=3 stride=1 pad=1
  conv out=16 kernel=3 stride=1 pad=1
  maxpool window=2 stride=2
  flatten
  fc out=32
  fc out={classes}
"
    )
}

pub fn rescnn_desk_text(classes: usize) -> String {
    format!(
        "name = rescnn-desk
classes = {classes}
input = 1x12x12

layers:
  conv out=8 kernel=3 stride=1 pad=1
  maxpool window=2 stride=2
  conv out=16 kernel=3 stride=1 pad=1
  conv out=16 kernel=3 stride=1 pad=1
  conv out=16 kernel=3 stride=1 pad=1
  maxpool window=2 stride=2
  flatten
  fc out={classes}

residual:
  1 -> 3
"
    )
}

/// Two convs and one fc: the "overly simple" weak architecture.
pub fn simple_desk_text(classes: usize) -> String {
    format!(
        "name = simple-desk
classes = {classes}
input = 1x12x12

layers:
  conv out=4 kernel=3 stride=1 pad=1
  maxpool window=2 stride=2
  conv out=8 kernel=3 stride=1 pad=1
  maxpool window=2 stride=2
  flatten
  fc out={classes}
"
    )
}

pub fn simcnn_full() -> ModelSpec {
    ModelSpec::parse(&simcnn_full_text()).expect("preset parses")
}

pub fn rescnn_full() -> ModelSpec {
    ModelSpec::parse(&rescnn_full_text()).expect("preset parses")
}

pub fn simcnn_desk(classes: usize) -> ModelSpec {
    ModelSpec::parse(&simcnn_desk_text(classes)).expect("preset parses")
}

pub fn rescnn_desk(classes: usize) -> ModelSpec {
    ModelSpec::parse(&rescnn_desk_text(classes)).expect("preset parses")
}

pub fn simple_desk(classes: usize) -> ModelSpec {
    ModelSpec::parse(&simple_desk_text(classes)).expect("preset parses")
}

/// Look up a preset by name.
pub fn by_name(name: &str, classes: usize) -> Option<ModelSpec> {
    match name {
        "simcnn" => Some(simcnn_full()),
        "rescnn" => Some(rescnn_full()),
        "simcnn-desk" => Some(simcnn_desk(classes)),
        "rescnn-desk" => Some(rescnn_desk(classes)),
        "simple-desk" => Some(simple_desk(classes)),
        _ => None,
    }
}

pub const NAMES: &[&str] = &["simcnn", "rescnn", "simcnn-desk", "rescnn-desk", "simple-desk"];
