use std::fs;
use std::path::Path;

use crate::analysis::grouping::GroupingMap;
use crate::decoder::genome::{repair, retained_kernel_set, Genome};
use crate::decoder::kernel_set::KernelSet;
use crate::engine::forward::ChannelMask;
use crate::error::{Error, Result};
use crate::store::model::Model;
use crate::store::spec::{Layer, ModelSpec};
use crate::store::weights::{conv_bias, conv_kernels, fc_bias, fc_weights, WeightStore};
use crate::tensor::Tensor;

/// Sorted kernel indices to keep, per conv layer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeepPlan {
    pub keep: Vec<Vec<usize>>,
}

impl KeepPlan {
    pub fn all(widths: &[usize]) -> Self {
        Self {
            keep: widths.iter().map(|&w| (0..w).collect()).collect(),
        }
    }

    /// Equivalent channel mask over the parent's widths.
    pub fn to_mask(&self, widths: &[usize]) -> ChannelMask {
        let keep = self
            .keep
            .iter()
            .zip(widths)
            .map(|(k, &w)| {
                let mut row = vec![false; w];
                for &i in k {
                    row[i] = true;
                }
                row
            })
            .collect();
        ChannelMask::from_keep(keep)
    }
}

/// Per-conv keep lists implied by a genome.
pub fn keep_plan(grouping: &GroupingMap, genome: &Genome) -> Result<KeepPlan> {
    genome.check_len(grouping)?;
    let class = &grouping.groups[genome.class_id];
    let mut keep = vec![Vec::new(); grouping.conv_widths.len()];
    for s in &grouping.segments {
        for g in (0..s.groups).filter(|&g| genome.bits[s.offset + g]) {
            for &conv in &s.convs {
                keep[conv].extend_from_slice(&class[conv][g]);
            }
        }
    }
    for (layer, k) in keep.iter_mut().enumerate() {
        if k.is_empty() {
            return Err(Error::EmptyLayer { layer });
        }
        k.sort_unstable();
    }
    Ok(KeepPlan { keep })
}

/// Physically removes every conv output channel not in `keep`, along with
/// the matching input slices downstream.
pub fn slice_model(model: &Model, keep: &KeepPlan) -> Result<Model> {
    let plan = &model.plan;
    if keep.keep.len() != plan.convs.len() {
        return Err(Error::Genome(format!(
            "keep plan covers {} convs, model has {}",
            keep.keep.len(),
            plan.convs.len()
        )));
    }
    for (i, (k, info)) in keep.keep.iter().zip(&plan.convs).enumerate() {
        if k.is_empty() {
            return Err(Error::EmptyLayer { layer: i });
        }
        if k.iter().any(|&c| c >= info.out_channels) {
            return Err(Error::Genome(format!("conv{i} keep index out of range")));
        }
    }

    let mut spec = model.spec.clone();
    let mut conv = 0;
    for layer in &mut spec.layers {
        if let Layer::Conv(c) = layer {
            c.out_channels = keep.keep[conv].len();
            conv += 1;
        }
    }

    let mut weights = WeightStore::new();
    for (i, info) in plan.convs.iter().enumerate() {
        let outs = &keep.keep[i];
        let ins: Vec<usize> = if i == 0 {
            (0..info.in_channels).collect()
        } else {
            keep.keep[i - 1].clone()
        };
        let kk = info.kernel_size * info.kernel_size;
        let src = model.weights.get(&conv_kernels(i))?.data();
        let mut data = Vec::with_capacity(outs.len() * ins.len() * kk);
        for &o in outs {
            for &c in &ins {
                let base = (o * info.in_channels + c) * kk;
                data.extend_from_slice(&src[base..base + kk]);
            }
        }
        let dims = vec![outs.len(), ins.len(), info.kernel_size, info.kernel_size];
        weights.insert(conv_kernels(i), Tensor::new(dims, data)?);
        let bias = model.weights.get(&conv_bias(i))?.data();
        let b: Vec<f32> = outs.iter().map(|&o| bias[o]).collect();
        weights.insert(conv_bias(i), Tensor::from_vec(b));
    }

    for (j, info) in plan.fcs.iter().enumerate() {
        let w = model.weights.get(&fc_weights(j))?;
        let sliced = match (j, plan.last_conv) {
            (0, Some(last)) => {
                let (_, h, wd) = plan.flatten_input;
                let block = h * wd;
                let cols: Vec<usize> = keep.keep[last]
                    .iter()
                    .flat_map(|&c| c * block..(c + 1) * block)
                    .collect();
                let src = w.data();
                let mut data = Vec::with_capacity(info.out_features * cols.len());
                for r in 0..info.out_features {
                    let row = &src[r * info.in_features..(r + 1) * info.in_features];
                    data.extend(cols.iter().map(|&c| row[c]));
                }
                Tensor::new(vec![info.out_features, cols.len()], data)?
            }
            _ => w.clone(),
        };
        weights.insert(fc_weights(j), sliced);
        weights.insert(fc_bias(j), model.weights.get(&fc_bias(j))?.clone());
    }

    Model::new(spec, weights)
}

/// A decoded module together with its provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct ModuleArtifact {
    pub model: Model,
    pub retained: KernelSet,
    pub parent_fingerprint: String,
    pub genome: Genome,
}

impl ModuleArtifact {
    pub fn class_id(&self) -> usize {
        self.genome.class_id
    }

    pub fn sidecar_text(&self) -> String {
        format!(
            "class = {}\nparent = {}\nbits = {}\n",
            self.genome.class_id,
            self.parent_fingerprint,
            self.genome.to_bit_string()
        )
    }

    /// Writes `spec.txt`, `weights.cnsp` and `genome.txt` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("spec.txt"), self.model.spec.to_text())?;
        fs::write(dir.join("weights.cnsp"), self.model.weights.to_bytes())?;
        fs::write(dir.join("genome.txt"), self.sidecar_text())?;
        Ok(())
    }

    /// Loads a saved module; the retained set is rebuilt from the grouping.
    pub fn load(dir: &Path, grouping: &GroupingMap) -> Result<Self> {
        let spec = ModelSpec::parse(&fs::read_to_string(dir.join("spec.txt"))?)?;
        let weights = WeightStore::from_bytes(&fs::read(dir.join("weights.cnsp"))?)?;
        let model = Model::new(spec, weights)?;
        let (genome, parent_fingerprint) =
            parse_sidecar(&fs::read_to_string(dir.join("genome.txt"))?)?;
        let retained = retained_kernel_set(grouping, &genome)?;
        Ok(Self {
            model,
            retained,
            parent_fingerprint,
            genome,
        })
    }
}

fn parse_sidecar(text: &str) -> Result<(Genome, String)> {
    let (mut class, mut parent, mut bits) = (None, None, None);
    for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Malformed(format!("genome sidecar line {line:?}")))?;
        let value = value.trim().to_string();
        match key.trim() {
            "class" => {
                class = Some(
                    value
                        .parse::<usize>()
                        .map_err(|e| Error::Malformed(format!("class id: {e}")))?,
                )
            }
            "parent" => parent = Some(value),
            "bits" => bits = Some(value),
            other => return Err(Error::Malformed(format!("unknown sidecar key {other:?}"))),
        }
    }
    let missing = |k: &str| Error::Malformed(format!("genome sidecar missing {k}"));
    let class = class.ok_or_else(|| missing("class"))?;
    let genome = Genome::parse_bits(&bits.ok_or_else(|| missing("bits"))?, class)?;
    Ok((genome, parent.ok_or_else(|| missing("parent"))?))
}

/// Decodes `genome` against `model`. With `apply_repair` off, an all-zero
/// segment is an error.
pub fn decode(
    model: &Model,
    grouping: &GroupingMap,
    genome: &Genome,
    apply_repair: bool,
) -> Result<ModuleArtifact> {
    genome.check_len(grouping)?;
    if grouping.conv_widths != model.conv_widths() {
        return Err(Error::Genome("grouping does not match the model's conv widths".into()));
    }
    let genome = if apply_repair {
        repair(genome, grouping)
    } else {
        if let Some(layer) = genome.first_empty_segment(grouping) {
            return Err(Error::EmptyLayer { layer });
        }
        genome.clone()
    };
    let keep = keep_plan(grouping, &genome)?;
    let sliced = slice_model(model, &keep)?;
    Ok(ModuleArtifact {
        model: sliced,
        retained: retained_kernel_set(grouping, &genome)?,
        parent_fingerprint: model.fingerprint(),
        genome,
    })
}
