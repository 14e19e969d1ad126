//! Loading and saving the files commands exchange.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use modsplit::store::{LabeledDataset, Model, ModelSpec, WeightStore};
use serde::de::DeserializeOwned;
use serde::Serialize;

pub const SPEC_FILE: &str = "spec.txt";
pub const WEIGHTS_FILE: &str = "weights.cnsp";

pub fn model_files(dir: &Path) -> [PathBuf; 2] {
    [dir.join(SPEC_FILE), dir.join(WEIGHTS_FILE)]
}

pub fn load_model(dir: &Path) -> Result<Model> {
    let [spec_path, weights_path] = model_files(dir);
    let text = fs::read_to_string(&spec_path).with_context(|| format!("reading {}", spec_path.display()))?;
    let spec = ModelSpec::parse(&text).with_context(|| format!("parsing {}", spec_path.display()))?;
    let bytes = fs::read(&weights_path).with_context(|| format!("reading {}", weights_path.display()))?;
    let weights = WeightStore::from_bytes(&bytes).with_context(|| format!("decoding {}", weights_path.display()))?;
    Model::new(spec, weights).with_context(|| format!("loading model from {}", dir.display()))
}

pub fn save_model(dir: &Path, model: &Model) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let [spec_path, weights_path] = model_files(dir);
    fs::write(&spec_path, model.spec.to_text())?;
    fs::write(&weights_path, model.weights.to_bytes())?;
    Ok(vec![spec_path, weights_path])
}

pub fn load_dataset(path: &Path) -> Result<LabeledDataset> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    LabeledDataset::from_bytes(&bytes).with_context(|| format!("decoding dataset {}", path.display()))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<PathBuf> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(path.to_path_buf())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

pub fn write_text(path: &Path, text: &str) -> Result<PathBuf> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(path.to_path_buf())
}
