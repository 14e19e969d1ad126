//! Run manifest: what a command read, wrote and how long each stage took.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::Result;
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Serialize)]
pub struct FileRecord {
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub seed: u64,
    pub config: serde_json::Value,
    pub inputs: Vec<FileRecord>,
    pub outputs: Vec<FileRecord>,
    pub stages: Vec<StageTiming>,
}

pub fn file_sha256(path: &Path) -> Result<String> {
    Ok(hex::encode(Sha256::digest(fs::read(path)?)))
}

pub struct ManifestBuilder {
    manifest: RunManifest,
}

impl ManifestBuilder {
    pub fn new(command: &str, seed: u64, config: impl Serialize) -> Result<Self> {
        Ok(Self {
            manifest: RunManifest {
                command: command.to_string(),
                seed,
                config: serde_json::to_value(config)?,
                inputs: Vec::new(),
                outputs: Vec::new(),
                stages: Vec::new(),
            },
        })
    }

    pub fn input(&mut self, path: &Path) -> Result<()> {
        self.manifest.inputs.push(FileRecord {
            path: path.to_path_buf(),
            sha256: file_sha256(path)?,
        });
        Ok(())
    }

    pub fn outputs(&mut self, paths: impl IntoIterator<Item = PathBuf>) -> Result<()> {
        for path in paths {
            let sha256 = file_sha256(&path)?;
            self.manifest.outputs.push(FileRecord { path, sha256 });
        }
        Ok(())
    }

    /// Runs `f`, recording its wall-clock time under `stage`.
    pub fn stage<T>(&mut self, stage: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let start = Instant::now();
        let out = f()?;
        self.manifest.stages.push(StageTiming {
            stage: stage.to_string(),
            seconds: start.elapsed().as_secs_f64(),
        });
        Ok(out)
    }

    pub fn write(self, dir: &Path) -> Result<PathBuf> {
        crate::io::write_json(&dir.join("manifest.json"), &self.manifest)
    }
}
