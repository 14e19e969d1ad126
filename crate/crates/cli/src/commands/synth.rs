use anyhow::Result;
use modsplit::synth::{generate, SynthConfig};
use serde::Serialize;

use super::Ctx;
use crate::manifest::ManifestBuilder;

#[derive(Debug, clap::Args, Serialize)]
pub struct Args {
    #[arg(long, default_value_t = 3)]
    pub classes: usize,
    #[arg(long, default_value_t = 100)]
    pub per_class: usize,
    /// Image side length in pixels.
    #[arg(long, default_value_t = 12)]
    pub size: usize,
    #[arg(long, default_value_t = 0.35)]
    pub noise: f32,
    /// Output file name inside the output directory.
    #[arg(long, default_value = "data.cnds")]
    pub name: String,
}

pub fn run(ctx: &Ctx, args: &Args) -> Result<()> {
    let mut manifest = ManifestBuilder::new("synth", ctx.seed, args)?;
    let cfg = SynthConfig {
        classes: args.classes,
        per_class: args.per_class,
        size: args.size,
        noise: args.noise,
        seed: ctx.seed,
        ..SynthConfig::default()
    };
    let data = manifest.stage("generate", || Ok(generate(&cfg)?))?;
    let path = ctx.out_dir.join(&args.name);
    std::fs::write(&path, data.to_bytes())?;
    manifest.outputs([path.clone()])?;
    manifest.write(&ctx.out_dir)?;
    println!("wrote {} samples ({} classes) to {}", data.len(), args.classes, path.display());
    Ok(())
}
