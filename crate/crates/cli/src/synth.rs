use std::path::PathBuf;

use anyhow::Context;
use graspkit::evaluation::{write_synthetic_dataset, LabeledSceneParams};

use crate::read_config;

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Directory to create the scenes in.
    pub root: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub scenes: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Scene generator parameters (JSON); defaults when omitted.
    #[arg(long)]
    pub params: Option<PathBuf>,
}

pub fn run(args: Args) -> anyhow::Result<()> {
    let params: LabeledSceneParams = read_config(args.params.as_ref(), "scene params")?;
    write_synthetic_dataset(&args.root, args.scenes, args.seed, &params)
        .with_context(|| format!("writing dataset to {}", args.root.display()))?;
    println!("wrote {} scenes to {}", args.scenes, args.root.display());
    Ok(())
}
