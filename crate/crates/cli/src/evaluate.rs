use std::path::PathBuf;

use graspkit::affordance::pipeline::PipelineParams;
use graspkit::evaluation::{evaluate_dataset, load_label_dataset, Method, Split};

use crate::affordance::MethodArg;
use crate::{eval_error, read_config, require_dir, write_json};

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Dataset root holding one directory per labelled scene.
    pub dataset_root: PathBuf,
    #[arg(long, value_enum, default_value = "baseline")]
    pub method: MethodArg,
    #[arg(long, value_enum, default_value = "test")]
    pub split: SplitArg,
    /// Where to write the precision table as JSON.
    #[arg(long)]
    pub out: PathBuf,
    /// Pipeline parameters (JSON); defaults when omitted.
    #[arg(long)]
    pub params: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
pub enum SplitArg {
    Train,
    Test,
    All,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Test => Split::Test,
            SplitArg::All => Split::All,
        }
    }
}

pub fn run(args: Args) -> anyhow::Result<()> {
    require_dir(&args.dataset_root, "dataset root")?;
    let params: PipelineParams = read_config(args.params.as_ref(), "pipeline params")?;
    let ds = load_label_dataset(&args.dataset_root).map_err(|e| eval_error(e, "loading dataset"))?;
    let table = evaluate_dataset(&ds, args.split.into(), Method::from(args.method), &params).map_err(|e| eval_error(e, "evaluating"))?;
    print!("{table}");
    write_json(&args.out, &table)
}
