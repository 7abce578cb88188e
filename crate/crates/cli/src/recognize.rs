use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::Context;
use graspkit::evaluation::{run_1v20_benchmark, BenchmarkResult, BenchmarkTable, RandomPipeline, SingleModelPipeline, TwoStagePipeline};
use graspkit::recognition::synthetic::{benchmark_train_config, SyntheticWorld, WorldParams, BENCHMARK_LAMBDA};
use graspkit::recognition::{read_model, write_model, EmbeddingModel, FeatureSet, RecognitionConfig, RecognitionError, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::{read_config, read_json_file, require_dir, require_file, usage, write_json};

pub const KNET_FILE: &str = "knet.embd";
pub const NNET_FILE: &str = "nnet.embd";
pub const SETTINGS_FILE: &str = "recognition.json";
pub const BENCHMARK_FILE: &str = "benchmark.json";

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Generate a synthetic feature world instead of reading features.
    #[arg(long, conflicts_with_all = ["features", "catalog"])]
    pub synthetic: bool,
    /// Synthetic world parameters (JSON).
    #[arg(long, requires = "synthetic")]
    pub world: Option<PathBuf>,
    /// Directory with train.feat, calibration.feat and test.feat.
    #[arg(long, requires = "catalog")]
    pub features: Option<PathBuf>,
    /// Directory with products.feat and objects.json.
    #[arg(long, requires = "features")]
    pub catalog: Option<PathBuf>,
    /// Train K-net and N-net and write them to --out.
    #[arg(long)]
    pub train: bool,
    /// Run the 1-vs-20 benchmark.
    #[arg(long)]
    pub bench: bool,
    /// Trained models for --bench without --train; defaults to --out.
    #[arg(long)]
    pub models: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 200)]
    pub cases: usize,
    /// Known and novel candidates per case.
    #[arg(long, default_value_t = 10)]
    pub per_pool: usize,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Weight of the auxiliary classification loss in K-net training.
    #[arg(long, default_value_t = BENCHMARK_LAMBDA)]
    pub lambda: f64,
    #[arg(long, default_value = "recognition_out")]
    pub out: PathBuf,
    /// Also write the feature set in the on-disk layout (features/, catalog/).
    #[arg(long)]
    pub export: Option<PathBuf>,
}

/// Settings saved next to the trained models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Settings {
    pub k_threshold: f64,
    pub lambda: f64,
    pub train: TrainConfig,
}

fn input_error(e: RecognitionError, what: &str) -> anyhow::Error {
    match e {
        RecognitionError::Io(io) if io.kind() == std::io::ErrorKind::NotFound => usage(format!("{what}: {io}")),
        e @ (RecognitionError::Format(_) | RecognitionError::UnknownObject(_) | RecognitionError::Dimension { .. }) => {
            usage(format!("{what}: {e}"))
        }
        e => anyhow::Error::new(e).context(what.to_string()),
    }
}

fn load_set(args: &Args) -> anyhow::Result<FeatureSet> {
    if args.synthetic {
        let params: WorldParams = read_config(args.world.as_ref(), "world params")?;
        return Ok(SyntheticWorld::generate(params, args.seed).features);
    }
    let (Some(features), Some(catalog)) = (&args.features, &args.catalog) else {
        return Err(usage("give either --synthetic or both --features and --catalog"));
    };
    require_dir(features, "features directory")?;
    require_dir(catalog, "catalog directory")?;
    FeatureSet::read(features, catalog).map_err(|e| input_error(e, "reading features"))
}

fn save_model(path: &Path, model: &EmbeddingModel) -> anyhow::Result<()> {
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    write_model(&mut w, model)?;
    w.flush()?;
    Ok(())
}

fn load_model(path: &Path) -> anyhow::Result<EmbeddingModel> {
    require_file(path, "model")?;
    let mut r = BufReader::new(File::open(path)?);
    read_model(&mut r).map_err(|e| input_error(e, &path.display().to_string()))
}

fn load_config(dir: &Path) -> anyhow::Result<RecognitionConfig> {
    require_dir(dir, "models directory")?;
    let settings: Settings = read_json_file(&dir.join(SETTINGS_FILE), "recognition settings")?;
    let config = RecognitionConfig { k_threshold: settings.k_threshold, knet: load_model(&dir.join(KNET_FILE))?, nnet: load_model(&dir.join(NNET_FILE))? };
    config.validate().map_err(|e| usage(format!("models in {}: {e}", dir.display())))?;
    Ok(config)
}

pub fn run(args: Args) -> anyhow::Result<()> {
    let set = load_set(&args)?;
    if let Some(dir) = &args.export {
        set.write(&dir.join("features"), &dir.join("catalog")).with_context(|| format!("exporting features to {}", dir.display()))?;
        println!("exported features to {}", dir.display());
    }
    let (train, bench) = if args.train || args.bench { (args.train, args.bench) } else { (true, true) };
    let config = if train {
        let mut cfg = benchmark_train_config(args.seed);
        if let Some(e) = args.epochs {
            cfg.epochs = e;
        }
        let config = set.train_pipelines(cfg, args.lambda).map_err(|e| input_error(e, "training"))?;
        std::fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
        save_model(&args.out.join(KNET_FILE), &config.knet)?;
        save_model(&args.out.join(NNET_FILE), &config.nnet)?;
        write_json(&args.out.join(SETTINGS_FILE), &Settings { k_threshold: config.k_threshold, lambda: args.lambda, train: cfg })?;
        println!("trained on {} observations of {} known objects", set.train.len(), set.known_ids.len());
        config
    } else {
        load_config(args.models.as_ref().unwrap_or(&args.out))?
    };
    println!("k = {:.4}", config.k_threshold);
    if bench {
        let cases = set.benchmark_cases(args.cases, args.per_pool, args.seed ^ 0x5eed).map_err(|e| usage(e.to_string()))?;
        let rows: Vec<BenchmarkResult> = vec![
            run_1v20_benchmark(&cases, &mut SingleModelPipeline { name: "N-net".into(), model: &config.nnet, catalog: &set.catalog })?,
            run_1v20_benchmark(&cases, &mut SingleModelPipeline { name: "K-net".into(), model: &config.knet, catalog: &set.catalog })?,
            run_1v20_benchmark(&cases, &mut TwoStagePipeline { config: &config, catalog: &set.catalog })?,
            run_1v20_benchmark(&cases, &mut RandomPipeline::new(args.seed))?,
        ];
        print!("{}", BenchmarkTable(&rows));
        write_json(&args.out.join(BENCHMARK_FILE), &rows)?;
    }
    println!("wrote {}", args.out.display());
    Ok(())
}
