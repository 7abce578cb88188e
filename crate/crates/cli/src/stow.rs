use std::path::PathBuf;

use anyhow::Context;
use graspkit::affordance::PrimitiveKind;
use graspkit::planner::{
    run_stow_episode, BoxFaceSource, ConstantSuccess, EpisodeParams, EpisodeSummary, HeightmapSource, LogisticSuccess,
    PlannerConfig, ProposalSource, SimScene, SuccessModel,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::{read_config, usage};

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Number of boxes in the bin.
    #[arg(long, default_value_t = 10)]
    pub objects: usize,
    /// Seeds both the scene and the episode.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Episode length in seconds.
    #[arg(long)]
    pub time_limit: Option<f64>,
    /// Planner config (JSON); flags below override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// JSON-lines episode log.
    #[arg(long, default_value = "stow_log.jsonl")]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "heightmap")]
    pub source: SourceArg,
    #[arg(long, value_enum, default_value = "logistic")]
    pub success: SuccessArg,
    /// Logistic success slope.
    #[arg(long, default_value_t = 10.0)]
    pub success_a: f64,
    /// Logistic success midpoint.
    #[arg(long, default_value_t = 0.5)]
    pub success_b: f64,
    /// Success probability of the constant model.
    #[arg(long, default_value_t = 0.8)]
    pub success_p: f64,
    #[arg(long)]
    pub attempt_duration: Option<f64>,
    #[arg(long)]
    pub observe_duration: Option<f64>,
    /// Proposals tried in quick succession per planning step.
    #[arg(long)]
    pub speed_pick: Option<usize>,
    #[command(flatten)]
    pub planner: PlannerFlags,
}

/// One flag per planner config field.
#[derive(Debug, Default, clap::Args)]
pub struct PlannerFlags {
    #[arg(long)]
    pub gamma_sd: Option<f64>,
    #[arg(long)]
    pub gamma_ss: Option<f64>,
    #[arg(long)]
    pub gamma_gd: Option<f64>,
    #[arg(long)]
    pub gamma_fg: Option<f64>,
    /// Seconds from the start during which grasping is scaled down.
    #[arg(long)]
    pub suction_first_window: Option<f64>,
    #[arg(long)]
    pub suction_first_factor: Option<f64>,
    /// Radius around failed attempts in which the same primitive is suppressed (m).
    #[arg(long)]
    pub suppression_radius: Option<f64>,
    /// Minimum spacing between speed-pick proposals (m).
    #[arg(long)]
    pub speed_pick_spacing: Option<f64>,
    /// Window for counting recent failures (s).
    #[arg(long)]
    pub failure_window: Option<f64>,
}

impl PlannerFlags {
    pub fn apply(&self, cfg: &mut PlannerConfig) {
        for (kind, v) in [
            (PrimitiveKind::SuctionDown, self.gamma_sd),
            (PrimitiveKind::SuctionSide, self.gamma_ss),
            (PrimitiveKind::GraspDown, self.gamma_gd),
            (PrimitiveKind::FlushGrasp, self.gamma_fg),
        ] {
            if let Some(v) = v {
                cfg.gamma.insert(kind, v);
            }
        }
        let set = |field: &mut f64, v: Option<f64>| {
            if let Some(v) = v {
                *field = v;
            }
        };
        set(&mut cfg.suction_first_window, self.suction_first_window);
        set(&mut cfg.suction_first_factor, self.suction_first_factor);
        set(&mut cfg.suppression_radius, self.suppression_radius);
        set(&mut cfg.speed_pick_spacing, self.speed_pick_spacing);
        set(&mut cfg.failure_window, self.failure_window);
    }
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
pub enum SourceArg {
    /// Geometric baselines on a rendered heightmap.
    Heightmap,
    /// Proposals straight from the box faces.
    Box,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
pub enum SuccessArg {
    Logistic,
    Constant,
}

fn rate(k: usize, n: usize) -> String {
    if n == 0 {
        "no attempts".into()
    } else {
        format!("{:.1}%", 100.0 * k as f64 / n as f64)
    }
}

pub fn summary_text(s: &EpisodeSummary, objects: usize) -> String {
    let reason = s.reason.map_or("unfinished".to_string(), |r| serde_json::to_value(r).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default());
    format!(
        "picked {}/{} objects in {:.1} s ({reason})\n{} pick success with suction ({}/{}), {} pick success with grasping ({}/{})\n",
        s.picked,
        objects,
        s.end_time,
        rate(s.suction_successes, s.suction_attempts),
        s.suction_successes,
        s.suction_attempts,
        rate(s.grasp_successes, s.grasp_attempts),
        s.grasp_successes,
        s.grasp_attempts,
    )
}

pub fn run(args: Args) -> anyhow::Result<()> {
    let mut cfg: PlannerConfig = read_config(args.config.as_ref(), "planner config")?;
    for kind in PrimitiveKind::ALL {
        cfg.gamma.entry(kind).or_insert(1.0);
    }
    args.planner.apply(&mut cfg);
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    let mut params = EpisodeParams::default();
    if let Some(t) = args.time_limit {
        params.time_limit = t;
    }
    if let Some(t) = args.attempt_duration {
        params.attempt_duration = t;
    }
    if let Some(t) = args.observe_duration {
        params.observe_duration = t;
    }
    if let Some(k) = args.speed_pick {
        params.speed_pick = k;
    }
    let non_negative = |v: f64| v >= 0.0;
    if !non_negative(params.time_limit) || !non_negative(params.observe_duration) || params.attempt_duration.is_nan() || params.attempt_duration <= 0.0 || params.speed_pick == 0 {
        return Err(usage("time limit and durations must be non-negative, attempt duration and speed pick positive"));
    }
    let scene = SimScene::random(args.objects, &mut ChaCha8Rng::seed_from_u64(args.seed));
    let placed = scene.objects.len();
    if placed < args.objects {
        log::warn!("only {placed} of {} boxes fit in the bin", args.objects);
    }
    let source: Box<dyn ProposalSource> = match args.source {
        SourceArg::Heightmap => Box::new(HeightmapSource::default()),
        SourceArg::Box => Box::new(BoxFaceSource::default()),
    };
    let model: Box<dyn SuccessModel> = match args.success {
        SuccessArg::Logistic => Box::new(LogisticSuccess { a: args.success_a, b: args.success_b }),
        SuccessArg::Constant if (0.0..=1.0).contains(&args.success_p) => Box::new(ConstantSuccess(args.success_p)),
        SuccessArg::Constant => return Err(usage("--success-p must lie in [0, 1]")),
    };
    let log = run_stow_episode(scene, source.as_ref(), model.as_ref(), &cfg, params, args.seed);
    if let Some(dir) = args.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    std::fs::write(&args.out, log.to_jsonl()).with_context(|| format!("writing {}", args.out.display()))?;
    print!("{}", summary_text(&log.summary(), placed));
    println!("wrote {}", args.out.display());
    Ok(())
}
