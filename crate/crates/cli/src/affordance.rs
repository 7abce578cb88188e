use std::path::PathBuf;

use anyhow::Context;
use graspkit::affordance::pipeline::PipelineParams;
use graspkit::affordance::{GraspProposal, Proposal, SuctionProposal};
use graspkit::evaluation::{observation_affordances, read_scene_observation, write_affordance_maps, Method};
use serde::Serialize;

use crate::{eval_error, read_config, require_dir, write_json};

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Scene directory with bin.json and NNN.{color.png,depth.png,meta.json} frames.
    pub scene_dir: PathBuf,
    #[arg(long, value_enum, default_value = "baseline")]
    pub method: MethodArg,
    /// Output directory for maps/ and proposals.json.
    #[arg(long)]
    pub out: PathBuf,
    /// Pipeline parameters (JSON); defaults when omitted.
    #[arg(long)]
    pub params: Option<PathBuf>,
    /// Keep only the best N proposals in the ranked list.
    #[arg(long)]
    pub top: Option<usize>,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
pub enum MethodArg {
    Baseline,
    Learned,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Baseline => Method::Baseline,
            MethodArg::Learned => Method::Learned,
        }
    }
}

#[derive(Serialize)]
struct ProposalFile {
    scene: String,
    method: Method,
    suction_count: usize,
    grasp_count: usize,
    /// Suction and grasp proposals merged, best first.
    ranked: Vec<Proposal>,
}

/// Merges two best-first lists into one, preferring suction on ties.
fn merge(suction: &[SuctionProposal], grasp: &[GraspProposal]) -> Vec<Proposal> {
    let mut out: Vec<Proposal> = suction.iter().copied().map(Proposal::Suction).chain(grasp.iter().copied().map(Proposal::Grasp)).collect();
    out.sort_by(|a, b| b.affordance().total_cmp(&a.affordance()));
    out
}

pub fn run(args: Args) -> anyhow::Result<()> {
    require_dir(&args.scene_dir, "scene directory")?;
    let params: PipelineParams = read_config(args.params.as_ref(), "pipeline params")?;
    let method = Method::from(args.method);
    let (stems, obs) = read_scene_observation(&args.scene_dir).map_err(|e| eval_error(e, &format!("reading scene {}", args.scene_dir.display())))?;
    let aff = observation_affordances(&stems, &obs, &args.scene_dir, method, &params).map_err(|e| eval_error(e, "computing affordances"))?;
    let maps = args.out.join("maps");
    write_affordance_maps(&maps, &stems, &aff).with_context(|| format!("writing maps to {}", maps.display()))?;
    let mut ranked = merge(&aff.suction, &aff.grasp);
    if let Some(n) = args.top {
        ranked.truncate(n);
    }
    let name = args.scene_dir.canonicalize().ok().and_then(|p| p.file_name().map(|n| n.to_string_lossy().into_owned())).unwrap_or_default();
    let file = ProposalFile {
        scene: name,
        method,
        suction_count: aff.suction.len(),
        grasp_count: aff.grasp.len(),
        ranked,
    };
    write_json(&args.out.join("proposals.json"), &file)?;
    println!("{} suction and {} grasp proposals", aff.suction.len(), aff.grasp.len());
    if let Some(best) = file.ranked.first() {
        let p = best.position();
        println!(
            "best: {} at ({:.3}, {:.3}, {:.3}) with affordance {:.3}",
            best.primitive().code(),
            p.x,
            p.y,
            p.z,
            best.affordance()
        );
    }
    println!("wrote {}", args.out.display());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use graspkit::affordance::PrimitiveKind;

    #[test]
    fn merge_is_best_first_and_stable() {
        let s = |a: f64, i: usize| SuctionProposal {
            point: [0.0, 0.0, 0.0].into(),
            normal: [0.0, 0.0, 1.0].into(),
            affordance: a,
            primitive: PrimitiveKind::SuctionDown,
            point_index: i,
            source: None,
        };
        let g = GraspProposal {
            midpoint: [0.0, 0.0, 0.0].into(),
            angle: 0.0,
            width: 0.05,
            affordance: 0.5,
            primitive: PrimitiveKind::GraspDown,
            row: 0,
            col: 0,
            angle_index: 0,
        };
        let m = merge(&[s(0.9, 0), s(0.5, 1), s(0.1, 2)], &[g]);
        let order: Vec<f64> = m.iter().map(|p| p.affordance()).collect();
        assert_eq!(order, [0.9, 0.5, 0.5, 0.1]);
        assert!(matches!(m[1], Proposal::Suction(_)));
        assert!(matches!(m[2], Proposal::Grasp(_)));
    }
}
