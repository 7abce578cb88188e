//! Primitive selection heuristics: per-primitive scaling, failure suppression
//! and speed-pick batching, plus a simulated executor for closed-loop runs.

mod sim;

pub use sim::{
    check_suppression, replay_episode, run_stow_episode, BoxFaceSource, ConstantSuccess, EndReason,
    EpisodeLog, EpisodeParams, EpisodeSummary, HeightmapSource, LogEntry, LogisticSuccess,
    ProposalSource, ReplayError, SimObject, SimScene, SuccessModel,
};

use std::cmp::Ordering;
use std::collections::BTreeMap;

use nalgebra::Point3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::affordance::{GraspProposal, PrimitiveKind, Proposal, SuctionProposal};

#[derive(Debug, Error, PartialEq)]
pub enum PlannerError {
    #[error("invalid planner config: {0}")]
    InvalidConfig(String),
    #[error("attempt at t={time} precedes clock {clock}")]
    TimeWentBackwards { time: f64, clock: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlannerConfig {
    /// Base multiplier per primitive.
    pub gamma: BTreeMap<PrimitiveKind, f64>,
    /// Seconds from task start during which grasping is scaled down.
    pub suction_first_window: f64,
    pub suction_first_factor: f64,
    pub suppression_radius: f64,
    pub speed_pick_spacing: f64,
    pub failure_window: f64,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            gamma: PrimitiveKind::ALL.into_iter().map(|k| (k, 1.0)).collect(),
            suction_first_window: 180.0,
            suction_first_factor: 0.5,
            suppression_radius: 0.02,
            speed_pick_spacing: 0.03,
            failure_window: 180.0,
        }
    }
}

impl PlannerConfig {
    pub fn validate(&self) -> Result<(), PlannerError> {
        for (k, g) in &self.gamma {
            if !(0.0..=1.0).contains(g) {
                return Err(PlannerError::InvalidConfig(format!("gamma[{k}] = {g} outside [0, 1]")));
            }
        }
        if !(0.0..=1.0).contains(&self.suction_first_factor) {
            return Err(PlannerError::InvalidConfig("suction_first_factor outside [0, 1]".into()));
        }
        if !(self.suppression_radius > 0.0) || !(self.speed_pick_spacing > 0.0) {
            return Err(PlannerError::InvalidConfig("radii must be positive".into()));
        }
        if !(self.suction_first_window >= 0.0) || !(self.failure_window >= 0.0) {
            return Err(PlannerError::InvalidConfig("windows must be non-negative".into()));
        }
        Ok(())
    }

    pub fn base_gamma(&self, kind: PrimitiveKind) -> f64 {
        self.gamma.get(&kind).copied().unwrap_or(1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttemptRecord {
    /// Seconds since task start.
    pub time: f64,
    pub primitive: PrimitiveKind,
    pub position: Point3<f64>,
    pub success: bool,
    /// Scene version the attempt was planned against.
    pub scene_version: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PlannerState {
    pub history: Vec<AttemptRecord>,
    pub clock: f64,
    pub scene_version: u64,
}

impl PlannerState {
    pub fn new() -> Self {
        Self::default()
    }

    /// Logs an attempt at the current clock. A success changes the scene.
    pub fn record(&mut self, primitive: PrimitiveKind, position: Point3<f64>, success: bool) -> AttemptRecord {
        let rec = AttemptRecord {
            time: self.clock,
            primitive,
            position,
            success,
            scene_version: self.scene_version,
        };
        self.history.push(rec);
        if success {
            self.scene_version += 1;
        }
        rec
    }

    /// Appends an externally timed record, keeping history times ordered.
    pub fn push(&mut self, rec: AttemptRecord) -> Result<(), PlannerError> {
        if rec.time < self.clock || self.history.last().is_some_and(|l| rec.time < l.time) {
            return Err(PlannerError::TimeWentBackwards { time: rec.time, clock: self.clock });
        }
        self.clock = rec.time;
        self.history.push(rec);
        if rec.success {
            self.scene_version += 1;
        }
        Ok(())
    }

    pub fn advance(&mut self, seconds: f64) {
        self.clock += seconds.max(0.0);
    }

    /// Fresh observation without a pick; clears suppressions.
    pub fn reobserve(&mut self) {
        self.scene_version += 1;
    }

    /// Failures of `kind` no older than `window` seconds.
    pub fn recent_failures(&self, kind: PrimitiveKind, window: f64) -> usize {
        self.history
            .iter()
            .filter(|r| r.primitive == kind && !r.success && r.time >= self.clock - window && r.time <= self.clock)
            .count()
    }
}

/// Multiplier from the failure count: below two failures 1, two or three 0.5,
/// more than three 0.25.
pub fn failure_factor(failures: usize) -> f64 {
    match failures {
        0 | 1 => 1.0,
        2 | 3 => 0.5,
        _ => 0.25,
    }
}

pub fn effective_gamma(state: &PlannerState, cfg: &PlannerConfig, kind: PrimitiveKind) -> f64 {
    let suction_first = if !kind.is_suction() && state.clock < cfg.suction_first_window {
        cfg.suction_first_factor
    } else {
        1.0
    };
    cfg.base_gamma(kind) * suction_first * failure_factor(state.recent_failures(kind, cfg.failure_window))
}

/// Whether a same-kind failure in the current scene version lies within the
/// suppression radius of `position`.
pub fn is_suppressed(position: &Point3<f64>, kind: PrimitiveKind, state: &PlannerState, cfg: &PlannerConfig) -> bool {
    state.history.iter().any(|r| {
        !r.success
            && r.primitive == kind
            && r.scene_version == state.scene_version
            && (r.position - position).norm() <= cfg.suppression_radius
    })
}

/// Zeroes the affordance of every suppressed proposal.
pub fn suppress(proposals: &[Proposal], state: &PlannerState, cfg: &PlannerConfig) -> Vec<Proposal> {
    proposals
        .iter()
        .map(|p| {
            let mut p = *p;
            if is_suppressed(&p.position(), p.primitive(), state, cfg) {
                p.set_affordance(0.0);
            }
            p
        })
        .collect()
}

fn lex(a: &Point3<f64>, b: &Point3<f64>) -> Ordering {
    a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)).then(a.z.total_cmp(&b.z))
}

/// Candidates after suppression with positive scaled value, best first.
/// Ties: primitive order, then lexicographic position.
fn ranked(proposals: &[Proposal], state: &PlannerState, cfg: &PlannerConfig) -> Vec<(f64, Proposal)> {
    let gammas: BTreeMap<PrimitiveKind, f64> = PrimitiveKind::ALL
        .into_iter()
        .map(|k| (k, effective_gamma(state, cfg, k)))
        .collect();
    let mut out: Vec<(f64, Proposal)> = suppress(proposals, state, cfg)
        .into_iter()
        .map(|p| (p.affordance() * gammas[&p.primitive()], p))
        .filter(|(v, _)| *v > 0.0)
        .collect();
    out.sort_by(|(va, a), (vb, b)| {
        vb.total_cmp(va)
            .then(a.primitive().cmp(&b.primitive()))
            .then(lex(&a.position(), &b.position()))
    });
    out
}

fn combined(suction: &[SuctionProposal], grasp: &[GraspProposal]) -> Vec<Proposal> {
    suction
        .iter()
        .map(|&s| Proposal::from(s))
        .chain(grasp.iter().map(|&g| Proposal::from(g)))
        .collect()
}

/// The proposal with the highest scaled affordance, or none when everything
/// is suppressed or scaled to zero.
pub fn select_action(
    suction: &[SuctionProposal],
    grasp: &[GraspProposal],
    state: &PlannerState,
    cfg: &PlannerConfig,
) -> Option<Proposal> {
    select_from(&combined(suction, grasp), state, cfg)
}

pub fn select_from(proposals: &[Proposal], state: &PlannerState, cfg: &PlannerConfig) -> Option<Proposal> {
    ranked(proposals, state, cfg).into_iter().next().map(|(_, p)| p)
}

/// Up to `k` proposals in scaled order, each at least `speed_pick_spacing`
/// from every one already taken.
pub fn speed_pick_batch(proposals: &[Proposal], state: &PlannerState, cfg: &PlannerConfig, k: usize) -> Vec<Proposal> {
    let mut batch: Vec<Proposal> = Vec::new();
    for (_, p) in ranked(proposals, state, cfg) {
        if batch.len() >= k {
            break;
        }
        if batch.iter().all(|q| (q.position() - p.position()).norm() >= cfg.speed_pick_spacing) {
            batch.push(p);
        }
    }
    batch
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector3;
    use proptest::prelude::*;

    fn sd(x: f64, aff: f64) -> SuctionProposal {
        SuctionProposal {
            point: Point3::new(x, 0.0, 0.1),
            normal: Vector3::z(),
            affordance: aff,
            primitive: PrimitiveKind::SuctionDown,
            point_index: 0,
            source: None,
        }
    }

    fn gd(x: f64, aff: f64) -> GraspProposal {
        GraspProposal {
            midpoint: Point3::new(x, 0.0, 0.1),
            angle: 0.0,
            width: 0.05,
            affordance: aff,
            primitive: PrimitiveKind::GraspDown,
            row: 0,
            col: 0,
            angle_index: 0,
        }
    }

    fn at(clock: f64) -> PlannerState {
        PlannerState {
            clock,
            ..PlannerState::default()
        }
    }

    #[test]
    fn gamma_examples() {
        let cfg = PlannerConfig::default();
        assert_eq!(effective_gamma(&at(60.0), &cfg, PrimitiveKind::GraspDown), 0.5);
        assert_eq!(effective_gamma(&at(60.0), &cfg, PrimitiveKind::FlushGrasp), 0.5);
        assert_eq!(effective_gamma(&at(60.0), &cfg, PrimitiveKind::SuctionDown), 1.0);
        assert_eq!(effective_gamma(&at(200.0), &cfg, PrimitiveKind::GraspDown), 1.0);
        let mut s = at(100.0);
        for i in 0..4 {
            s.history.push(AttemptRecord {
                time: 100.0 + i as f64,
                primitive: PrimitiveKind::SuctionDown,
                position: Point3::new(i as f64, 0.0, 0.0),
                success: false,
                scene_version: 0,
            });
        }
        s.clock = 200.0;
        assert_eq!(effective_gamma(&s, &cfg, PrimitiveKind::SuctionDown), 0.25);
        assert_eq!(effective_gamma(&s, &cfg, PrimitiveKind::SuctionSide), 1.0);
        // failures age out of the window
        s.clock = 400.0;
        assert_eq!(effective_gamma(&s, &cfg, PrimitiveKind::SuctionDown), 1.0);
    }

    #[test]
    fn failure_factor_steps() {
        let f: Vec<_> = (0..7).map(failure_factor).collect();
        assert_eq!(f, vec![1.0, 1.0, 0.5, 0.5, 0.25, 0.25, 0.25]);
    }

    #[test]
    fn selection_examples() {
        let cfg = PlannerConfig::default();
        let s = [sd(0.0, 0.9)];
        let g = [gd(0.1, 0.95)];
        let early = select_action(&s, &g, &at(0.0), &cfg).unwrap();
        assert_eq!(early.primitive(), PrimitiveKind::SuctionDown);
        let late = select_action(&s, &g, &at(400.0), &cfg).unwrap();
        assert_eq!(late.primitive(), PrimitiveKind::GraspDown);
        assert!(select_action(&[], &[], &at(0.0), &cfg).is_none());
    }

    #[test]
    fn ties_prefer_kind_order_then_position() {
        let cfg = PlannerConfig::default();
        let s = [sd(0.2, 0.5), sd(0.1, 0.5)];
        let g = [gd(0.0, 0.5)];
        let pick = select_action(&s, &g, &at(500.0), &cfg).unwrap();
        assert_eq!(pick.position().x, 0.1);
        assert_eq!(pick.primitive(), PrimitiveKind::SuctionDown);
    }

    #[test]
    fn suppression_examples() {
        let cfg = PlannerConfig::default();
        let mut state = at(10.0);
        state.record(PrimitiveKind::SuctionDown, Point3::new(0.0, 0.0, 0.1), false);
        let props = vec![
            Proposal::from(sd(0.01, 0.8)),
            Proposal::from(GraspProposal { midpoint: Point3::new(0.0, 0.0, 0.1), ..gd(0.0, 0.8) }),
            Proposal::from(sd(0.03, 0.8)),
        ];
        let out = suppress(&props, &state, &cfg);
        assert_eq!(out[0].affordance(), 0.0);
        assert_eq!(out[1].affordance(), 0.8);
        assert_eq!(out[2].affordance(), 0.8);
        // a scene change lifts the suppression
        state.reobserve();
        assert_eq!(suppress(&props, &state, &cfg)[0].affordance(), 0.8);
    }

    #[test]
    fn everything_suppressed_gives_none() {
        let cfg = PlannerConfig::default();
        let mut state = at(0.0);
        state.record(PrimitiveKind::SuctionDown, Point3::new(0.0, 0.0, 0.1), false);
        assert!(select_action(&[sd(0.0, 1.0)], &[], &state, &cfg).is_none());
    }

    #[test]
    fn speed_pick_examples() {
        let cfg = PlannerConfig::default();
        let close = [Proposal::from(sd(0.0, 0.9)), Proposal::from(sd(0.01, 0.8))];
        assert_eq!(speed_pick_batch(&close, &at(0.0), &cfg, 3).len(), 1);
        let apart = [Proposal::from(sd(0.0, 0.7)), Proposal::from(sd(0.05, 0.9)), Proposal::from(sd(0.1, 0.8))];
        let b = speed_pick_batch(&apart, &at(0.0), &cfg, 3);
        let xs: Vec<_> = b.iter().map(|p| p.position().x).collect();
        assert_eq!(xs, vec![0.05, 0.1, 0.0]);
    }

    #[test]
    fn history_must_be_ordered() {
        let mut s = at(5.0);
        let rec = AttemptRecord {
            time: 1.0,
            primitive: PrimitiveKind::SuctionDown,
            position: Point3::origin(),
            success: false,
            scene_version: 0,
        };
        assert!(s.push(rec).is_err());
        assert!(s.push(AttemptRecord { time: 6.0, ..rec }).is_ok());
        assert_eq!(s.clock, 6.0);
    }

    #[test]
    fn config_validation_and_json() {
        let cfg = PlannerConfig::default();
        cfg.validate().unwrap();
        let json = serde_json::to_string(&cfg).unwrap();
        assert!(json.contains("\"sd\":1.0"));
        let back: PlannerConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, cfg);
        let partial: PlannerConfig = serde_json::from_str(r#"{"suppression_radius":0.05}"#).unwrap();
        assert_eq!(partial.suppression_radius, 0.05);
        assert_eq!(partial.failure_window, 180.0);
        let mut bad = cfg.clone();
        bad.gamma.insert(PrimitiveKind::GraspDown, 1.5);
        assert!(bad.validate().is_err());
    }

    fn arb_proposals() -> impl Strategy<Value = Vec<Proposal>> {
        prop::collection::vec((0usize..4, 0.0f64..0.3, 0.0f64..0.3, 0.01f64..1.0), 1..40).prop_map(|v| {
            v.into_iter()
                .map(|(k, x, y, a)| {
                    let kind = PrimitiveKind::ALL[k];
                    if kind.is_suction() {
                        Proposal::from(SuctionProposal { primitive: kind, point: Point3::new(x, y, 0.0), ..sd(0.0, a) })
                    } else {
                        Proposal::from(GraspProposal { primitive: kind, midpoint: Point3::new(x, y, 0.0), ..gd(0.0, a) })
                    }
                })
                .collect()
        })
    }

    proptest! {
        #[test]
        fn argmax_invariant_under_scaling(props in arb_proposals(), exp in -4i32..4, clock in 0.0f64..400.0) {
            let cfg = PlannerConfig::default();
            let state = at(clock);
            let c = 2f64.powi(exp);
            let scaled: Vec<_> = props.iter().map(|p| { let mut q = *p; q.set_affordance(p.affordance() * c); q }).collect();
            let a = select_from(&props, &state, &cfg).map(|p| (p.primitive(), p.position()));
            let b = select_from(&scaled, &state, &cfg).map(|p| (p.primitive(), p.position()));
            prop_assert_eq!(a, b);
        }

        #[test]
        fn gamma_non_increasing_in_failures(n in 0usize..10) {
            let cfg = PlannerConfig::default();
            let mut state = at(1000.0);
            let mut prev = effective_gamma(&state, &cfg, PrimitiveKind::SuctionSide);
            for i in 0..n {
                state.history.push(AttemptRecord { time: 1000.0, primitive: PrimitiveKind::SuctionSide, position: Point3::new(i as f64, 0.0, 0.0), success: false, scene_version: 0 });
                let g = effective_gamma(&state, &cfg, PrimitiveKind::SuctionSide);
                prop_assert!(g <= prev);
                prev = g;
            }
        }

        #[test]
        fn speed_batch_is_spaced(props in arb_proposals(), k in 1usize..10) {
            let cfg = PlannerConfig::default();
            let b = speed_pick_batch(&props, &at(0.0), &cfg, k);
            prop_assert!(b.len() <= k);
            for i in 0..b.len() {
                for j in i + 1..b.len() {
                    prop_assert!((b[i].position() - b[j].position()).norm() >= cfg.speed_pick_spacing);
                }
            }
        }
    }
}
