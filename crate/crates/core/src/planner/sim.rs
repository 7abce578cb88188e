//! Simulated stow executor: a bin of boxes, a proposal source, a stochastic
//! success model and a JSON-lines episode log that can be replayed.

use std::collections::VecDeque;

use nalgebra::{Point3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{is_suppressed, select_from, speed_pick_batch, AttemptRecord, PlannerConfig, PlannerState};
use crate::affordance::{
    grasp_baseline, make_grasp_proposals, make_suction_proposals, suction_baseline, GraspProposal, GripperParams,
    PrimitiveKind, Proposal, SuctionParams, SuctionProposal, DEFAULT_DOWN_ANGLE_DEG,
};
use crate::geometry::{estimate_normals, PointCloud};
use crate::grid::Grid;
use crate::heightmap::{BinGeometry, RotationSet};
use crate::synth::{scatter_boxes, Scene, SceneBox};

/// How close (m) a proposal must be to a box to count as touching it.
const CONTACT_SLACK: f64 = 0.003;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimObject {
    pub id: usize,
    pub shape: SceneBox,
    /// Scales the affordances the geometric source reports for this object.
    pub suction_quality: f64,
    pub grasp_quality: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimScene {
    pub bin: BinGeometry,
    pub objects: Vec<SimObject>,
}

impl SimScene {
    pub fn default_bin() -> BinGeometry {
        BinGeometry::new(Point3::origin(), 0.6, 0.4, 0.03).expect("valid bin")
    }

    /// Up to `count` non-overlapping upright boxes with random sizes and
    /// qualities.
    pub fn random(count: usize, rng: &mut impl Rng) -> Self {
        let bin = Self::default_bin();
        let boxes = scatter_boxes(
            rng,
            &bin,
            count,
            |r| Vector3::new(r.random_range(0.03..0.12), r.random_range(0.03..0.12), r.random_range(0.02..0.1)),
            0.005,
            0.01,
        );
        let objects = boxes
            .into_iter()
            .enumerate()
            .map(|(id, shape)| SimObject {
                id,
                shape,
                suction_quality: rng.random_range(0.3..1.0),
                grasp_quality: rng.random_range(0.3..1.0),
            })
            .collect();
        Self { bin, objects }
    }

    pub fn to_scene(&self) -> Scene {
        let mut s = Scene::empty(self.bin.origin[2]);
        s.boxes = self.objects.iter().map(|o| o.shape).collect();
        s
    }

    /// Index of the object a proposal at `p` touches.
    pub fn target_of(&self, p: &Point3<f64>) -> Option<usize> {
        self.objects.iter().position(|o| {
            let local = o.shape.pose.inverse().apply(p);
            (0..3).all(|a| local[a].abs() <= o.shape.half_extents[a] + CONTACT_SLACK)
        })
    }
}

pub trait ProposalSource {
    fn propose(&self, scene: &SimScene) -> (Vec<SuctionProposal>, Vec<GraspProposal>);
}

pub trait SuccessModel {
    /// Probability that executing `proposal` picks the object it touches.
    fn probability(&self, proposal: &Proposal, scene: &SimScene) -> f64;
}

/// `sigmoid(a * (affordance - b))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogisticSuccess {
    pub a: f64,
    pub b: f64,
}

impl Default for LogisticSuccess {
    fn default() -> Self {
        Self { a: 10.0, b: 0.5 }
    }
}

impl SuccessModel for LogisticSuccess {
    fn probability(&self, proposal: &Proposal, _: &SimScene) -> f64 {
        1.0 / (1.0 + (-self.a * (proposal.affordance() - self.b)).exp())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstantSuccess(pub f64);

impl SuccessModel for ConstantSuccess {
    fn probability(&self, _: &Proposal, _: &SimScene) -> f64 {
        self.0
    }
}

/// Analytic proposals straight from the box geometry: a grid of top-face
/// suction points, side-face suction on tall boxes and grasps across every
/// box axis that fits in the gripper.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxFaceSource {
    pub spacing: f64,
    pub gripper: GripperParams,
    pub down_angle: f64,
}

impl Default for BoxFaceSource {
    fn default() -> Self {
        Self {
            spacing: 0.01,
            gripper: GripperParams::default(),
            down_angle: DEFAULT_DOWN_ANGLE_DEG.to_radians(),
        }
    }
}

impl ProposalSource for BoxFaceSource {
    fn propose(&self, scene: &SimScene) -> (Vec<SuctionProposal>, Vec<GraspProposal>) {
        let mut suction = Vec::new();
        let mut grasp = Vec::new();
        for o in &scene.objects {
            let b = &o.shape;
            let h = b.half_extents;
            let up = b.pose.apply_vector(&Vector3::z());
            let inset = 0.005;
            let steps = |half: f64| (((2.0 * (half - inset)) / self.spacing).floor().max(0.0) as usize) + 1;
            let (nu, nv) = (steps(h.x), steps(h.y));
            for i in 0..nu {
                for j in 0..nv {
                    let u = if nu == 1 { 0.0 } else { -h.x + inset + i as f64 * self.spacing };
                    let v = if nv == 1 { 0.0 } else { -h.y + inset + j as f64 * self.spacing };
                    let edge = (h.x - u.abs()).min(h.y - v.abs());
                    let point = b.pose.apply(&Point3::new(u, v, h.z));
                    suction.push(SuctionProposal {
                        point,
                        normal: up,
                        affordance: o.suction_quality * (0.5 + 0.5 * (edge / 0.03).min(1.0)),
                        primitive: suction_kind(&up, self.down_angle),
                        point_index: suction.len(),
                        source: None,
                    });
                }
            }
            if 2.0 * h.z >= 0.06 {
                for (axis, sign) in [(0usize, 1.0), (0, -1.0), (1, 1.0), (1, -1.0)] {
                    let mut local = Vector3::zeros();
                    local[axis] = sign * h[axis];
                    let normal = b.pose.apply_vector(&(local / h[axis]));
                    suction.push(SuctionProposal {
                        point: b.pose.apply(&Point3::from(local)),
                        normal,
                        affordance: 0.4 * o.suction_quality,
                        primitive: suction_kind(&normal, self.down_angle),
                        point_index: suction.len(),
                        source: None,
                    });
                }
            }
            for axis in 0..2 {
                let extent = 2.0 * h[axis];
                if extent > self.gripper.max_opening || 2.0 * h.z < self.gripper.finger_clearance {
                    continue;
                }
                let dir = b.pose.apply_vector(&(if axis == 0 { Vector3::x() } else { Vector3::y() }));
                let angle = dir.y.atan2(dir.x).rem_euclid(std::f64::consts::PI);
                let other = 1 - axis;
                for offset in [-0.015f64, 0.0, 0.015] {
                    if offset.abs() > h[other] - inset {
                        continue;
                    }
                    let mut local = Vector3::new(0.0, 0.0, h.z);
                    local[other] = offset;
                    let midpoint = b.pose.apply(&Point3::from(local));
                    let primitive = if scene.bin.wall_distance(midpoint.x, midpoint.y) < scene.bin.wall_margin {
                        PrimitiveKind::FlushGrasp
                    } else {
                        PrimitiveKind::GraspDown
                    };
                    grasp.push(GraspProposal {
                        midpoint,
                        angle,
                        width: (extent + self.gripper.width_clearance).min(self.gripper.max_opening),
                        affordance: o.grasp_quality * (1.0 - extent / (2.0 * self.gripper.max_opening)),
                        primitive,
                        row: 0,
                        col: 0,
                        angle_index: 0,
                    });
                }
            }
        }
        (suction, grasp)
    }
}

fn suction_kind(normal: &Vector3<f64>, down_angle: f64) -> PrimitiveKind {
    if normal.z >= down_angle.cos() {
        PrimitiveKind::SuctionDown
    } else {
        PrimitiveKind::SuctionSide
    }
}

/// The full perception path: render an orthographic heightmap, run both
/// geometric baselines on it and turn the maps into proposals.
#[derive(Debug, Clone, PartialEq)]
pub struct HeightmapSource {
    pub resolution: f64,
    pub rotations: usize,
    pub gripper: GripperParams,
    pub suction: SuctionParams,
    pub down_angle: f64,
    /// Columns lower than this count as empty bin floor (m).
    pub floor_tolerance: f64,
}

impl Default for HeightmapSource {
    fn default() -> Self {
        Self {
            resolution: 0.004,
            rotations: 16,
            gripper: GripperParams::default(),
            suction: SuctionParams::default(),
            down_angle: DEFAULT_DOWN_ANGLE_DEG.to_radians(),
            floor_tolerance: 0.005,
        }
    }
}

impl ProposalSource for HeightmapSource {
    fn propose(&self, scene: &SimScene) -> (Vec<SuctionProposal>, Vec<GraspProposal>) {
        let hm = scene.to_scene().render_heightmap(scene.bin, self.resolution);
        let fg: Grid<bool> = hm.height.map(|&h| h > self.floor_tolerance);
        let mut pts = Vec::new();
        for (r, c, &f) in fg.indexed() {
            if f {
                pts.push(hm.pixel_to_world(r, c).expect("in bounds"));
            }
        }
        let mut suction = Vec::new();
        if !pts.is_empty() {
            let o = scene.bin.origin_point();
            let eye = o + Vector3::new(scene.bin.x_extent / 2.0, scene.bin.y_extent / 2.0, 1.0);
            let cloud = PointCloud::from_points(pts, eye);
            let radius = self.suction.window_radius.max(2.5 * self.resolution);
            if let Ok(cloud) = estimate_normals(&cloud, radius) {
                let params = SuctionParams { window_radius: radius, ..self.suction };
                if let Ok(aff) = suction_baseline(&cloud, params) {
                    let all = vec![true; cloud.len()];
                    suction = make_suction_proposals(&cloud, &aff, &all, self.down_angle).unwrap_or_default();
                }
            }
        }
        let grasp = grasp_baseline(&hm, &RotationSet::new(self.rotations), self.gripper)
            .and_then(|maps| make_grasp_proposals(&hm, &maps, Some(&fg), self.gripper))
            .unwrap_or_default();
        (suction, grasp)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EpisodeParams {
    pub time_limit: f64,
    /// Seconds charged per attempt.
    pub attempt_duration: f64,
    /// Seconds charged per re-observation.
    pub observe_duration: f64,
    /// Proposals tried in quick succession per planning step.
    pub speed_pick: usize,
}

impl Default for EpisodeParams {
    fn default() -> Self {
        Self {
            time_limit: 900.0,
            attempt_duration: 20.0,
            observe_duration: 5.0,
            speed_pick: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    /// Everything was suppressed; the scene is observed again.
    Reobserve,
    /// Picked object lowered into storage until contact.
    GuardedPlace,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EndReason {
    EmptyBin,
    TimeLimit,
    NoProposals,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LogEntry {
    Header {
        seed: u64,
        config: PlannerConfig,
        params: EpisodeParams,
        bin: BinGeometry,
        objects: Vec<SimObject>,
    },
    Attempt {
        #[serde(flatten)]
        record: AttemptRecord,
        affordance: f64,
        object: Option<usize>,
    },
    Event {
        time: f64,
        kind: EventKind,
        scene_version: u64,
        object: Option<usize>,
    },
    End {
        time: f64,
        reason: EndReason,
        picked: usize,
        attempts: usize,
    },
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EpisodeLog {
    pub entries: Vec<LogEntry>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub attempts: usize,
    pub picked: usize,
    pub suction_attempts: usize,
    pub suction_successes: usize,
    pub grasp_attempts: usize,
    pub grasp_successes: usize,
    pub end_time: f64,
    pub reason: Option<EndReason>,
}

impl EpisodeSummary {
    pub fn suction_rate(&self) -> Option<f64> {
        (self.suction_attempts > 0).then(|| self.suction_successes as f64 / self.suction_attempts as f64)
    }

    pub fn grasp_rate(&self) -> Option<f64> {
        (self.grasp_attempts > 0).then(|| self.grasp_successes as f64 / self.grasp_attempts as f64)
    }
}

impl EpisodeLog {
    pub fn records(&self) -> Vec<AttemptRecord> {
        self.entries
            .iter()
            .filter_map(|e| match e {
                LogEntry::Attempt { record, .. } => Some(*record),
                _ => None,
            })
            .collect()
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&serde_json::to_string(e).expect("log entries serialize"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self, serde_json::Error> {
        let entries = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str)
            .collect::<Result<_, _>>()?;
        Ok(Self { entries })
    }

    pub fn summary(&self) -> EpisodeSummary {
        let mut s = EpisodeSummary::default();
        for e in &self.entries {
            match e {
                LogEntry::Attempt { record, .. } => {
                    s.attempts += 1;
                    let (n, k) = if record.primitive.is_suction() {
                        (&mut s.suction_attempts, &mut s.suction_successes)
                    } else {
                        (&mut s.grasp_attempts, &mut s.grasp_successes)
                    };
                    *n += 1;
                    if record.success {
                        *k += 1;
                        s.picked += 1;
                    }
                }
                LogEntry::End { time, reason, .. } => {
                    s.end_time = *time;
                    s.reason = Some(*reason);
                }
                _ => {}
            }
        }
        s
    }
}

/// Runs the closed loop observe, propose, select, execute until the bin is
/// empty, time runs out or nothing selectable remains after re-observing.
pub fn run_stow_episode(
    mut scene: SimScene,
    source: &dyn ProposalSource,
    model: &dyn SuccessModel,
    cfg: &PlannerConfig,
    params: EpisodeParams,
    seed: u64,
) -> EpisodeLog {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = PlannerState::new();
    let mut log = EpisodeLog::default();
    log.entries.push(LogEntry::Header {
        seed,
        config: cfg.clone(),
        params,
        bin: scene.bin,
        objects: scene.objects.clone(),
    });
    let mut picked = 0;
    let mut attempts = 0;
    let mut just_reobserved = false;
    let reason = loop {
        if scene.objects.is_empty() {
            break EndReason::EmptyBin;
        }
        if state.clock >= params.time_limit {
            break EndReason::TimeLimit;
        }
        let batch = plan_batch(source, &scene, &state, cfg, params);
        if batch.is_empty() {
            if just_reobserved {
                break EndReason::NoProposals;
            }
            state.reobserve();
            log.entries.push(LogEntry::Event {
                time: state.clock,
                kind: EventKind::Reobserve,
                scene_version: state.scene_version,
                object: None,
            });
            state.advance(params.observe_duration);
            just_reobserved = true;
            continue;
        }
        just_reobserved = false;
        for p in batch {
            if state.clock >= params.time_limit {
                break;
            }
            if is_suppressed(&p.position(), p.primitive(), &state, cfg) {
                continue;
            }
            let target = scene.target_of(&p.position());
            let prob = target.map_or(0.0, |_| model.probability(&p, &scene).clamp(0.0, 1.0));
            let success = rng.random::<f64>() < prob;
            let record = state.record(p.primitive(), p.position(), success);
            attempts += 1;
            let object = target.map(|i| scene.objects[i].id);
            log.entries.push(LogEntry::Attempt {
                record,
                affordance: p.affordance(),
                object,
            });
            state.advance(params.attempt_duration);
            if let (true, Some(i)) = (success, target) {
                scene.objects.remove(i);
                picked += 1;
                log.entries.push(LogEntry::Event {
                    time: state.clock,
                    kind: EventKind::GuardedPlace,
                    scene_version: state.scene_version,
                    object,
                });
                break;
            }
        }
    };
    log.entries.push(LogEntry::End {
        time: state.clock,
        reason,
        picked,
        attempts,
    });
    log
}

fn plan_batch(
    source: &dyn ProposalSource,
    scene: &SimScene,
    state: &PlannerState,
    cfg: &PlannerConfig,
    params: EpisodeParams,
) -> Vec<Proposal> {
    let (s, g) = source.propose(scene);
    let all: Vec<Proposal> = s.into_iter().map(Proposal::from).chain(g.into_iter().map(Proposal::from)).collect();
    if params.speed_pick > 1 {
        speed_pick_batch(&all, state, cfg, params.speed_pick)
    } else {
        select_from(&all, state, cfg).into_iter().collect()
    }
}

/// Pairs `(earlier, later)` of attempts where the later one repeats a failed
/// same-kind attempt within `radius` in the same scene version.
pub fn check_suppression(records: &[AttemptRecord], radius: f64) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for (j, b) in records.iter().enumerate() {
        for (i, a) in records[..j].iter().enumerate() {
            if !a.success
                && a.primitive == b.primitive
                && a.scene_version == b.scene_version
                && (a.position - b.position).norm() <= radius
            {
                out.push((i, j));
            }
        }
    }
    out
}

#[derive(Debug, Error, PartialEq)]
pub enum ReplayError {
    #[error("log has no header")]
    MissingHeader,
    #[error("entry {index}: logged {logged}, planner chose {replayed}")]
    Mismatch { index: usize, logged: String, replayed: String },
}

/// Re-derives every decision of a logged episode with the planner, taking the
/// outcomes from the log. Returns the number of attempts checked.
pub fn replay_episode(log: &EpisodeLog, source: &dyn ProposalSource) -> Result<usize, ReplayError> {
    let Some(LogEntry::Header { config, params, bin, objects, .. }) = log.entries.first() else {
        return Err(ReplayError::MissingHeader);
    };
    let mut scene = SimScene {
        bin: *bin,
        objects: objects.clone(),
    };
    let mut state = PlannerState::new();
    let mut queue: VecDeque<Proposal> = VecDeque::new();
    let mut checked = 0;
    let mismatch = |index: usize, logged: String, replayed: String| ReplayError::Mismatch { index, logged, replayed };
    for (index, entry) in log.entries.iter().enumerate().skip(1) {
        match entry {
            LogEntry::Attempt { record, .. } => {
                if queue.is_empty() {
                    queue = plan_batch(source, &scene, &state, config, *params).into();
                }
                let next = loop {
                    match queue.pop_front() {
                        Some(p) if is_suppressed(&p.position(), p.primitive(), &state, config) => continue,
                        other => break other,
                    }
                };
                let Some(p) = next else {
                    return Err(mismatch(index, format!("{:?}", record), "nothing".into()));
                };
                if p.primitive() != record.primitive
                    || p.position() != record.position
                    || state.clock != record.time
                    || state.scene_version != record.scene_version
                {
                    return Err(mismatch(index, format!("{:?}", record), format!("{:?} at {:?}", p.primitive(), p.position())));
                }
                state.record(record.primitive, record.position, record.success);
                state.advance(params.attempt_duration);
                if record.success {
                    if let Some(i) = scene.target_of(&record.position) {
                        scene.objects.remove(i);
                    }
                    queue.clear();
                }
                checked += 1;
            }
            LogEntry::Event { kind: EventKind::Reobserve, .. } => {
                if !queue.is_empty() || !plan_batch(source, &scene, &state, config, *params).is_empty() {
                    return Err(mismatch(index, "reobserve".into(), "a selectable proposal".into()));
                }
                state.reobserve();
                state.advance(params.observe_duration);
            }
            LogEntry::Event { .. } | LogEntry::End { .. } | LogEntry::Header { .. } => {}
        }
    }
    Ok(checked)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scene(n: usize, seed: u64) -> SimScene {
        SimScene::random(n, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    #[test]
    fn perfect_executor_picks_everything() {
        let s = scene(5, 1);
        assert_eq!(s.objects.len(), 5);
        let log = run_stow_episode(s, &BoxFaceSource::default(), &ConstantSuccess(1.0), &PlannerConfig::default(), EpisodeParams::default(), 7);
        let sum = log.summary();
        assert_eq!(sum.attempts, 5);
        assert_eq!(sum.picked, 5);
        assert_eq!(sum.reason, Some(EndReason::EmptyBin));
    }

    #[test]
    fn hopeless_executor_never_repeats_within_radius() {
        let cfg = PlannerConfig::default();
        let params = EpisodeParams { time_limit: 3000.0, ..EpisodeParams::default() };
        let log = run_stow_episode(scene(4, 2), &BoxFaceSource::default(), &ConstantSuccess(0.0), &cfg, params, 3);
        let recs = log.records();
        assert!(recs.len() > 50);
        assert!(recs.iter().all(|r| !r.success));
        assert!(check_suppression(&recs, cfg.suppression_radius).is_empty());
        assert_eq!(log.summary().reason, Some(EndReason::TimeLimit));
        assert!(log.entries.iter().any(|e| matches!(e, LogEntry::Event { kind: EventKind::Reobserve, .. })));
    }

    #[test]
    fn fixed_seed_logs_identical_and_replayable() {
        let cfg = PlannerConfig::default();
        let run = || {
            run_stow_episode(scene(6, 4), &BoxFaceSource::default(), &LogisticSuccess::default(), &cfg, EpisodeParams::default(), 11)
                .to_jsonl()
        };
        let a = run();
        assert_eq!(a, run());
        let log = EpisodeLog::from_jsonl(&a).unwrap();
        assert_eq!(log.to_jsonl(), a);
        let n = replay_episode(&log, &BoxFaceSource::default()).unwrap();
        assert_eq!(n, log.summary().attempts);
    }

    #[test]
    fn speed_picking_replays() {
        let cfg = PlannerConfig::default();
        let params = EpisodeParams { speed_pick: 3, ..EpisodeParams::default() };
        let log = run_stow_episode(scene(6, 5), &BoxFaceSource::default(), &LogisticSuccess::default(), &cfg, params, 2);
        replay_episode(&log, &BoxFaceSource::default()).unwrap();
        assert!(check_suppression(&log.records(), cfg.suppression_radius).is_empty());
    }

    #[test]
    fn tampered_log_fails_replay() {
        let cfg = PlannerConfig::default();
        let mut log = run_stow_episode(scene(3, 6), &BoxFaceSource::default(), &ConstantSuccess(0.0), &cfg, EpisodeParams { time_limit: 200.0, ..EpisodeParams::default() }, 1);
        if let Some(LogEntry::Attempt { record, .. }) = log.entries.get_mut(2) {
            record.position.x += 0.05;
        }
        assert!(matches!(replay_episode(&log, &BoxFaceSource::default()), Err(ReplayError::Mismatch { .. })));
    }

    #[test]
    fn heightmap_source_proposes_on_objects() {
        let s = scene(3, 8);
        let src = HeightmapSource::default();
        let (suction, grasp) = src.propose(&s);
        assert!(!suction.is_empty());
        let best = suction.first().unwrap();
        assert!(s.target_of(&best.point).is_some());
        assert!(grasp.iter().all(|g| g.affordance > 0.0));
    }

    #[test]
    fn logistic_model_midpoint() {
        let s = scene(1, 9);
        let p = Proposal::from(BoxFaceSource::default().propose(&s).0[0]);
        let mut q = p;
        q.set_affordance(0.5);
        assert!((LogisticSuccess::default().probability(&q, &s) - 0.5).abs() < 1e-12);
    }
}
