//! Tracking of objects placed one at a time into a storage bin: frame
//! differencing to find the new surfaces, ICP against a model cloud for the
//! pose, and per-object records with world-frame bounding boxes.

use std::collections::VecDeque;

use nalgebra::{Point3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::affordance::Proposal;
use crate::geometry::{
    background_subtract, icp_register_with, project_to_cloud, BackgroundParams, GeometryError, IcpInit, IcpParams,
    PointCloud, RgbdFrame, RigidTransform, MIN_ICP_POINTS,
};
use crate::grid::{Grid, Mask};
use crate::heightmap::Heightmap;

/// Length scale of the proposal decay away from the target footprint (m).
pub const PRIORITY_DECAY: f64 = 0.05;

#[derive(Debug, Error)]
pub enum TrackerError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("model cloud needs at least {MIN_ICP_POINTS} points, got {0}")]
    TooFewModelPoints(usize),
    #[error("object id {0:?} is already tracked")]
    DuplicateId(String),
    #[error("no new surfaces to register against")]
    EmptySurfaces,
    #[error("unknown target object {0:?}")]
    UnknownTarget(String),
    #[error("no foreground points of the held object")]
    EmptyForeground,
    #[error("invalid views: {0}")]
    Views(String),
}

/// Axis-aligned box in world coordinates (m).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Aabb {
    /// Tight box around `points`; `None` when empty.
    pub fn from_points<'a>(points: impl IntoIterator<Item = &'a Point3<f64>>) -> Option<Self> {
        let mut it = points.into_iter();
        let first = it.next()?;
        let mut b = Aabb { min: first.coords.into(), max: first.coords.into() };
        for p in it {
            for k in 0..3 {
                b.min[k] = b.min[k].min(p[k]);
                b.max[k] = b.max[k].max(p[k]);
            }
        }
        Some(b)
    }

    pub fn dims(&self) -> [f64; 3] {
        [0, 1, 2].map(|k| self.max[k] - self.min[k])
    }

    pub fn center(&self) -> Point3<f64> {
        Point3::from([0, 1, 2].map(|k| (self.min[k] + self.max[k]) / 2.0))
    }

    /// Distance in the xy-plane from `(x, y)` to the box footprint; 0 inside.
    pub fn footprint_distance(&self, x: f64, y: f64) -> f64 {
        let dx = (self.min[0] - x).max(x - self.max[0]).max(0.0);
        let dy = (self.min[1] - y).max(y - self.max[1]).max(0.0);
        dx.hypot(dy)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackedObject {
    pub object_id: String,
    /// Model frame to world.
    pub pose: RigidTransform,
    pub aabb: Aabb,
    pub placed_time: f64,
    /// Height above the bin floor of whatever the object rests on (m).
    pub support_surface_height: f64,
    /// Set when ICP failed and only the centroid alignment is known.
    pub low_confidence: bool,
}

#[derive(Debug, Clone, Default)]
pub struct StorageState {
    pub objects: Vec<TrackedObject>,
    pub last_frames: Vec<RgbdFrame>,
}

impl StorageState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, object_id: &str) -> Option<&TrackedObject> {
        self.objects.iter().find(|o| o.object_id == object_id)
    }

    /// Stores `frames` as the latest observation and returns the previous one.
    pub fn record_observation(&mut self, frames: Vec<RgbdFrame>) -> Vec<RgbdFrame> {
        std::mem::replace(&mut self.last_frames, frames)
    }
}

/// Result of differencing two frames.
#[derive(Debug, Clone)]
pub struct Localization {
    /// World points of the largest changed component.
    pub cloud: PointCloud,
    /// Pixels of that component.
    pub mask: Mask,
    /// Number of changed components found; more than one breaks the
    /// one-object-per-step assumption.
    pub components: usize,
}

impl Localization {
    /// True when no change above threshold was found.
    pub fn is_empty(&self) -> bool {
        self.cloud.is_empty()
    }

    pub fn ambiguous(&self) -> bool {
        self.components > 1
    }
}

/// 8-connected components of `mask`, as a label grid (0 = background) and
/// the pixel count of each label starting at label 1.
pub fn connected_components(mask: &Mask) -> (Grid<u32>, Vec<usize>) {
    let (rows, cols) = mask.dims();
    let mut labels = Grid::new(rows, cols, 0u32);
    let mut sizes = Vec::new();
    let mut queue = VecDeque::new();
    for (r0, c0, &on) in mask.indexed() {
        if !on || labels[(r0, c0)] != 0 {
            continue;
        }
        let label = sizes.len() as u32 + 1;
        let mut size = 0;
        labels[(r0, c0)] = label;
        queue.push_back((r0, c0));
        while let Some((r, c)) = queue.pop_front() {
            size += 1;
            for dr in -1i64..=1 {
                for dc in -1i64..=1 {
                    let (nr, nc) = (r as i64 + dr, c as i64 + dc);
                    if mask.get_signed(nr, nc) == Some(&true) && labels[(nr as usize, nc as usize)] == 0 {
                        labels[(nr as usize, nc as usize)] = label;
                        queue.push_back((nr as usize, nc as usize));
                    }
                }
            }
        }
        sizes.push(size);
    }
    (labels, sizes)
}

/// Surfaces of a newly placed object: pixels that changed between `before`
/// and `after` and have depth in `after`, reduced to the largest connected
/// component and projected to world coordinates.
pub fn diff_localize(before: &RgbdFrame, after: &RgbdFrame, params: BackgroundParams) -> Result<Localization, TrackerError> {
    let changed = background_subtract(after, before, params)?;
    let valid = Grid::from_fn(changed.rows(), changed.cols(), |r, c| changed[(r, c)] && after.depth[(r, c)] > 0.0);
    let (labels, sizes) = connected_components(&valid);
    let components = sizes.len();
    if components > 1 {
        log::warn!("{components} changed regions between frames; keeping the largest");
    }
    let keep = sizes.iter().enumerate().max_by_key(|&(i, &s)| (s, std::cmp::Reverse(i))).map(|(i, _)| i as u32 + 1);
    let mask = labels.map(|&l| Some(l) == keep);
    let full = project_to_cloud(after)?;
    let cloud = full.filter(|i| {
        let s = full.sources[i];
        mask[(s.row as usize, s.col as usize)]
    });
    Ok(Localization { cloud, mask, components })
}

/// Aligns `model` (model frame) to `surfaces` (world) and appends the object
/// to `state`.
///
/// ICP registers the observed surfaces onto the model, starting from the
/// centroid alignment, and the pose is the inverse of that transform. When
/// ICP fails the pose is the centroid translation and the record is flagged
/// low-confidence. `support` is the heightmap observed before placement.
pub fn register_object<'s>(
    state: &'s mut StorageState,
    object_id: &str,
    model: &PointCloud,
    surfaces: &PointCloud,
    support: Option<&Heightmap>,
    placed_time: f64,
) -> Result<&'s TrackedObject, TrackerError> {
    if model.len() < MIN_ICP_POINTS {
        return Err(TrackerError::TooFewModelPoints(model.len()));
    }
    if state.get(object_id).is_some() {
        return Err(TrackerError::DuplicateId(object_id.to_string()));
    }
    let (Some(mc), Some(sc)) = (model.centroid(), surfaces.centroid()) else {
        return Err(TrackerError::EmptySurfaces);
    };
    let (pose, low_confidence) = match best_yaw_registration(&surfaces.points, &model.points, sc, mc) {
        Ok(t) => (t.inverse(), false),
        Err(e) => {
            log::warn!("ICP failed for {object_id:?} ({e}); storing centroid pose");
            (RigidTransform::from_translation(sc - mc), true)
        }
    };
    let aabb = Aabb::from_points(&model.points.iter().map(|p| pose.apply(p)).collect::<Vec<_>>()).expect("model is non-empty");
    let support_surface_height = support.map_or(0.0, |hm| footprint_max_height(hm, &aabb));
    state.objects.push(TrackedObject {
        object_id: object_id.to_string(),
        pose,
        aabb,
        placed_time,
        support_surface_height,
        low_confidence,
    });
    Ok(state.objects.last().expect("just pushed"))
}

/// Yaw hypotheses tried around the centroid alignment.
pub const YAW_HYPOTHESES: usize = 12;

/// Registers `source` onto `target` from the centroid alignment combined
/// with each of [`YAW_HYPOTHESES`] rotations about +z, keeping the lowest
/// RMS. Fails only if every start fails.
fn best_yaw_registration(
    source: &[Point3<f64>],
    target: &[Point3<f64>],
    source_centroid: Point3<f64>,
    target_centroid: Point3<f64>,
) -> Result<RigidTransform, GeometryError> {
    let mut best: Option<(f64, RigidTransform)> = None;
    let mut last_err = None;
    for k in 0..YAW_HYPOTHESES {
        let yaw = std::f64::consts::TAU * k as f64 / YAW_HYPOTHESES as f64;
        let spin = RigidTransform::from_axis_angle(&Vector3::z(), yaw, Vector3::zeros());
        let start = RigidTransform::from_translation(target_centroid.coords)
            .compose(&spin)
            .compose(&RigidTransform::from_translation(-source_centroid.coords));
        let params = IcpParams { max_iterations: 200, tolerance: 1e-10, reject_factor: f64::INFINITY, init: IcpInit::Given(start) };
        match icp_register_with(source, target, params) {
            Ok(r) if best.is_none_or(|(rms, _)| r.rms < rms) => best = Some((r.rms, r.transform)),
            Ok(_) => {}
            Err(e) => last_err = Some(e),
        }
    }
    best.map(|(_, t)| t).ok_or_else(|| last_err.expect("at least one hypothesis"))
}

/// Highest known height of `hm` under the xy footprint of `aabb`; 0 when no
/// known pixel lies beneath it.
pub fn footprint_max_height(hm: &Heightmap, aabb: &Aabb) -> f64 {
    let o = hm.bin.origin;
    let res = hm.resolution;
    let mut best: f64 = 0.0;
    for (r, c, &h) in hm.height.indexed() {
        if !hm.known_mask[(r, c)] {
            continue;
        }
        let (x, y) = (o[0] + c as f64 * res, o[1] + r as f64 * res);
        if aabb.footprint_distance(x, y) == 0.0 {
            best = best.max(h);
        }
    }
    best
}

/// Dimensions of the axis-aligned box, in the gripper frame, around the
/// held object.
///
/// The object's pixels in each view are those that differ from the matching
/// empty-gripper view and lie inside the optional region mask.
/// `gripper_pose` maps gripper coordinates to world.
pub fn estimate_grasped_bbox(
    views: &[RgbdFrame],
    empty_views: &[RgbdFrame],
    region: Option<&[Mask]>,
    gripper_pose: &RigidTransform,
    params: BackgroundParams,
) -> Result<Aabb, TrackerError> {
    if views.is_empty() {
        return Err(TrackerError::Views("no views of the held object".into()));
    }
    if empty_views.len() != views.len() || region.is_some_and(|m| m.len() != views.len()) {
        return Err(TrackerError::Views("views, empty views and region masks differ in count".into()));
    }
    let to_gripper = gripper_pose.inverse();
    let mut points = Vec::new();
    for (i, (view, empty)) in views.iter().zip(empty_views).enumerate() {
        let fg = background_subtract(view, empty, params)?;
        let area = region.map(|m| &m[i]);
        if area.is_some_and(|m| m.dims() != fg.dims()) {
            return Err(TrackerError::Views(format!("region mask {i} does not match the view size")));
        }
        let cloud = project_to_cloud(view)?;
        for (p, s) in cloud.points.iter().zip(&cloud.sources) {
            let (r, c) = (s.row as usize, s.col as usize);
            if fg[(r, c)] && area.is_none_or(|m| m[(r, c)]) {
                points.push(to_gripper.apply(p));
            }
        }
    }
    Aabb::from_points(&points).ok_or(TrackerError::EmptyForeground)
}

/// Scales each proposal by `exp(-d / PRIORITY_DECAY)`, where `d` is its xy
/// distance to the target's footprint, then sorts by affordance (stable).
pub fn prioritize_for_target(proposals: &[Proposal], state: &StorageState, target_id: &str) -> Result<Vec<Proposal>, TrackerError> {
    let target = state.get(target_id).ok_or_else(|| TrackerError::UnknownTarget(target_id.to_string()))?;
    let mut out: Vec<Proposal> = proposals
        .iter()
        .map(|p| {
            let pos = p.position();
            let d = target.aabb.footprint_distance(pos.x, pos.y);
            let mut q = *p;
            q.set_affordance(p.affordance() * (-d / PRIORITY_DECAY).exp());
            q
        })
        .collect();
    out.sort_by(|a, b| b.affordance().total_cmp(&a.affordance()));
    Ok(out)
}

/// Model cloud sampled on the surface of a box with the given full extents,
/// centered on the model origin.
pub fn box_model(size: Vector3<f64>, spacing: f64) -> PointCloud {
    let b = crate::synth::SceneBox { pose: RigidTransform::identity(), half_extents: size / 2.0, color: [128; 3] };
    PointCloud::from_points(b.local_surface_points(spacing), Point3::origin())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::affordance::{PrimitiveKind, SuctionProposal};
    use crate::geometry::CameraIntrinsics;
    use crate::heightmap::BinGeometry;
    use crate::synth::{two_view_rig, Scene, SceneBox};
    use std::f64::consts::{E, FRAC_PI_4};

    fn bin() -> BinGeometry {
        BinGeometry { origin: [0.0, 0.0, 0.0], x_extent: 0.3, y_extent: 0.2, wall_margin: 0.02 }
    }

    fn render_both(scene: &Scene) -> Vec<RgbdFrame> {
        two_view_rig(&bin(), 320, 240).iter().map(|(k, p)| scene.render(k, p)).collect()
    }

    /// Distance from `p` to the surface of `b`.
    fn box_surface_distance(b: &SceneBox, p: &Point3<f64>) -> f64 {
        let l = b.pose.inverse().apply(p);
        let h = b.half_extents;
        let outside = Vector3::new((l.x.abs() - h.x).max(0.0), (l.y.abs() - h.y).max(0.0), (l.z.abs() - h.z).max(0.0)).norm();
        if outside > 0.0 {
            outside
        } else {
            (h.x - l.x.abs()).min(h.y - l.y.abs()).min(h.z - l.z.abs())
        }
    }

    #[test]
    fn identical_frames_localize_nothing() {
        let mut scene = Scene::empty(0.0);
        scene.boxes.push(SceneBox::upright(0.1, 0.1, 0.0, Vector3::new(0.05, 0.04, 0.03), 0.3, [200, 40, 40]));
        for f in render_both(&scene) {
            let loc = diff_localize(&f, &f, BackgroundParams::default()).unwrap();
            assert!(loc.is_empty());
            assert_eq!(loc.components, 0);
        }
    }

    #[test]
    fn added_box_surfaces_lie_on_the_box() {
        let before = Scene::empty(0.0);
        let mut after = before.clone();
        let b = SceneBox::upright(0.16, 0.09, 0.0, Vector3::new(0.06, 0.045, 0.04), 0.4, [210, 180, 40]);
        after.boxes.push(b);
        for (f0, f1) in render_both(&before).iter().zip(render_both(&after).iter()) {
            let loc = diff_localize(f0, f1, BackgroundParams::default()).unwrap();
            assert_eq!(loc.components, 1);
            assert!(loc.cloud.len() > 500);
            for p in &loc.cloud.points {
                let (_, _, depth) = f1.project_world(p);
                let pixel = depth / f1.intrinsics.fx;
                assert!(box_surface_distance(&b, p) <= pixel + 1e-6);
            }
        }
    }

    #[test]
    fn two_new_boxes_keep_the_larger() {
        let before = Scene::empty(0.0);
        let mut after = before.clone();
        let big = SceneBox::upright(0.08, 0.1, 0.0, Vector3::new(0.08, 0.07, 0.05), 0.0, [210, 180, 40]);
        let small = SceneBox::upright(0.23, 0.1, 0.0, Vector3::new(0.03, 0.03, 0.03), 0.0, [40, 180, 210]);
        after.boxes.extend([big, small]);
        let (f0, f1) = (&render_both(&before)[0], &render_both(&after)[0]);
        let loc = diff_localize(f0, f1, BackgroundParams::default()).unwrap();
        assert!(loc.ambiguous());
        assert!(loc.cloud.points.iter().all(|p| box_surface_distance(&big, p) < 0.005));
    }

    /// Rotations mapping a box onto itself.
    fn box_symmetries() -> Vec<RigidTransform> {
        let mut out = vec![RigidTransform::identity()];
        for axis in [Vector3::x(), Vector3::y(), Vector3::z()] {
            out.push(RigidTransform::from_axis_angle(&axis, std::f64::consts::PI, Vector3::zeros()));
        }
        out
    }

    fn place(b: SceneBox) -> (PointCloud, Heightmap) {
        let before = Scene::empty(0.0);
        let mut after = before.clone();
        after.boxes.push(b);
        let clouds: Vec<PointCloud> = render_both(&before)
            .iter()
            .zip(render_both(&after).iter())
            .map(|(f0, f1)| diff_localize(f0, f1, BackgroundParams::default()).unwrap().cloud)
            .collect();
        (PointCloud::merge(&clouds), before.render_heightmap(bin(), 0.002))
    }

    #[test]
    fn registration_recovers_placement() {
        let size = Vector3::new(0.06, 0.045, 0.04);
        let b = SceneBox::upright(0.15, 0.1, 0.0, size, 0.35, [210, 180, 40]);
        let (surfaces, hm) = place(b);
        let mut state = StorageState::new();
        let obj = register_object(&mut state, "a", &box_model(size, 0.002), &surfaces, Some(&hm), 1.0).unwrap().clone();
        assert!(!obj.low_confidence);
        let dt = (obj.pose.translation - b.pose.translation).norm();
        let da = box_symmetries().iter().map(|s| obj.pose.compose(s).inverse().compose(&b.pose).angle()).fold(f64::INFINITY, f64::min);
        assert!(dt < 1e-2 && da < 3f64.to_radians(), "dt={dt} da={da}");
        assert!((0..3).all(|k| obj.aabb.min[k] <= obj.aabb.max[k]));
        assert!((obj.aabb.min[2]).abs() < 0.005 && (obj.aabb.max[2] - 0.04).abs() < 0.005);
        assert_eq!(obj.support_surface_height, 0.0);

        // a second object on top of the first one
        let top = SceneBox::upright(0.15, 0.1, 0.04, Vector3::new(0.03, 0.03, 0.02), 0.0, [40, 200, 200]);
        let mut s0 = Scene::empty(0.0);
        s0.boxes.push(b);
        let mut s1 = s0.clone();
        s1.boxes.push(top);
        let clouds: Vec<PointCloud> = render_both(&s0)
            .iter()
            .zip(render_both(&s1).iter())
            .map(|(f0, f1)| diff_localize(f0, f1, BackgroundParams::default()).unwrap().cloud)
            .collect();
        let hm0 = s0.render_heightmap(bin(), 0.002);
        let before = state.objects[0].clone();
        let t = register_object(&mut state, "b", &box_model(top.size(), 0.002), &PointCloud::merge(&clouds), Some(&hm0), 2.0).unwrap();
        assert!((t.support_surface_height - 0.04).abs() < 1e-9);
        assert_eq!(state.objects[0], before);
        assert_eq!(state.objects.len(), 2);
    }

    #[test]
    fn registration_errors() {
        let size = Vector3::new(0.05, 0.04, 0.03);
        let (surfaces, _) = place(SceneBox::upright(0.15, 0.1, 0.0, size, 0.0, [210, 180, 40]));
        let model = box_model(size, 0.004);
        let mut state = StorageState::new();
        register_object(&mut state, "a", &model, &surfaces, None, 0.0).unwrap();
        assert!(matches!(register_object(&mut state, "a", &model, &surfaces, None, 0.0), Err(TrackerError::DuplicateId(_))));
        assert!(matches!(register_object(&mut state, "b", &model, &PointCloud::default(), None, 0.0), Err(TrackerError::EmptySurfaces)));
        let tiny = PointCloud::from_points(model.points[..5].to_vec(), Point3::origin());
        assert!(matches!(register_object(&mut state, "b", &tiny, &surfaces, None, 0.0), Err(TrackerError::TooFewModelPoints(5))));
        let few = PointCloud::from_points(surfaces.points[..4].to_vec(), Point3::origin());
        let obj = register_object(&mut state, "c", &model, &few, None, 0.0).unwrap();
        assert!(obj.low_confidence);
        let c = few.centroid().unwrap();
        assert!((obj.pose.translation - c.coords).norm() < 1e-9);
        assert_eq!(state.objects.len(), 2);
    }

    /// Cameras around and below a held object at `center`, each looking at it.
    fn gripper_views(scene: &Scene, center: Point3<f64>) -> Vec<RgbdFrame> {
        let k = CameraIntrinsics { fx: 600.0, fy: 600.0, cx: 159.5, cy: 119.5, width: 320, height: 240 };
        [(0.3, -0.25, -0.2), (-0.28, 0.27, -0.15), (0.05, 0.02, -0.35)]
            .iter()
            .map(|&(x, y, z)| {
                let eye = center + Vector3::new(x, y, z);
                scene.render(&k, &RigidTransform::look_at(eye, center, Vector3::new(0.0, 0.0, -1.0).cross(&Vector3::new(x, y, 0.0)).normalize()))
            })
            .collect()
    }

    fn held_box_dims(yaw: f64) -> [f64; 3] {
        let gripper = RigidTransform::from_axis_angle(&Vector3::new(0.2, -0.1, 1.0), 0.5, Vector3::new(0.1, 0.1, 0.6));
        let local = RigidTransform::from_axis_angle(&Vector3::z(), yaw, Vector3::zeros());
        let held = SceneBox { pose: gripper.compose(&local), half_extents: Vector3::new(0.025, 0.02, 0.015), color: [220, 120, 30] };
        let empty = Scene::empty(-1.0);
        let mut full = empty.clone();
        full.boxes.push(held);
        let center = Point3::from(gripper.translation);
        let views = gripper_views(&full, center);
        let bare = gripper_views(&empty, center);
        let aabb = estimate_grasped_bbox(&views, &bare, None, &gripper, BackgroundParams::default()).unwrap();
        aabb.dims()
    }

    #[test]
    fn held_box_dimensions() {
        let d = held_box_dims(0.0);
        for (got, want) in d.iter().zip([0.05, 0.04, 0.03]) {
            assert!((got - want).abs() < 0.005, "{d:?}");
        }
        // analytic bounds of the 45 degree rotated footprint
        let r = held_box_dims(FRAC_PI_4);
        let w = (0.05 + 0.04) * FRAC_PI_4.cos();
        for (got, want) in r.iter().zip([w, w, 0.03]) {
            assert!((got - want).abs() < 0.005, "{r:?}");
        }
    }

    #[test]
    fn empty_gripper_is_an_error() {
        let empty = Scene::empty(-1.0);
        let views = gripper_views(&empty, Point3::new(0.1, 0.1, 0.6));
        let err = estimate_grasped_bbox(&views, &views, None, &RigidTransform::identity(), BackgroundParams::default());
        assert!(matches!(err, Err(TrackerError::EmptyForeground)));
        assert!(matches!(estimate_grasped_bbox(&[], &[], None, &RigidTransform::identity(), BackgroundParams::default()), Err(TrackerError::Views(_))));
    }

    fn suction_at(x: f64, y: f64, a: f64) -> Proposal {
        Proposal::Suction(SuctionProposal {
            point: Point3::new(x, y, 0.05),
            normal: Vector3::z(),
            affordance: a,
            primitive: PrimitiveKind::SuctionDown,
            point_index: 0,
            source: None,
        })
    }

    fn state_with_target() -> StorageState {
        let mut s = StorageState::new();
        s.objects.push(TrackedObject {
            object_id: "t".into(),
            pose: RigidTransform::identity(),
            aabb: Aabb { min: [0.1, 0.1, 0.0], max: [0.15, 0.12, 0.03] },
            placed_time: 0.0,
            support_surface_height: 0.0,
            low_confidence: false,
        });
        s
    }

    #[test]
    fn prioritization_decays_with_distance() {
        let s = state_with_target();
        let out = prioritize_for_target(&[suction_at(0.25, 0.11, 0.9), suction_at(0.12, 0.11, 0.5)], &s, "t").unwrap();
        assert_eq!(out[0].affordance(), 0.5);
        assert!((out[1].affordance() - 0.9 * E.powi(-2)).abs() < 1e-12);
        assert!(prioritize_for_target(&[], &s, "t").unwrap().is_empty());
        assert!(matches!(prioritize_for_target(&[], &s, "x"), Err(TrackerError::UnknownTarget(_))));
    }

    #[test]
    fn equal_distances_keep_order() {
        let s = state_with_target();
        let ps: Vec<Proposal> = (0..6)
            .map(|i| {
                let y = if i % 2 == 0 { 0.105 } else { 0.115 };
                let mut p = suction_at(0.2, y, 0.7);
                if let Proposal::Suction(q) = &mut p {
                    q.point_index = i;
                }
                p
            })
            .collect();
        let out = prioritize_for_target(&ps, &s, "t").unwrap();
        let ids: Vec<usize> = out.iter().map(|p| match p { Proposal::Suction(q) => q.point_index, _ => unreachable!() }).collect();
        assert_eq!(ids, (0..6).collect::<Vec<_>>());
    }

    #[test]
    fn components_are_eight_connected() {
        let m = Grid::from_fn(4, 4, |r, c| (r == c) || (r == 0 && c == 3));
        let (_, sizes) = connected_components(&m);
        assert_eq!(sizes, vec![4, 1]);
    }
}
