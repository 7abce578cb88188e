//! Rendered bin scenes with analytic suction and grasp labels.
//!
//! Suction: box faces are positive, spheres negative, the floor neither.
//! Grasps: for each horizontal box axis, labels run along the box
//! centerline with the closing axis along that axis; positive when the
//! extent fits the gripper opening, negative otherwise. Spheres that fit get
//! positive labels at their center for every rotation angle.

use std::path::Path;

use nalgebra::{Point3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{write_labeled_scene, EvalError, GraspLabel, LabeledScene, Polarity, SuctionLabel};
use crate::affordance::pipeline::SceneObservation;
use crate::affordance::GripperParams;
use crate::grid::Grid;
use crate::heightmap::{BinGeometry, Heightmap, RotationSet};
use crate::synth::{scatter_boxes, two_view_rig, Scene, SceneSphere, Surface};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LabeledSceneParams {
    pub width: usize,
    pub height: usize,
    pub resolution: f64,
    pub bin: BinGeometry,
    pub min_boxes: usize,
    pub max_boxes: usize,
    pub spheres: usize,
    /// Horizontal box side range (m).
    pub side: (f64, f64),
    pub box_height: (f64, f64),
    pub sphere_radius: (f64, f64),
    /// Free space between object footprints (m).
    pub gap: f64,
    pub with_empty: bool,
    pub gripper: GripperParams,
    pub rotations: usize,
}

impl Default for LabeledSceneParams {
    fn default() -> Self {
        Self {
            width: 320,
            height: 240,
            resolution: 0.002,
            bin: BinGeometry { origin: [0.0, 0.0, 0.0], x_extent: 0.3, y_extent: 0.2, wall_margin: 0.02 },
            min_boxes: 2,
            max_boxes: 4,
            spheres: 1,
            side: (0.025, 0.1),
            box_height: (0.03, 0.07),
            sphere_radius: (0.018, 0.028),
            gap: 0.05,
            with_empty: true,
            gripper: GripperParams::default(),
            rotations: 16,
        }
    }
}

fn range(rng: &mut (impl Rng + ?Sized), (lo, hi): (f64, f64)) -> f64 {
    if hi > lo { rng.random_range(lo..hi) } else { lo }
}

pub fn random_scene(params: &LabeledSceneParams, rng: &mut ChaCha8Rng) -> Scene {
    let bin = params.bin;
    let n_boxes = rng.random_range(params.min_boxes..=params.max_boxes.max(params.min_boxes));
    let (side, tall, radius) = (params.side, params.box_height, params.sphere_radius);
    let mut placed = scatter_boxes(
        rng,
        &bin,
        n_boxes + params.spheres,
        |r| Vector3::new(range(r, side), range(r, side), range(r, tall)),
        0.01,
        params.gap,
    );
    let mut scene = Scene::empty(bin.origin[2]);
    let n_spheres = placed.len().saturating_sub(n_boxes);
    for b in placed.drain(..n_spheres) {
        let r = range(rng, radius);
        let c = b.pose.translation;
        scene.spheres.push(SceneSphere { center: Point3::new(c.x, c.y, bin.origin[2] + r), radius: r, color: b.color });
    }
    scene.boxes = placed;
    scene
}

/// Analytic grasp labels for `scene` on a heightmap of `bin` at `resolution`.
pub fn grasp_labels_for(scene: &Scene, bin: BinGeometry, resolution: f64, gripper: &GripperParams, rotations: usize) -> Vec<GraspLabel> {
    let hm = Heightmap::empty(bin, resolution).expect("valid bin");
    let mut out = Vec::new();
    let mut push = |p: Point3<f64>, angle: f64, polarity: Polarity| {
        if let Some((r, c)) = hm.world_to_pixel(p.x, p.y) {
            let l = GraspLabel::new(r, c, angle, polarity);
            if !out.contains(&l) {
                out.push(l);
            }
        }
    };
    for b in &scene.boxes {
        let size = b.size();
        if size.z < gripper.finger_clearance {
            continue;
        }
        let center = Point3::from(b.pose.translation);
        for axis in 0..2 {
            let other = 1 - axis;
            let u = b.pose.rotation.column(axis).into_owned();
            let v = b.pose.rotation.column(other).into_owned();
            let angle = u.y.atan2(u.x);
            let polarity = if size[axis] <= gripper.max_opening { Polarity::Positive } else { Polarity::Negative };
            let half = size[other] / 2.0 - gripper.finger_breadth / 2.0 - resolution;
            let steps = (half / resolution).floor().max(0.0) as i64;
            for k in -steps..=steps {
                push(center + v * (k as f64 * resolution), angle, polarity);
            }
        }
    }
    for s in &scene.spheres {
        if 2.0 * s.radius <= gripper.max_opening && 2.0 * s.radius >= gripper.finger_clearance {
            for angle in RotationSet::new(rotations).angles {
                push(s.center, angle, Polarity::Positive);
            }
        }
    }
    out
}

pub fn synthetic_labeled_scene(name: &str, params: &LabeledSceneParams, seed: u64) -> (Scene, LabeledScene) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scene = random_scene(params, &mut rng);
    let rig = two_view_rig(&params.bin, params.width, params.height);
    let mut frames = Vec::new();
    let mut suction_masks = Vec::new();
    for (k, pose) in &rig {
        let (frame, hits) = scene.render_with_surfaces(k, pose);
        suction_masks.push(Grid::from_fn(hits.rows(), hits.cols(), |r, c| match hits[(r, c)].map(|h| h.surface) {
            Some(Surface::BoxFace { .. }) => SuctionLabel::Positive,
            Some(Surface::Sphere(_)) => SuctionLabel::Negative,
            _ => SuctionLabel::Neither,
        }));
        frames.push(frame);
    }
    let empty = params.with_empty.then(|| {
        let bare = scene.without_objects();
        rig.iter().map(|(k, p)| bare.render(k, p)).collect()
    });
    let grasp_labels = grasp_labels_for(&scene, params.bin, params.resolution, &params.gripper, params.rotations);
    let observation = SceneObservation { frames, empty, bin: params.bin, resolution: params.resolution };
    let stems = (0..rig.len()).map(|i| format!("{i:03}")).collect();
    (scene, LabeledScene { name: name.to_string(), stems, observation, suction_masks, grasp_labels })
}

pub fn scene_name(index: usize) -> String {
    format!("scene{index:04}")
}

/// Writes `count` synthetic scenes under `root`; scene `i` uses seed
/// `seed + i`.
pub fn write_synthetic_dataset(root: &Path, count: usize, seed: u64, params: &LabeledSceneParams) -> Result<(), EvalError> {
    for i in 0..count {
        let name = scene_name(i);
        let (_, s) = synthetic_labeled_scene(&name, params, seed.wrapping_add(i as u64));
        write_labeled_scene(&root.join(&name), &s)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluation::{load_label_dataset, read_labeled_scene};
    use crate::synth::SceneBox;
    use std::f64::consts::PI;

    #[test]
    fn box_labels_follow_axes() {
        let bin = LabeledSceneParams::default().bin;
        let mut scene = Scene::empty(0.0);
        scene.boxes.push(SceneBox::upright(0.15, 0.1, 0.0, Vector3::new(0.04, 0.1, 0.05), 0.0, [200, 0, 0]));
        let g = GripperParams::default();
        let labels = grasp_labels_for(&scene, bin, 0.002, &g, 16);
        let pos: Vec<_> = labels.iter().filter(|l| l.polarity == Polarity::Positive).collect();
        let neg: Vec<_> = labels.iter().filter(|l| l.polarity == Polarity::Negative).collect();
        // closing along x across 4 cm: centerline col 75, rows along y
        assert!(pos.iter().all(|l| l.col == 75 && l.angle_rad == 0.0));
        assert!(pos.iter().any(|l| l.row == 50));
        assert!(pos.len() > 30);
        // closing along y across 10 cm is too wide
        assert!(neg.iter().all(|l| l.row == 50 && (l.angle_rad - PI / 2.0).abs() < 1e-12));
        assert!(!neg.is_empty());
    }

    #[test]
    fn written_dataset_reloads() {
        let dir = tempfile::tempdir().unwrap();
        let params = LabeledSceneParams { width: 64, height: 48, ..Default::default() };
        write_synthetic_dataset(dir.path(), 3, 7, &params).unwrap();
        let ds = load_label_dataset(dir.path()).unwrap();
        assert_eq!(ds.scenes, vec!["scene0000", "scene0001", "scene0002"]);
        let (_, orig) = synthetic_labeled_scene("scene0001", &params, 8);
        let back = read_labeled_scene(&dir.path().join("scene0001")).unwrap();
        assert_eq!(back.suction_masks, orig.suction_masks);
        assert_eq!(back.grasp_labels, orig.grasp_labels);
        assert_eq!(back.observation.frames[0].color, orig.observation.frames[0].color);
        assert_eq!(back.observation.empty.as_ref().map(Vec::len), Some(2));
        std::fs::remove_file(dir.path().join("scene0002").join("000.suction.png")).unwrap();
        assert!(matches!(load_label_dataset(dir.path()), Err(EvalError::Missing(_))));
    }
}
