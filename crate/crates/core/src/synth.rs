//! Ray-cast synthetic scenes: boxes and spheres on a floor plane, rendered
//! into RGB-D frames or directly into heightmaps. Used for demos, benchmarks
//! and as ground truth in tests.

use nalgebra::{Point3, Vector3};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::{CameraIntrinsics, RgbdFrame, RigidTransform};
use crate::grid::Grid;
use crate::heightmap::{BinGeometry, Heightmap};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneBox {
    /// Box frame to world; the box is centered on the frame origin.
    pub pose: RigidTransform,
    pub half_extents: Vector3<f64>,
    pub color: [u8; 3],
}

impl SceneBox {
    /// Upright box resting on `floor_z`, rotated by `yaw` about +z.
    pub fn upright(x: f64, y: f64, floor_z: f64, size: Vector3<f64>, yaw: f64, color: [u8; 3]) -> Self {
        Self {
            pose: RigidTransform::from_axis_angle(
                &Vector3::z(),
                yaw,
                Vector3::new(x, y, floor_z + size.z / 2.0),
            ),
            half_extents: size / 2.0,
            color,
        }
    }

    pub fn size(&self) -> Vector3<f64> {
        self.half_extents * 2.0
    }

    /// Yaw of the box x-axis in the world xy-plane.
    pub fn yaw(&self) -> f64 {
        let x = self.pose.rotation.column(0);
        x[1].atan2(x[0])
    }

    pub fn corners(&self) -> [Point3<f64>; 8] {
        let h = self.half_extents;
        let mut out = [Point3::origin(); 8];
        for (i, slot) in out.iter_mut().enumerate() {
            let s = Vector3::new(
                if i & 1 == 0 { -h.x } else { h.x },
                if i & 2 == 0 { -h.y } else { h.y },
                if i & 4 == 0 { -h.z } else { h.z },
            );
            *slot = self.pose.apply(&Point3::from(s));
        }
        out
    }

    /// Surface samples on all six faces at roughly `spacing`, in the box frame.
    pub fn local_surface_points(&self, spacing: f64) -> Vec<Point3<f64>> {
        let h = self.half_extents;
        let mut pts = Vec::new();
        for axis in 0..3 {
            let (u, v) = ((axis + 1) % 3, (axis + 2) % 3);
            let nu = ((2.0 * h[u] / spacing).ceil() as usize).max(1);
            let nv = ((2.0 * h[v] / spacing).ceil() as usize).max(1);
            for sign in [-1.0, 1.0] {
                for i in 0..=nu {
                    for j in 0..=nv {
                        let mut p = Vector3::zeros();
                        p[axis] = sign * h[axis];
                        p[u] = -h[u] + 2.0 * h[u] * i as f64 / nu as f64;
                        p[v] = -h[v] + 2.0 * h[v] * j as f64 / nv as f64;
                        pts.push(Point3::from(p));
                    }
                }
            }
        }
        pts
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneSphere {
    pub center: Point3<f64>,
    pub radius: f64,
    pub color: [u8; 3],
}

/// What a ray hit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Surface {
    Floor,
    /// Box index, face axis (0..3, in the box frame) and face sign.
    BoxFace { index: usize, axis: usize, positive: bool },
    Sphere(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    pub t: f64,
    pub point: Point3<f64>,
    pub normal: Vector3<f64>,
    pub color: [u8; 3],
    pub surface: Surface,
    /// For box faces: in-face distance from the hit to the nearest face edge.
    pub edge_distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub floor_z: f64,
    pub floor_color: [u8; 3],
    pub boxes: Vec<SceneBox>,
    pub spheres: Vec<SceneSphere>,
}

impl Scene {
    pub fn empty(floor_z: f64) -> Self {
        Self {
            floor_z,
            floor_color: [60, 60, 60],
            boxes: Vec::new(),
            spheres: Vec::new(),
        }
    }

    pub fn without_objects(&self) -> Self {
        Self {
            boxes: Vec::new(),
            spheres: Vec::new(),
            ..self.clone()
        }
    }

    pub fn raycast(&self, origin: &Point3<f64>, dir: &Vector3<f64>) -> Option<Hit> {
        let mut best: Option<Hit> = None;
        let mut consider = |h: Hit| {
            if h.t > 1e-9 && best.is_none_or(|b| h.t < b.t) {
                best = Some(h);
            }
        };
        if dir.z.abs() > 1e-12 {
            let t = (self.floor_z - origin.z) / dir.z;
            consider(Hit {
                t,
                point: origin + dir * t,
                normal: Vector3::z(),
                color: self.floor_color,
                surface: Surface::Floor,
                edge_distance: f64::INFINITY,
            });
        }
        for (index, b) in self.boxes.iter().enumerate() {
            if let Some(h) = ray_box(origin, dir, b, index) {
                consider(h);
            }
        }
        for (index, s) in self.spheres.iter().enumerate() {
            if let Some(h) = ray_sphere(origin, dir, s, index) {
                consider(h);
            }
        }
        best
    }

    /// Renders depth (along the optical axis) and color for a pinhole camera.
    pub fn render(&self, intrinsics: &CameraIntrinsics, pose: &RigidTransform) -> RgbdFrame {
        let (frame, _) = self.render_with_surfaces(intrinsics, pose);
        frame
    }

    pub fn render_with_surfaces(
        &self,
        k: &CameraIntrinsics,
        pose: &RigidTransform,
    ) -> (RgbdFrame, Grid<Option<Hit>>) {
        let origin = Point3::from(pose.translation);
        let hits = Grid::from_fn(k.height, k.width, |r, c| {
            let ray_cam = Vector3::new((c as f64 - k.cx) / k.fx, (r as f64 - k.cy) / k.fy, 1.0);
            let dir = pose.apply_vector(&ray_cam);
            // t along an unnormalized ray with unit camera z is the depth
            self.raycast(&origin, &dir)
        });
        let depth = hits.map(|h| match h {
            Some(h) if h.t < crate::geometry::MAX_DEPTH => h.t,
            _ => 0.0,
        });
        let color = hits.map(|h| h.map_or([0, 0, 0], |h| h.color));
        let frame = RgbdFrame {
            color,
            depth,
            intrinsics: *k,
            pose: *pose,
        };
        (frame, hits)
    }

    /// Heightmap sampled by vertical rays through each column center.
    pub fn render_heightmap(&self, bin: BinGeometry, resolution: f64) -> Heightmap {
        let mut hm = Heightmap::empty(bin, resolution).expect("valid bin");
        let o = bin.origin_point();
        let top = o.z + 10.0;
        for r in 0..hm.rows() {
            for c in 0..hm.cols() {
                let p = Point3::new(o.x + c as f64 * resolution, o.y + r as f64 * resolution, top);
                if let Some(h) = self.raycast(&p, &-Vector3::z()) {
                    hm.height[(r, c)] = (h.point.z - o.z).max(0.0);
                    hm.color[(r, c)] = h.color;
                    hm.known_mask[(r, c)] = true;
                }
            }
        }
        hm
    }
}

fn ray_box(origin: &Point3<f64>, dir: &Vector3<f64>, b: &SceneBox, index: usize) -> Option<Hit> {
    let inv = b.pose.inverse();
    let o = inv.apply(origin);
    let d = inv.apply_vector(dir);
    let h = b.half_extents;
    let mut t_near = f64::NEG_INFINITY;
    let mut t_far = f64::INFINITY;
    let mut axis_near = 0;
    let mut sign_near = false;
    for a in 0..3 {
        if d[a].abs() < 1e-15 {
            if o[a] < -h[a] || o[a] > h[a] {
                return None;
            }
            continue;
        }
        let t1 = (-h[a] - o[a]) / d[a];
        let t2 = (h[a] - o[a]) / d[a];
        let (lo, hi, pos) = if t1 < t2 { (t1, t2, false) } else { (t2, t1, true) };
        if lo > t_near {
            t_near = lo;
            axis_near = a;
            sign_near = pos;
        }
        t_far = t_far.min(hi);
    }
    if t_near > t_far || t_near <= 1e-9 {
        return None;
    }
    let local = o + d * t_near;
    let mut n = Vector3::zeros();
    n[axis_near] = if sign_near { 1.0 } else { -1.0 };
    let (u, v) = ((axis_near + 1) % 3, (axis_near + 2) % 3);
    let edge_distance = (h[u] - local[u].abs()).min(h[v] - local[v].abs());
    Some(Hit {
        t: t_near,
        point: origin + dir * t_near,
        normal: b.pose.apply_vector(&n),
        color: b.color,
        surface: Surface::BoxFace {
            index,
            axis: axis_near,
            positive: sign_near,
        },
        edge_distance,
    })
}

fn ray_sphere(origin: &Point3<f64>, dir: &Vector3<f64>, s: &SceneSphere, index: usize) -> Option<Hit> {
    let oc = origin - s.center;
    let a = dir.norm_squared();
    let b = 2.0 * oc.dot(dir);
    let c = oc.norm_squared() - s.radius * s.radius;
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return None;
    }
    let t = (-b - disc.sqrt()) / (2.0 * a);
    if t <= 1e-9 {
        return None;
    }
    let point = origin + dir * t;
    Some(Hit {
        t,
        point,
        normal: (point - s.center) / s.radius,
        color: s.color,
        surface: Surface::Sphere(index),
        edge_distance: f64::INFINITY,
    })
}

/// Standard two-view rig above a bin: one camera over the bin center and one
/// offset along +x, both looking at the bin center.
pub fn two_view_rig(bin: &BinGeometry, width: usize, height: usize) -> Vec<(CameraIntrinsics, RigidTransform)> {
    let f = width as f64 * 0.9;
    let k = CameraIntrinsics {
        fx: f,
        fy: f,
        cx: (width as f64 - 1.0) / 2.0,
        cy: (height as f64 - 1.0) / 2.0,
        width,
        height,
    };
    let o = bin.origin_point();
    let center = Point3::new(o.x + bin.x_extent / 2.0, o.y + bin.y_extent / 2.0, o.z);
    let up = 0.45 + 0.5 * bin.x_extent.max(bin.y_extent);
    let eye0 = center + Vector3::new(0.0, -0.02, up);
    let eye1 = center + Vector3::new(0.12, 0.02, up);
    let down = Vector3::new(0.0, 1.0, 0.0);
    vec![
        (k, RigidTransform::look_at(eye0, center, down)),
        (k, RigidTransform::look_at(eye1, center, down)),
    ]
}

fn random_color(rng: &mut impl Rng) -> [u8; 3] {
    [rng.random_range(120..=250), rng.random_range(30..=250), rng.random_range(30..=250)]
}

/// Places up to `count` upright boxes with non-overlapping footprints (plus
/// `gap`) inside the bin, keeping `border` from the walls.
pub fn scatter_boxes(
    rng: &mut impl Rng,
    bin: &BinGeometry,
    count: usize,
    size: impl Fn(&mut dyn rand::RngCore) -> Vector3<f64>,
    border: f64,
    gap: f64,
) -> Vec<SceneBox> {
    let o = bin.origin_point();
    let mut placed: Vec<(Point3<f64>, f64)> = Vec::new();
    let mut boxes = Vec::new();
    for _ in 0..count {
        for _attempt in 0..200 {
            let s = size(rng);
            let radius = (s.x * s.x + s.y * s.y).sqrt() / 2.0;
            let lo_x = o.x + border + radius;
            let hi_x = o.x + bin.x_extent - border - radius;
            let lo_y = o.y + border + radius;
            let hi_y = o.y + bin.y_extent - border - radius;
            if lo_x >= hi_x || lo_y >= hi_y {
                continue;
            }
            let x = rng.random_range(lo_x..hi_x);
            let y = rng.random_range(lo_y..hi_y);
            let c = Point3::new(x, y, o.z);
            if placed.iter().any(|(p, r)| (p - c).norm() < r + radius + gap) {
                continue;
            }
            let yaw = rng.random_range(0.0..std::f64::consts::PI);
            placed.push((c, radius));
            boxes.push(SceneBox::upright(x, y, o.z, s, yaw, random_color(rng)));
            break;
        }
    }
    boxes
}
