use std::io::Write;

use nalgebra::{Point3, Vector3};
use serde::{Deserialize, Serialize};

use super::{GeometryError, RgbdFrame};

/// Originating pixel of a projected point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SourcePixel {
    pub frame: u32,
    pub row: u32,
    pub col: u32,
}

/// World-frame point cloud.
///
/// `sources` is either empty (synthetic clouds) or one entry per point.
/// `viewpoints[f]` is the camera center of frame `f`, used to orient normals.
/// A `None` entry in `normals` marks a point whose neighborhood was too
/// sparse to estimate a normal.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Point3<f64>>,
    pub colors: Vec<[u8; 3]>,
    pub normals: Option<Vec<Option<Vector3<f64>>>>,
    pub sources: Vec<SourcePixel>,
    pub viewpoints: Vec<Point3<f64>>,
}

impl PointCloud {
    /// Cloud without pixel provenance, seen from a single viewpoint.
    pub fn from_points(points: Vec<Point3<f64>>, viewpoint: Point3<f64>) -> Self {
        let colors = vec![[128, 128, 128]; points.len()];
        Self {
            points,
            colors,
            normals: None,
            sources: Vec::new(),
            viewpoints: vec![viewpoint],
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn frame_of(&self, i: usize) -> u32 {
        self.sources.get(i).map_or(0, |s| s.frame)
    }

    pub fn viewpoint_of(&self, i: usize) -> Option<Point3<f64>> {
        self.viewpoints.get(self.frame_of(i) as usize).copied()
    }

    pub fn normal(&self, i: usize) -> Option<Vector3<f64>> {
        self.normals.as_ref().and_then(|n| n[i])
    }

    pub fn centroid(&self) -> Option<Point3<f64>> {
        if self.points.is_empty() {
            return None;
        }
        let sum = self
            .points
            .iter()
            .fold(Vector3::zeros(), |acc, p| acc + p.coords);
        Some(Point3::from(sum / self.points.len() as f64))
    }

    /// Keeps the points for which `keep(i)` is true.
    pub fn filter(&self, mut keep: impl FnMut(usize) -> bool) -> Self {
        let idx: Vec<usize> = (0..self.len()).filter(|&i| keep(i)).collect();
        Self {
            points: idx.iter().map(|&i| self.points[i]).collect(),
            colors: idx.iter().map(|&i| self.colors[i]).collect(),
            normals: self
                .normals
                .as_ref()
                .map(|n| idx.iter().map(|&i| n[i]).collect()),
            sources: if self.sources.is_empty() {
                Vec::new()
            } else {
                idx.iter().map(|&i| self.sources[i]).collect()
            },
            viewpoints: self.viewpoints.clone(),
        }
    }

    /// Concatenates clouds, renumbering frame ids so each input keeps its own
    /// viewpoints. Normals survive only if every input has them.
    pub fn merge(clouds: &[PointCloud]) -> Self {
        let mut out = PointCloud::default();
        let keep_normals = !clouds.is_empty() && clouds.iter().all(|c| c.normals.is_some());
        let mut normals = Vec::new();
        for c in clouds {
            let offset = out.viewpoints.len() as u32;
            let views = c.viewpoints.len().max(1);
            out.points.extend_from_slice(&c.points);
            out.colors.extend_from_slice(&c.colors);
            if keep_normals {
                normals.extend_from_slice(c.normals.as_ref().unwrap());
            }
            for i in 0..c.len() {
                let mut s = c.sources.get(i).copied().unwrap_or(SourcePixel {
                    frame: 0,
                    row: 0,
                    col: 0,
                });
                s.frame += offset;
                out.sources.push(s);
            }
            if c.viewpoints.is_empty() {
                out.viewpoints.push(Point3::new(0.0, 0.0, f64::INFINITY));
            } else {
                out.viewpoints.extend_from_slice(&c.viewpoints);
            }
            debug_assert_eq!(out.viewpoints.len() as u32, offset + views as u32);
        }
        if keep_normals {
            out.normals = Some(normals);
        }
        out
    }

    /// ASCII PLY with `x y z nx ny nz red green blue`. Points without a valid
    /// normal are written with a zero normal.
    pub fn write_ply<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "ply")?;
        writeln!(w, "format ascii 1.0")?;
        writeln!(w, "element vertex {}", self.len())?;
        for p in ["x", "y", "z", "nx", "ny", "nz"] {
            writeln!(w, "property float {p}")?;
        }
        for p in ["red", "green", "blue"] {
            writeln!(w, "property uchar {p}")?;
        }
        writeln!(w, "end_header")?;
        for i in 0..self.len() {
            let p = self.points[i];
            let n = self.normal(i).unwrap_or_else(Vector3::zeros);
            let c = self.colors[i];
            writeln!(
                w,
                "{} {} {} {} {} {} {} {} {}",
                p.x, p.y, p.z, n.x, n.y, n.z, c[0], c[1], c[2]
            )?;
        }
        Ok(())
    }
}

/// One world-frame point per pixel with positive depth, in row-major pixel order.
pub fn project_to_cloud(frame: &RgbdFrame) -> Result<PointCloud, GeometryError> {
    project_frame(frame, 0)
}

/// As [`project_to_cloud`], tagging sources with `frame_id`. The viewpoint
/// list is padded so that `viewpoints[frame_id]` is this frame's camera.
pub fn project_frame(frame: &RgbdFrame, frame_id: u32) -> Result<PointCloud, GeometryError> {
    frame.validate()?;
    let k = &frame.intrinsics;
    let mut cloud = PointCloud::default();
    for (row, col, &d) in frame.depth.indexed() {
        if d <= 0.0 {
            continue;
        }
        let cam = k.unproject(col as f64, row as f64, d);
        cloud.points.push(frame.pose.apply(&cam));
        cloud.colors.push(frame.color[(row, col)]);
        cloud.sources.push(SourcePixel {
            frame: frame_id,
            row: row as u32,
            col: col as u32,
        });
    }
    cloud.viewpoints = vec![frame.viewpoint(); frame_id as usize + 1];
    Ok(cloud)
}

/// Projects several registered frames into one cloud, frame ids following
/// input order.
pub fn project_frames(frames: &[RgbdFrame]) -> Result<PointCloud, GeometryError> {
    let clouds = frames
        .iter()
        .map(project_to_cloud)
        .collect::<Result<Vec<_>, _>>()?;
    Ok(PointCloud::merge(&clouds))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{CameraIntrinsics, RigidTransform};
    use crate::grid::Grid;

    fn frame(depth: Grid<f64>, k: CameraIntrinsics) -> RgbdFrame {
        let color = Grid::new(k.height, k.width, [10, 20, 30]);
        RgbdFrame::new(color, depth, k, RigidTransform::identity()).unwrap()
    }

    #[test]
    fn pinhole_identity_pixel() {
        let k = CameraIntrinsics {
            fx: 1.0,
            fy: 1.0,
            cx: 0.0,
            cy: 0.0,
            width: 2,
            height: 2,
        };
        let mut depth = Grid::new(2, 2, 0.0);
        depth[(0, 0)] = 1.0;
        let cloud = project_to_cloud(&frame(depth, k)).unwrap();
        assert_eq!(cloud.len(), 1);
        assert_eq!(cloud.points[0], Point3::new(0.0, 0.0, 1.0));
        assert_eq!(cloud.sources[0], SourcePixel { frame: 0, row: 0, col: 0 });
    }

    #[test]
    fn zero_depth_gives_empty_cloud() {
        let k = CameraIntrinsics::new(500.0, 500.0, 320.0, 240.0, 640, 480).unwrap();
        let cloud = project_to_cloud(&frame(Grid::new(480, 640, 0.0), k)).unwrap();
        assert!(cloud.is_empty());
    }

    #[test]
    fn hand_evaluated_pixel() {
        let k = CameraIntrinsics::new(500.0, 500.0, 320.0, 240.0, 640, 480).unwrap();
        let mut depth = Grid::new(480, 640, 0.0);
        depth[(240, 420)] = 0.5;
        let cloud = project_to_cloud(&frame(depth, k)).unwrap();
        let p = cloud.points[0];
        assert!((p - Point3::new(0.1, 0.0, 0.5)).norm() < 1e-12);
    }

    #[test]
    fn dimension_mismatch_is_calibration_error() {
        let k = CameraIntrinsics::new(500.0, 500.0, 320.0, 240.0, 640, 480).unwrap();
        let f = RgbdFrame {
            color: Grid::new(480, 640, [0; 3]),
            depth: Grid::new(479, 640, 0.0),
            intrinsics: k,
            pose: RigidTransform::identity(),
        };
        assert!(matches!(project_to_cloud(&f), Err(GeometryError::Calibration(_))));
    }

    #[test]
    fn merge_renumbers_frames() {
        let a = PointCloud::from_points(vec![Point3::origin()], Point3::new(0.0, 0.0, 1.0));
        let b = PointCloud::from_points(vec![Point3::new(1.0, 0.0, 0.0)], Point3::new(1.0, 0.0, 1.0));
        let m = PointCloud::merge(&[a, b]);
        assert_eq!(m.frame_of(1), 1);
        assert_eq!(m.viewpoint_of(1), Some(Point3::new(1.0, 0.0, 1.0)));
    }

    #[test]
    fn ply_header_and_rows() {
        let c = PointCloud::from_points(vec![Point3::new(1.0, 2.0, 3.0)], Point3::origin());
        let mut buf = Vec::new();
        c.write_ply(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("ply\nformat ascii 1.0\nelement vertex 1\n"));
        assert!(s.trim_end().ends_with("1 2 3 0 0 0 128 128 128"));
    }
}
