use nalgebra::{Matrix3, Point3, Rotation3, Unit, Vector3};
use serde::{Deserialize, Serialize};

use super::GeometryError;
use crate::grid::Grid;

/// Depth values at or beyond this range are rejected as sensor garbage.
pub const MAX_DEPTH: f64 = 10.0;

const ORTHONORMAL_TOL: f64 = 1e-6;

/// Pinhole intrinsics in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl CameraIntrinsics {
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: usize,
        height: usize,
    ) -> Result<Self, GeometryError> {
        let k = Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        let ok = self.fx > 0.0
            && self.fy > 0.0
            && self.cx >= 0.0
            && self.cy >= 0.0
            && self.cx < self.width as f64
            && self.cy < self.height as f64;
        if ok {
            Ok(())
        } else {
            Err(GeometryError::Calibration(format!(
                "invalid intrinsics {self:?}"
            )))
        }
    }

    /// Back-projects pixel `(col, row)` at metric `depth` into the camera frame.
    #[inline]
    pub fn unproject(&self, col: f64, row: f64, depth: f64) -> Point3<f64> {
        Point3::new(
            (col - self.cx) / self.fx * depth,
            (row - self.cy) / self.fy * depth,
            depth,
        )
    }

    /// Projects a camera-frame point to `(col, row, depth)`.
    #[inline]
    pub fn project(&self, p: &Point3<f64>) -> (f64, f64, f64) {
        (
            self.fx * p.x / p.z + self.cx,
            self.fy * p.y / p.z + self.cy,
            p.z,
        )
    }
}

/// Rigid motion `x -> R x + t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RigidTransform {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

/// Camera-to-world extrinsics.
pub type CameraPose = RigidTransform;

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self, GeometryError> {
        let t = Self {
            rotation,
            translation,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn from_translation(translation: Vector3<f64>) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation,
        }
    }

    pub fn from_axis_angle(axis: &Vector3<f64>, angle: f64, translation: Vector3<f64>) -> Self {
        let rotation = Rotation3::from_axis_angle(&Unit::new_normalize(*axis), angle).into_inner();
        Self {
            rotation,
            translation,
        }
    }

    /// Camera looking from `eye` at `target`; camera +z is the optical axis,
    /// +y points roughly along `down`.
    pub fn look_at(eye: Point3<f64>, target: Point3<f64>, down: Vector3<f64>) -> Self {
        let z = (target - eye).normalize();
        let x = down.cross(&z).normalize();
        let y = z.cross(&x);
        Self {
            rotation: Matrix3::from_columns(&[x, y, z]),
            translation: eye.coords,
        }
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        let r = &self.rotation;
        let ortho = (r.transpose() * r - Matrix3::identity()).abs().max();
        let det = r.determinant();
        if ortho <= ORTHONORMAL_TOL
            && (det - 1.0).abs() <= ORTHONORMAL_TOL
            && self.translation.iter().all(|v| v.is_finite())
        {
            Ok(())
        } else {
            Err(GeometryError::Calibration(format!(
                "rotation is not orthonormal (|RtR-I|={ortho:.3e}, det={det:.6})"
            )))
        }
    }

    #[inline]
    pub fn apply(&self, p: &Point3<f64>) -> Point3<f64> {
        Point3::from(self.rotation * p.coords + self.translation)
    }

    #[inline]
    pub fn apply_vector(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * v
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &Self) -> Self {
        Self {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    /// Rotation angle in radians.
    pub fn angle(&self) -> f64 {
        ((self.rotation.trace() - 1.0) / 2.0).clamp(-1.0, 1.0).acos()
    }

    /// Frobenius distance between rotations and Euclidean distance between
    /// translations.
    pub fn error_to(&self, other: &Self) -> (f64, f64) {
        (
            (self.rotation - other.rotation).norm(),
            (self.translation - other.translation).norm(),
        )
    }
}

/// Registered color + depth image with calibration. Depth in meters, 0 = missing.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbdFrame {
    pub color: Grid<[u8; 3]>,
    pub depth: Grid<f64>,
    pub intrinsics: CameraIntrinsics,
    pub pose: CameraPose,
}

impl RgbdFrame {
    pub fn new(
        color: Grid<[u8; 3]>,
        depth: Grid<f64>,
        intrinsics: CameraIntrinsics,
        pose: CameraPose,
    ) -> Result<Self, GeometryError> {
        let f = Self {
            color,
            depth,
            intrinsics,
            pose,
        };
        f.validate()?;
        Ok(f)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        self.intrinsics.validate()?;
        self.pose.validate()?;
        let want = (self.intrinsics.height, self.intrinsics.width);
        if self.depth.dims() != want || self.color.dims() != want {
            return Err(GeometryError::Calibration(format!(
                "image dims depth={:?} color={:?} do not match intrinsics {want:?}",
                self.depth.dims(),
                self.color.dims()
            )));
        }
        if let Some(bad) = self
            .depth
            .iter()
            .find(|d| !(d.is_finite() && **d >= 0.0 && **d < MAX_DEPTH))
        {
            return Err(GeometryError::InvalidDepth(*bad));
        }
        Ok(())
    }

    pub fn same_calibration(&self, other: &Self) -> bool {
        self.intrinsics == other.intrinsics && self.pose == other.pose
    }

    /// Camera center in world coordinates.
    pub fn viewpoint(&self) -> Point3<f64> {
        Point3::from(self.pose.translation)
    }

    /// Projects a world point into this camera: `(col, row, depth)`.
    pub fn project_world(&self, p: &Point3<f64>) -> (f64, f64, f64) {
        let cam = self.pose.inverse().apply(p);
        self.intrinsics.project(&cam)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx_eq::close;

    mod approx_eq {
        pub fn close(a: f64, b: f64, tol: f64) -> bool {
            (a - b).abs() <= tol
        }
    }

    #[test]
    fn intrinsics_validation() {
        assert!(CameraIntrinsics::new(500.0, 500.0, 320.0, 240.0, 640, 480).is_ok());
        assert!(CameraIntrinsics::new(0.0, 500.0, 320.0, 240.0, 640, 480).is_err());
        assert!(CameraIntrinsics::new(500.0, 500.0, 640.0, 240.0, 640, 480).is_err());
    }

    #[test]
    fn pinhole_hand_example() {
        let k = CameraIntrinsics::new(500.0, 500.0, 320.0, 240.0, 640, 480).unwrap();
        let p = k.unproject(420.0, 240.0, 0.5);
        assert!(close(p.x, 0.1, 1e-12) && close(p.y, 0.0, 1e-12) && close(p.z, 0.5, 1e-12));
        let (u, v, d) = k.project(&p);
        assert!(close(u, 420.0, 1e-9) && close(v, 240.0, 1e-9) && close(d, 0.5, 1e-12));
    }

    #[test]
    fn transform_algebra() {
        let t = RigidTransform::from_axis_angle(
            &Vector3::new(1.0, 2.0, 3.0),
            0.4,
            Vector3::new(0.1, -0.2, 0.3),
        );
        t.validate().unwrap();
        let p = Point3::new(0.3, 0.7, -1.1);
        let back = t.inverse().apply(&t.apply(&p));
        assert!((back - p).norm() < 1e-12);
        let id = t.compose(&t.inverse());
        let (dr, dt) = id.error_to(&RigidTransform::identity());
        assert!(dr < 1e-12 && dt < 1e-12);
        assert!(close(t.angle(), 0.4, 1e-12));
    }

    #[test]
    fn non_orthonormal_rotation_rejected() {
        let r = Matrix3::new(1.0, 0.1, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0);
        assert!(RigidTransform::new(r, Vector3::zeros()).is_err());
    }

    #[test]
    fn look_at_points_optical_axis() {
        let pose = RigidTransform::look_at(
            Point3::new(0.0, 0.0, 1.0),
            Point3::origin(),
            Vector3::new(0.0, -1.0, 0.0),
        );
        pose.validate().unwrap();
        let axis = pose.apply_vector(&Vector3::z());
        assert!((axis - Vector3::new(0.0, 0.0, -1.0)).norm() < 1e-12);
    }
}
