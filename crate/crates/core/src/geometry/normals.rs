use nalgebra::{Matrix3, Point3, SymmetricEigen, Vector3};
use rayon::prelude::*;

use super::spatial::KdTree;
use super::{GeometryError, PointCloud};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalParams {
    /// Neighborhood radius in meters.
    pub radius: f64,
    /// Minimum number of neighbors (excluding the point itself).
    pub min_neighbors: usize,
}

impl Default for NormalParams {
    fn default() -> Self {
        Self {
            radius: 0.01,
            min_neighbors: 3,
        }
    }
}

/// PCA surface normals oriented toward each point's source camera.
pub fn estimate_normals(cloud: &PointCloud, radius: f64) -> Result<PointCloud, GeometryError> {
    estimate_normals_with(
        cloud,
        NormalParams {
            radius,
            ..NormalParams::default()
        },
    )
}

pub fn estimate_normals_with(
    cloud: &PointCloud,
    params: NormalParams,
) -> Result<PointCloud, GeometryError> {
    if cloud.is_empty() {
        return Err(GeometryError::EmptyCloud);
    }
    if !(params.radius > 0.0) {
        return Err(GeometryError::InvalidParameter(format!(
            "normal radius must be positive, got {}",
            params.radius
        )));
    }
    let tree = KdTree::new(&cloud.points);
    let normals: Vec<Option<Vector3<f64>>> = (0..cloud.len())
        .into_par_iter()
        .map(|i| {
            let nbrs = tree.within(&cloud.points[i], params.radius);
            if nbrs.len() < params.min_neighbors + 1 {
                return None;
            }
            let n = fit_normal(cloud, cloud.points[i], &nbrs)?;
            let view = cloud
                .viewpoint_of(i)
                .filter(|v| v.coords.iter().all(|c| c.is_finite()))
                .map(|v| v - cloud.points[i])
                .unwrap_or_else(Vector3::z);
            Some(if n.dot(&view) < 0.0 { -n } else { n })
        })
        .collect();
    let mut out = cloud.clone();
    out.normals = Some(normals);
    Ok(out)
}

/// Smallest-eigenvalue eigenvector of the neighborhood covariance.
fn fit_normal(cloud: &PointCloud, origin: Point3<f64>, nbrs: &[usize]) -> Option<Vector3<f64>> {
    // offsets from the query point keep the fit exact under dyadic translations
    let n = nbrs.len() as f64;
    let mean = nbrs
        .iter()
        .fold(Vector3::zeros(), |acc, &j| acc + (cloud.points[j] - origin))
        / n;
    let mut cov = Matrix3::zeros();
    for &j in nbrs {
        let d = (cloud.points[j] - origin) - mean;
        cov += d * d.transpose();
    }
    cov /= n;
    let eig = SymmetricEigen::new(cov);
    let k = eig.eigenvalues.imin();
    let v: Vector3<f64> = eig.eigenvectors.column(k).into_owned();
    let norm = v.norm();
    (norm > 0.0 && norm.is_finite()).then(|| v / norm)
}
