use nalgebra::Vector3;
use rayon::prelude::*;

use super::AffordanceError;
use crate::geometry::spatial::KdTree;
use crate::geometry::PointCloud;

pub const DEFAULT_SUCTION_BETA: f64 = 50.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuctionParams {
    /// Neighborhood radius for the normal variance (m).
    pub window_radius: f64,
    pub beta: f64,
}

impl Default for SuctionParams {
    fn default() -> Self {
        Self {
            window_radius: 0.01,
            beta: DEFAULT_SUCTION_BETA,
        }
    }
}

/// Per-point suction affordance `exp(-beta * var)`, where `var` is the trace of
/// the covariance of valid neighbor normals. Points without a valid normal
/// score 0.
pub fn suction_baseline(cloud: &PointCloud, params: SuctionParams) -> Result<Vec<f64>, AffordanceError> {
    let normals = cloud.normals.as_ref().ok_or(AffordanceError::MissingNormals)?;
    if !(params.window_radius > 0.0) || !(params.beta >= 0.0) {
        return Err(AffordanceError::Invalid(format!("bad suction parameters {params:?}")));
    }
    let tree = KdTree::new(&cloud.points);
    Ok((0..cloud.len())
        .into_par_iter()
        .map(|i| {
            let Some(ni) = normals[i] else {
                return 0.0;
            };
            let mut sum = Vector3::zeros();
            let mut sq = 0.0;
            let mut count = 0usize;
            for j in tree.within(&cloud.points[i], params.window_radius) {
                if let Some(nj) = normals[j] {
                    let d = nj - ni;
                    sum += d;
                    sq += d.norm_squared();
                    count += 1;
                }
            }
            let n = count as f64;
            let var = (sq / n - (sum / n).norm_squared()).max(0.0);
            (-params.beta * var).exp()
        })
        .collect())
}
