use nalgebra::{Matrix3, Point3, Vector3};

use super::spatial::KdTree;
use super::{GeometryError, PointCloud, RigidTransform};

pub const MIN_ICP_POINTS: usize = 10;

/// Consecutive RMS increases that count as divergence.
const DIVERGENCE_STREAK: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum IcpInit {
    Identity,
    /// Translate the source centroid onto the target centroid.
    Centroids,
    Given(RigidTransform),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IcpParams {
    pub max_iterations: usize,
    /// Stop once the RMS changes by less than this between iterations.
    pub tolerance: f64,
    /// Pairs farther than `reject_factor` times the median pair distance are
    /// dropped each iteration.
    pub reject_factor: f64,
    pub init: IcpInit,
}

impl Default for IcpParams {
    fn default() -> Self {
        Self {
            max_iterations: 100,
            tolerance: 1e-12,
            reject_factor: 2.0,
            init: IcpInit::Identity,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IcpResult {
    /// Maps source points onto the target.
    pub transform: RigidTransform,
    pub rms: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Point-to-point ICP with default parameters.
pub fn icp_register(
    source: &PointCloud,
    target: &PointCloud,
    max_iterations: usize,
    tolerance: f64,
) -> Result<IcpResult, GeometryError> {
    icp_register_with(
        &source.points,
        &target.points,
        IcpParams {
            max_iterations,
            tolerance,
            ..IcpParams::default()
        },
    )
}

pub fn icp_register_with(
    source: &[Point3<f64>],
    target: &[Point3<f64>],
    params: IcpParams,
) -> Result<IcpResult, GeometryError> {
    if source.len() < MIN_ICP_POINTS || target.len() < MIN_ICP_POINTS {
        return Err(GeometryError::TooFewPoints {
            needed: MIN_ICP_POINTS,
            got: source.len().min(target.len()),
        });
    }
    let tree = KdTree::new(target);
    let mut current = match params.init {
        IcpInit::Identity => RigidTransform::identity(),
        IcpInit::Centroids => RigidTransform::from_translation(centroid(target) - centroid(source)),
        IcpInit::Given(t) => t,
    };

    let mut best = IcpResult {
        transform: current,
        rms: f64::INFINITY,
        iterations: 0,
        converged: false,
    };
    let mut prev_rms = f64::INFINITY;
    let mut streak = 0;
    let mut pairs: Vec<(Point3<f64>, usize, f64)> = Vec::with_capacity(source.len());
    let mut dists: Vec<f64> = Vec::with_capacity(source.len());

    for iter in 1..=params.max_iterations {
        pairs.clear();
        for s in source {
            let moved = current.apply(s);
            let (j, d2) = tree.nearest(&moved).expect("target is non-empty");
            pairs.push((moved, j, d2.sqrt()));
        }
        dists.clear();
        dists.extend(pairs.iter().map(|p| p.2));
        let cutoff = params.reject_factor * median(&mut dists);
        let kept: Vec<(Point3<f64>, Point3<f64>)> = pairs
            .iter()
            .filter(|p| p.2 <= cutoff)
            .map(|p| (p.0, target[p.1]))
            .collect();
        let rms = (kept.iter().map(|(a, b)| (a - b).norm_squared()).sum::<f64>()
            / kept.len() as f64)
            .sqrt();

        if rms < best.rms {
            best = IcpResult {
                transform: current,
                rms,
                iterations: iter,
                converged: false,
            };
        }
        if (prev_rms - rms).abs() < params.tolerance || rms == 0.0 {
            return Ok(IcpResult {
                transform: current,
                rms,
                iterations: iter,
                converged: true,
            });
        }
        if rms > prev_rms {
            streak += 1;
            if streak >= DIVERGENCE_STREAK {
                return Err(GeometryError::IcpDiverged {
                    best: best.transform,
                    rms: best.rms,
                });
            }
        } else {
            streak = 0;
        }
        prev_rms = rms;

        if kept.len() < 3 {
            break;
        }
        let step = best_fit_transform(&kept);
        current = step.compose(&current);
    }
    Ok(IcpResult {
        converged: false,
        ..best
    })
}

fn centroid(points: &[Point3<f64>]) -> Vector3<f64> {
    points.iter().fold(Vector3::zeros(), |a, p| a + p.coords) / points.len() as f64
}

fn median(v: &mut [f64]) -> f64 {
    let mid = v.len() / 2;
    let (_, m, _) = v.select_nth_unstable_by(mid, f64::total_cmp);
    *m
}

/// Least-squares rigid transform mapping `pairs[i].0` onto `pairs[i].1`
/// (Kabsch / SVD with reflection guard).
pub fn best_fit_transform(pairs: &[(Point3<f64>, Point3<f64>)]) -> RigidTransform {
    let n = pairs.len() as f64;
    let ca = pairs.iter().fold(Vector3::zeros(), |a, p| a + p.0.coords) / n;
    let cb = pairs.iter().fold(Vector3::zeros(), |a, p| a + p.1.coords) / n;
    let mut h = Matrix3::zeros();
    for (a, b) in pairs {
        h += (a.coords - ca) * (b.coords - cb).transpose();
    }
    let svd = h.svd(true, true);
    let u = svd.u.expect("svd u");
    let v = svd.v_t.expect("svd v").transpose();
    let d = (v * u.transpose()).determinant().signum();
    let fix = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, d));
    let rotation = v * fix * u.transpose();
    RigidTransform {
        rotation,
        translation: cb - rotation * ca,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    /// Anisotropic, non-symmetric blob: points on three boxes of different sizes.
    fn shape(rng: &mut ChaCha8Rng, n: usize) -> Vec<Point3<f64>> {
        (0..n)
            .map(|i| {
                let (c, e) = match i % 3 {
                    0 => (Vector3::new(0.0, 0.0, 0.0), Vector3::new(0.10, 0.04, 0.03)),
                    1 => (Vector3::new(0.06, 0.05, 0.02), Vector3::new(0.03, 0.05, 0.02)),
                    _ => (Vector3::new(-0.04, -0.02, 0.05), Vector3::new(0.02, 0.02, 0.04)),
                };
                let u = Vector3::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5);
                Point3::from(c + u.component_mul(&e))
            })
            .collect()
    }

    #[test]
    fn identical_clouds_give_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pts = shape(&mut rng, 300);
        let res = icp_register_with(&pts, &pts, IcpParams::default()).unwrap();
        let (dr, dt) = res.transform.error_to(&RigidTransform::identity());
        assert!(dr < 1e-12 && dt < 1e-12);
        assert_eq!(res.rms, 0.0);
        assert!(res.converged);
    }

    #[test]
    fn recovers_small_rotation_and_translation() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let src = shape(&mut rng, 600);
        let truth = RigidTransform::from_axis_angle(&Vector3::z(), 5f64.to_radians(), Vector3::new(0.01, 0.0, 0.0));
        let dst: Vec<_> = src.iter().map(|p| truth.apply(p)).collect();
        let res = icp_register_with(&src, &dst, IcpParams::default()).unwrap();
        let (dr, dt) = res.transform.error_to(&truth);
        assert!(dr < 1e-3 && dt < 1e-3, "dr={dr} dt={dt}");
    }

    #[test]
    fn noisy_recovery() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let src = shape(&mut rng, 2000);
        let truth = RigidTransform::from_axis_angle(&Vector3::z(), 5f64.to_radians(), Vector3::new(0.01, 0.0, 0.0));
        let noise = Normal::new(0.0, 0.001).unwrap();
        let dst: Vec<_> = src
            .iter()
            .map(|p| {
                let q = truth.apply(p);
                Point3::new(q.x + noise.sample(&mut rng), q.y + noise.sample(&mut rng), q.z + noise.sample(&mut rng))
            })
            .collect();
        let res = icp_register_with(&src, &dst, IcpParams { tolerance: 1e-9, ..IcpParams::default() }).unwrap();
        let (dr, dt) = res.transform.error_to(&truth);
        assert!(dr < 5e-3 && dt < 5e-3, "dr={dr} dt={dt}");
    }

    #[test]
    fn too_few_points() {
        let pts = vec![Point3::origin(); 5];
        assert!(matches!(
            icp_register_with(&pts, &pts, IcpParams::default()),
            Err(GeometryError::TooFewPoints { .. })
        ));
    }

    #[test]
    fn kabsch_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let src = shape(&mut rng, 50);
        let t = RigidTransform::from_axis_angle(&Vector3::new(1.0, 1.0, 0.0), 0.7, Vector3::new(0.3, -0.1, 0.2));
        let pairs: Vec<_> = src.iter().map(|p| (*p, t.apply(p))).collect();
        let est = best_fit_transform(&pairs);
        let (dr, dt) = est.error_to(&t);
        assert!(dr < 1e-10 && dt < 1e-10);
    }
}
