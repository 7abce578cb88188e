use serde::{Deserialize, Serialize};

use super::{GeometryError, RgbdFrame};
use crate::grid::{Grid, Mask};

/// Thresholds for scene-vs-empty differencing. Not published values; these
/// are exposed defaults.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BackgroundParams {
    /// Euclidean RGB distance on channels scaled to [0,1].
    pub color_tol: f64,
    /// Absolute depth difference in meters.
    pub depth_tol: f64,
}

impl Default for BackgroundParams {
    fn default() -> Self {
        Self {
            color_tol: 30.0 / 255.0,
            depth_tol: 0.01,
        }
    }
}

#[inline]
pub(crate) fn color_distance(a: [u8; 3], b: [u8; 3]) -> f64 {
    let mut s = 0.0;
    for k in 0..3 {
        let d = (a[k] as f64 - b[k] as f64) / 255.0;
        s += d * d;
    }
    s.sqrt()
}

/// Foreground iff the depth differs by more than `depth_tol` or the color by
/// more than `color_tol`. Depth is only compared where both frames have a
/// reading.
pub fn background_subtract(
    scene: &RgbdFrame,
    empty: &RgbdFrame,
    params: BackgroundParams,
) -> Result<Mask, GeometryError> {
    if !scene.same_calibration(empty) {
        return Err(GeometryError::Calibration(
            "scene and empty frames have different calibration".into(),
        ));
    }
    scene.validate()?;
    empty.validate()?;
    Ok(difference_mask(
        &scene.depth,
        &scene.color,
        &empty.depth,
        &empty.color,
        params,
    ))
}

pub(crate) fn difference_mask(
    depth: &Grid<f64>,
    color: &Grid<[u8; 3]>,
    ref_depth: &Grid<f64>,
    ref_color: &Grid<[u8; 3]>,
    params: BackgroundParams,
) -> Mask {
    Grid::from_fn(depth.rows(), depth.cols(), |r, c| {
        let (d, e) = (depth[(r, c)], ref_depth[(r, c)]);
        let depth_changed = d > 0.0 && e > 0.0 && (d - e).abs() > params.depth_tol;
        depth_changed || color_distance(color[(r, c)], ref_color[(r, c)]) > params.color_tol
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{CameraIntrinsics, RigidTransform};

    fn flat(depth: f64) -> RgbdFrame {
        let k = CameraIntrinsics::new(50.0, 50.0, 16.0, 12.0, 32, 24).unwrap();
        RgbdFrame::new(
            Grid::new(24, 32, [90, 90, 90]),
            Grid::new(24, 32, depth),
            k,
            RigidTransform::identity(),
        )
        .unwrap()
    }

    #[test]
    fn identical_frames_have_no_foreground() {
        let f = flat(0.8);
        let m = background_subtract(&f, &f, BackgroundParams::default()).unwrap();
        assert!(m.iter().all(|v| !v));
    }

    #[test]
    fn small_uniform_offset_is_below_tolerance() {
        let m = background_subtract(&flat(0.805), &flat(0.8), BackgroundParams::default()).unwrap();
        assert!(m.iter().all(|v| !v));
    }

    #[test]
    fn color_change_is_foreground() {
        let mut scene = flat(0.8);
        scene.color[(3, 4)] = [200, 10, 10];
        let m = background_subtract(&scene, &flat(0.8), BackgroundParams::default()).unwrap();
        assert!(m[(3, 4)]);
        assert_eq!(m.iter().filter(|v| **v).count(), 1);
    }

    #[test]
    fn mismatched_calibration_rejected() {
        let mut other = flat(0.8);
        other.pose.translation.x = 0.1;
        assert!(background_subtract(&flat(0.8), &other, BackgroundParams::default()).is_err());
    }
}
