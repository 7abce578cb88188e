use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{AffordanceError, AffordanceMap, MapKind, MapSource};
use crate::grid::Grid;
use crate::heightmap::{Heightmap, RotationSet};

/// Parallel-jaw gripper geometry used by the hill-profile grasp test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GripperParams {
    /// Maximum distance between the fingers (m).
    pub max_opening: f64,
    /// Finger thickness along the closing axis; the free slot each finger
    /// needs beside the object (m).
    pub finger_width: f64,
    /// Finger extent perpendicular to the closing axis (m).
    pub finger_breadth: f64,
    /// How far the object must rise above both finger slots (m).
    pub finger_clearance: f64,
    /// Added to the measured object width to get the opening command (m).
    pub width_clearance: f64,
    /// Largest tolerated angle between a contact face normal and the closing
    /// axis (rad).
    pub friction_cone: f64,
}

impl Default for GripperParams {
    fn default() -> Self {
        Self {
            max_opening: 0.07,
            finger_width: 0.02,
            finger_breadth: 0.01,
            finger_clearance: 0.015,
            width_clearance: 0.01,
            friction_cone: 20f64.to_radians(),
        }
    }
}

impl GripperParams {
    pub fn validate(&self) -> Result<(), AffordanceError> {
        let ok = self.max_opening > 0.0
            && self.finger_width > 0.0
            && self.finger_breadth >= 0.0
            && self.finger_clearance > 0.0
            && self.width_clearance >= 0.0
            && self.friction_cone > 0.0
            && self.friction_cone < PI / 2.0;
        if ok {
            Ok(())
        } else {
            Err(AffordanceError::Invalid(format!("bad gripper parameters {self:?}")))
        }
    }
}

/// Bilinear sample: up to four (row offset, col offset, weight) entries.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Sample {
    taps: [(i32, i32, f64); 4],
    len: u8,
}

impl Sample {
    fn at(fr: f64, fc: f64) -> Self {
        let r0 = fr.floor();
        let c0 = fc.floor();
        let a = fr - r0;
        let b = fc - c0;
        let (r0, c0) = (r0 as i32, c0 as i32);
        let mut s = Sample {
            taps: [(0, 0, 0.0); 4],
            len: 0,
        };
        for (dr, dc, w) in [
            (r0, c0, (1.0 - a) * (1.0 - b)),
            (r0, c0 + 1, (1.0 - a) * b),
            (r0 + 1, c0, a * (1.0 - b)),
            (r0 + 1, c0 + 1, a * b),
        ] {
            if w != 0.0 {
                s.taps[s.len as usize] = (dr, dc, w);
                s.len += 1;
            }
        }
        s
    }

    fn map(&self, f: impl Fn(i32, i32) -> (i32, i32)) -> Self {
        let mut out = *self;
        for t in out.taps.iter_mut().take(self.len as usize) {
            let (r, c) = f(t.0, t.1);
            *t = (r, c, t.2);
        }
        out
    }

    fn negated(&self) -> Self {
        self.map(|r, c| (-r, -c))
    }

    /// Quarter turn matching a counter-clockwise heightmap rotation.
    fn quarter_turn(&self) -> Self {
        self.map(|r, c| (c, -r))
    }

    #[inline]
    fn eval(&self, h: &Grid<f64>, row: usize, col: usize) -> f64 {
        let mut acc = 0.0;
        for &(dr, dc, w) in &self.taps[..self.len as usize] {
            acc += w * h.get_signed(row as i64 + dr as i64, col as i64 + dc as i64).copied().unwrap_or(0.0);
        }
        acc
    }
}

/// Precomputed sampling pattern for every angle: three parallel lines (the
/// closing axis and two offsets by half the finger breadth), sampled once per
/// pixel along the axis.
///
/// Angles past a quarter turn reuse the pattern of the angle a quarter turn
/// earlier, rotated on the integer lattice, and every pattern is point
/// symmetric. A scene rotated by 90 degrees therefore produces exactly
/// permuted maps.
#[derive(Debug, Clone)]
pub struct GraspTaps {
    n_angles: usize,
    reach: usize,
    /// Index `(angle * LINES + line) * (2 * reach + 1) + k + reach`.
    samples: Vec<Sample>,
    slot: usize,
    half_breadth_px: f64,
    resolution: f64,
    params: GripperParams,
}

const LINES: usize = 3;

impl GraspTaps {
    pub fn new(n_angles: usize, resolution: f64, params: GripperParams) -> Result<Self, AffordanceError> {
        params.validate()?;
        if n_angles == 0 || !(resolution > 0.0) {
            return Err(AffordanceError::Invalid("need at least one angle and a positive resolution".into()));
        }
        let slot = ((params.finger_width / resolution) - 1e-9).ceil().max(1.0) as usize;
        let max_run = (params.max_opening / resolution).floor() as usize;
        let reach = max_run + slot + 1;
        let half_breadth_px = params.finger_breadth / 2.0 / resolution;
        let span = 2 * reach + 1;
        let mut samples = vec![Sample::at(0.0, 0.0); n_angles * LINES * span];
        let idx = |a: usize, line: usize, k: i64| (a * LINES + line) * span + (k + reach as i64) as usize;
        let direct = if n_angles.is_multiple_of(2) { n_angles / 2 } else { n_angles };
        for a in 0..n_angles {
            for line in 0..LINES {
                let j = line as i64 - 1;
                for k in -(reach as i64)..=(reach as i64) {
                    let s = if a >= direct {
                        samples[idx(a - direct, line, k)].quarter_turn()
                    } else if k < 0 || (k == 0 && j < 0) {
                        // filled from the mirrored entry below
                        continue;
                    } else {
                        let theta = a as f64 * PI / n_angles as f64;
                        let (s, c) = theta.sin_cos();
                        let (k, j) = (k as f64, j as f64 * half_breadth_px);
                        Sample::at(k * s + j * c, k * c - j * s)
                    };
                    samples[idx(a, line, k)] = s;
                }
            }
            if a < direct {
                for line in 0..LINES {
                    let mirror = LINES - 1 - line;
                    for k in -(reach as i64)..=(reach as i64) {
                        let j = line as i64 - 1;
                        if k < 0 || (k == 0 && j < 0) {
                            samples[idx(a, line, k)] = samples[idx(a, mirror, -k)].negated();
                        }
                    }
                }
            }
        }
        Ok(Self {
            n_angles,
            reach,
            samples,
            slot,
            half_breadth_px,
            resolution,
            params,
        })
    }

    pub fn n_angles(&self) -> usize {
        self.n_angles
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn params(&self) -> &GripperParams {
        &self.params
    }

    #[inline]
    fn sample(&self, angle: usize, line: usize, k: i64) -> &Sample {
        let span = 2 * self.reach + 1;
        &self.samples[(angle * LINES + line) * span + (k + self.reach as i64) as usize]
    }
}

/// Profile measurement at one pixel and angle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraspMeasure {
    /// Grasp affordance in `[0, 1]`.
    pub score: f64,
    /// Object extent along the closing axis (m).
    pub width: f64,
    /// Drop from the pixel top to the highest finger-slot sample (m).
    pub depth: f64,
    /// Largest contact-face tilt against the closing axis (rad).
    pub tilt: f64,
}

/// Hill-profile antipodal test. The pixel's column must rise at least
/// `finger_clearance` above free finger slots on both sides of the closing
/// axis, on all three sample lines, with the object no wider than the opening
/// and both contact faces inside the friction cone.
pub fn measure_grasp(hm: &Grid<f64>, taps: &GraspTaps, row: usize, col: usize, angle: usize) -> Option<GraspMeasure> {
    let p = &taps.params;
    let h0 = hm[(row, col)];
    let zf = h0 - p.finger_clearance;
    if zf < 0.0 {
        return None;
    }
    let frac = |s: f64| ((s - zf) / p.finger_clearance).min(1.0);
    // runs[line][side]: fractional object samples from the center outwards
    let mut runs = [[0.0f64; 2]; LINES];
    let mut widest = 0.0f64;
    let mut slot_top = f64::NEG_INFINITY;
    for (line, run) in runs.iter_mut().enumerate() {
        let center = taps.sample(angle, line, 0).eval(hm, row, col);
        if center <= zf {
            return None;
        }
        for (side, sign) in [(0usize, 1i64), (1, -1)] {
            let mut acc = 0.0;
            let mut k = 1usize;
            loop {
                if k > taps.reach {
                    return None;
                }
                let s = taps.sample(angle, line, sign * k as i64).eval(hm, row, col);
                if s <= zf {
                    break;
                }
                acc += frac(s);
                k += 1;
            }
            if k + taps.slot - 1 > taps.reach {
                return None;
            }
            for kk in k..k + taps.slot {
                let s = taps.sample(angle, line, sign * kk as i64).eval(hm, row, col);
                if s > zf {
                    return None;
                }
                slot_top = slot_top.max(s);
            }
            run[side] = acc;
        }
        widest = widest.max(run[0] + run[1] + frac(center));
    }
    let width = widest * taps.resolution;
    if width > p.max_opening {
        return None;
    }
    let mut tilt = 0.0f64;
    if taps.half_breadth_px > 0.0 {
        for (first, last) in runs[0].iter().zip(&runs[2]) {
            let shift = (last - first).abs();
            tilt = tilt.max((shift / (2.0 * taps.half_breadth_px)).atan());
        }
        if tilt > p.friction_cone {
            return None;
        }
    }
    let depth = h0 - slot_top;
    let depth_score = (depth / (2.0 * p.finger_clearance)).min(1.0);
    let (l, r) = (runs[1][0], runs[1][1]);
    let centering = 1.0 - (l - r).abs() / (l + r + 1.0);
    let fit = 1.0 - width / (2.0 * p.max_opening);
    let alignment = 1.0 - (tilt / p.friction_cone).powi(2);
    Some(GraspMeasure {
        score: (depth_score * centering * fit * alignment).clamp(0.0, 1.0),
        width,
        depth,
        tilt,
    })
}

/// One grasp affordance map per rotation angle, in the heightmap's own frame.
pub fn grasp_baseline(
    hm: &Heightmap,
    rotations: &RotationSet,
    params: GripperParams,
) -> Result<Vec<AffordanceMap>, AffordanceError> {
    let taps = GraspTaps::new(rotations.len(), hm.resolution, params)?;
    Ok(grasp_maps_with(&hm.height, &taps, rotations))
}

pub(crate) fn grasp_maps_with(height: &Grid<f64>, taps: &GraspTaps, rotations: &RotationSet) -> Vec<AffordanceMap> {
    (0..taps.n_angles())
        .into_par_iter()
        .map(|a| AffordanceMap {
            values: Grid::from_fn(height.rows(), height.cols(), |r, c| {
                measure_grasp(height, taps, r, c, a).map_or(0.0, |m| m.score as f32)
            }),
            kind: MapKind::Grasp,
            angle: Some(rotations.angles[a]),
            source: MapSource::Baseline,
        })
        .collect()
}
