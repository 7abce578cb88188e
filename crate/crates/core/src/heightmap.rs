//! Orthographic RGB-height maps of the bin, and the rotation machinery used
//! for angle-parameterized grasping.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use log::warn;
use nalgebra::{Point3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{color_distance, BackgroundParams, PointCloud};
use crate::grid::{Grid, Mask};

pub const DEFAULT_RESOLUTION: f64 = 0.002;
pub const DEFAULT_ROTATIONS: usize = 16;
pub const SYNTHETIC_FILL_HEIGHT: f64 = 0.03;

/// Slack for floating-point noise when converting metric extents to pixels.
const INDEX_EPS: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum HeightmapError {
    #[error("invalid bin geometry: {0}")]
    InvalidBin(String),
    #[error("resolution must be positive, got {0}")]
    InvalidResolution(f64),
    #[error("pixel ({row}, {col}) outside {rows}x{cols} heightmap")]
    OutOfBounds {
        row: usize,
        col: usize,
        rows: usize,
        cols: usize,
    },
    #[error("heightmaps differ in size or resolution")]
    Mismatch,
}

/// Axis-aligned bin: inner floor corner at `origin`, extents along world x/y.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinGeometry {
    pub origin: [f64; 3],
    pub x_extent: f64,
    pub y_extent: f64,
    /// Pixels closer than this to a wall get flush grasps.
    pub wall_margin: f64,
}

impl BinGeometry {
    pub fn new(origin: Point3<f64>, x_extent: f64, y_extent: f64, wall_margin: f64) -> Result<Self, HeightmapError> {
        let b = Self {
            origin: [origin.x, origin.y, origin.z],
            x_extent,
            y_extent,
            wall_margin,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<(), HeightmapError> {
        if !(self.x_extent > 0.0 && self.y_extent > 0.0) {
            return Err(HeightmapError::InvalidBin("extents must be positive".into()));
        }
        if !(self.wall_margin >= 0.0 && self.wall_margin < self.x_extent.min(self.y_extent) / 2.0) {
            return Err(HeightmapError::InvalidBin(format!(
                "wall margin {} must be below half the smaller extent",
                self.wall_margin
            )));
        }
        Ok(())
    }

    pub fn origin_point(&self) -> Point3<f64> {
        Point3::new(self.origin[0], self.origin[1], self.origin[2])
    }

    /// `(rows, cols)` of a heightmap at `resolution`.
    pub fn grid_dims(&self, resolution: f64) -> (usize, usize) {
        (
            (self.y_extent / resolution - INDEX_EPS).ceil() as usize,
            (self.x_extent / resolution - INDEX_EPS).ceil() as usize,
        )
    }

    /// Distance from a world (x, y) to the nearest wall.
    pub fn wall_distance(&self, x: f64, y: f64) -> f64 {
        let lx = x - self.origin[0];
        let ly = y - self.origin[1];
        lx.min(self.x_extent - lx).min(ly).min(self.y_extent - ly)
    }
}

/// Orthographic top-down map. Pixel `(row, col)` is the vertical column
/// centered at `origin + (col * res, row * res)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Heightmap {
    pub color: Grid<[u8; 3]>,
    /// Meters above the bin floor.
    pub height: Grid<f64>,
    pub resolution: f64,
    pub bin: BinGeometry,
    /// False where no point landed (height synthesized or zero).
    pub known_mask: Mask,
    /// Accumulated in-plane rotation, radians; 0 for maps in the bin frame.
    pub rotation: f64,
}

impl Heightmap {
    pub fn empty(bin: BinGeometry, resolution: f64) -> Result<Self, HeightmapError> {
        bin.validate()?;
        if !(resolution > 0.0) {
            return Err(HeightmapError::InvalidResolution(resolution));
        }
        let (rows, cols) = bin.grid_dims(resolution);
        Ok(Self {
            color: Grid::new(rows, cols, [0, 0, 0]),
            height: Grid::new(rows, cols, 0.0),
            resolution,
            bin,
            known_mask: Grid::new(rows, cols, false),
            rotation: 0.0,
        })
    }

    pub fn rows(&self) -> usize {
        self.height.rows()
    }

    pub fn cols(&self) -> usize {
        self.height.cols()
    }

    pub fn dims(&self) -> (usize, usize) {
        self.height.dims()
    }

    /// World position of a pixel's column top.
    pub fn pixel_to_world(&self, row: usize, col: usize) -> Result<Point3<f64>, HeightmapError> {
        let h = *self.height.get(row, col).ok_or(HeightmapError::OutOfBounds {
            row,
            col,
            rows: self.rows(),
            cols: self.cols(),
        })?;
        Ok(self.bin.origin_point()
            + Vector3::new(col as f64 * self.resolution, row as f64 * self.resolution, h))
    }

    /// Pixel whose column contains world `(x, y)`, if inside the map.
    pub fn world_to_pixel(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        let c = ((x - self.bin.origin[0]) / self.resolution).round();
        let r = ((y - self.bin.origin[1]) / self.resolution).round();
        (c >= 0.0 && r >= 0.0 && (c as usize) < self.cols() && (r as usize) < self.rows())
            .then_some((r as usize, c as usize))
    }

    /// Crops a centered window; with same-parity sizes the crop is an exact
    /// inverse of the padding added by [`rotate_heightmap`].
    pub fn crop_center(&self, rows: usize, cols: usize) -> Heightmap {
        let r0 = (self.rows().saturating_sub(rows)) / 2;
        let c0 = (self.cols().saturating_sub(cols)) / 2;
        let rows = rows.min(self.rows());
        let cols = cols.min(self.cols());
        Heightmap {
            color: Grid::from_fn(rows, cols, |r, c| self.color[(r + r0, c + c0)]),
            height: Grid::from_fn(rows, cols, |r, c| self.height[(r + r0, c + c0)]),
            known_mask: Grid::from_fn(rows, cols, |r, c| self.known_mask[(r + r0, c + c0)]),
            ..self.clone()
        }
    }
}

/// Gripper angles `i * pi / n`; grasps are symmetric under half turns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RotationSet {
    pub angles: Vec<f64>,
}

impl RotationSet {
    pub fn new(n: usize) -> Self {
        Self {
            angles: (0..n).map(|i| i as f64 * PI / n as f64).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.angles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.angles.is_empty()
    }

    /// Index of the angle closest to `angle` modulo pi.
    pub fn nearest(&self, angle: f64) -> usize {
        let n = self.len() as f64;
        ((angle.rem_euclid(PI) / (PI / n)).round() as usize) % self.len()
    }
}

impl Default for RotationSet {
    fn default() -> Self {
        Self::new(DEFAULT_ROTATIONS)
    }
}

/// Fuses registered clouds into a heightmap: each column keeps its topmost
/// point (height and color). Points outside the bin footprint are ignored.
pub fn build_heightmap(
    clouds: &[PointCloud],
    bin: BinGeometry,
    resolution: f64,
) -> Result<Heightmap, HeightmapError> {
    let mut hm = Heightmap::empty(bin, resolution)?;
    let mut any = false;
    for cloud in clouds {
        for (p, &color) in cloud.points.iter().zip(&cloud.colors) {
            let Some((r, c)) = hm.world_to_pixel(p.x, p.y) else {
                continue;
            };
            any = true;
            let h = (p.z - bin.origin[2]).max(0.0);
            let i = hm.height.linear(r, c);
            let known = &mut hm.known_mask.data_mut()[i];
            let cur_h = hm.height.data()[i];
            let cur_c = hm.color.data()[i];
            // ties on height resolved by color so input order never matters
            if !*known || h > cur_h || (h == cur_h && color > cur_c) {
                *known = true;
                hm.height.data_mut()[i] = h;
                hm.color.data_mut()[i] = color;
            }
        }
    }
    if !any {
        warn!("no points inside the bin; heightmap is empty");
    }
    Ok(hm)
}

/// Foreground of a heightmap against one of the empty bin. A column missing
/// in the scene but observed in the empty bin counts as foreground (an object
/// without depth returns).
pub fn heightmap_foreground(
    scene: &Heightmap,
    empty: &Heightmap,
    params: BackgroundParams,
) -> Result<Mask, HeightmapError> {
    if scene.dims() != empty.dims() || scene.resolution != empty.resolution {
        return Err(HeightmapError::Mismatch);
    }
    Ok(Grid::from_fn(scene.rows(), scene.cols(), |r, c| {
        let (ks, ke) = (scene.known_mask[(r, c)], empty.known_mask[(r, c)]);
        match (ks, ke) {
            (false, true) => true,
            (false, false) => false,
            (true, false) => scene.height[(r, c)] > params.depth_tol,
            (true, true) => {
                (scene.height[(r, c)] - empty.height[(r, c)]).abs() > params.depth_tol
                    || color_distance(scene.color[(r, c)], empty.color[(r, c)]) > params.color_tol
            }
        }
    }))
}

/// Closes one-pixel sampling seams: an unknown pixel whose two horizontal
/// or two vertical neighbours are known takes their mean height (and the
/// color of the first) and becomes known. Single pass, reads the input only.
pub fn close_sampling_gaps(hm: &Heightmap) -> Heightmap {
    let mut out = hm.clone();
    let (rows, cols) = hm.dims();
    for r in 0..rows {
        for c in 0..cols {
            if hm.known_mask[(r, c)] {
                continue;
            }
            let mut sum = 0.0;
            let mut n = 0;
            let mut color = None;
            let pairs = [
                (r.checked_sub(1).map(|r0| (r0, c)), (r + 1 < rows).then_some((r + 1, c))),
                (c.checked_sub(1).map(|c0| (r, c0)), (c + 1 < cols).then_some((r, c + 1))),
            ];
            for (a, b) in pairs {
                if let (Some(a), Some(b)) = (a, b) {
                    if hm.known_mask[a] && hm.known_mask[b] {
                        sum += hm.height[a] + hm.height[b];
                        n += 2;
                        color.get_or_insert(hm.color[a]);
                    }
                }
            }
            if let Some(color) = color {
                out.height[(r, c)] = sum / n as f64;
                out.color[(r, c)] = color;
                out.known_mask[(r, c)] = true;
            }
        }
    }
    out
}

/// Gives unknown foreground columns a synthetic height. Known columns and
/// background are untouched; `known_mask` still marks synthesized pixels.
pub fn fill_missing_heights(hm: &Heightmap, foreground: &Mask, synthetic_height: f64) -> Heightmap {
    let mut out = hm.clone();
    for i in 0..out.height.len() {
        if !out.known_mask.data()[i] && foreground.data().get(i).copied().unwrap_or(false) {
            out.height.data_mut()[i] = synthetic_height;
        }
    }
    out
}

/// Rotates the map about its center by `angle` (radians, counter-clockwise in
/// the (col, row) plane). Exact index permutation for multiples of 90°;
/// otherwise bilinear for height/color and nearest for the mask on a canvas
/// padded to hold the whole rotated map.
pub fn rotate_heightmap(hm: &Heightmap, angle: f64) -> Heightmap {
    let a = angle.rem_euclid(TAU);
    let quarter = a / FRAC_PI_2;
    let k = quarter.round();
    if (quarter - k).abs() < 1e-12 {
        let mut out = hm.clone();
        for _ in 0..(k as usize % 4) {
            out = rot90(&out);
        }
        out.rotation = hm.rotation + angle;
        return out;
    }
    rotate_bilinear(hm, a, angle)
}

/// One counter-clockwise quarter turn: `out[r'][c'] = in[H-1-c'][r']`.
fn rot90(hm: &Heightmap) -> Heightmap {
    let (h, w) = hm.dims();
    let pick = |rp: usize, cp: usize| (h - 1 - cp, rp);
    Heightmap {
        color: Grid::from_fn(w, h, |r, c| hm.color[pick(r, c)]),
        height: Grid::from_fn(w, h, |r, c| hm.height[pick(r, c)]),
        known_mask: Grid::from_fn(w, h, |r, c| hm.known_mask[pick(r, c)]),
        ..hm.clone()
    }
}

fn padded_extent(along: usize, across: usize, cos: f64, sin: f64) -> usize {
    let span = (along as f64 - 1.0) * cos.abs() + (across as f64 - 1.0) * sin.abs();
    let mut n = (span - 1e-9).ceil() as usize + 1;
    if n % 2 != along % 2 {
        n += 1;
    }
    n.max(along % 2)
}

fn rotate_bilinear(hm: &Heightmap, a: f64, angle: f64) -> Heightmap {
    let (h, w) = hm.dims();
    let (s, c) = a.sin_cos();
    let wo = padded_extent(w, h, c, s);
    let ho = padded_extent(h, w, c, s);
    let (cx, cy) = ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);
    let (cxo, cyo) = ((wo as f64 - 1.0) / 2.0, (ho as f64 - 1.0) / 2.0);
    let mut color = Grid::new(ho, wo, [0u8; 3]);
    let mut height = Grid::new(ho, wo, 0.0);
    let mut known = Grid::new(ho, wo, false);
    let eps = 1e-9;
    for r in 0..ho {
        for col in 0..wo {
            let (dx, dy) = (col as f64 - cxo, r as f64 - cyo);
            // inverse rotation back into the source map
            let x = c * dx + s * dy + cx;
            let y = -s * dx + c * dy + cy;
            if x < -eps || y < -eps || x > w as f64 - 1.0 + eps || y > h as f64 - 1.0 + eps {
                continue;
            }
            let x = x.clamp(0.0, w as f64 - 1.0);
            let y = y.clamp(0.0, h as f64 - 1.0);
            let (x0, y0) = (x.floor() as usize, y.floor() as usize);
            let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
            let (fx, fy) = (x - x0 as f64, y - y0 as f64);
            let wts = [
                (y0, x0, (1.0 - fx) * (1.0 - fy)),
                (y0, x1, fx * (1.0 - fy)),
                (y1, x0, (1.0 - fx) * fy),
                (y1, x1, fx * fy),
            ];
            let mut hv = 0.0;
            let mut cv = [0.0; 3];
            for &(yy, xx, wt) in &wts {
                hv += wt * hm.height[(yy, xx)];
                let px = hm.color[(yy, xx)];
                for k in 0..3 {
                    cv[k] += wt * px[k] as f64;
                }
            }
            height[(r, col)] = hv;
            color[(r, col)] = [cv[0].round() as u8, cv[1].round() as u8, cv[2].round() as u8];
            known[(r, col)] = hm.known_mask[(y.round() as usize, x.round() as usize)];
        }
    }
    Heightmap {
        color,
        height,
        known_mask: known,
        resolution: hm.resolution,
        bin: hm.bin,
        rotation: hm.rotation + angle,
    }
}
