use std::cmp::Ordering;

use nalgebra::{Point3, Vector3};
use serde::{Deserialize, Serialize};

use super::grasp::GraspTaps;
use super::{measure_grasp, AffordanceError, AffordanceMap, GripperParams, MapKind, MapSource, PrimitiveKind};
use crate::geometry::{PointCloud, SourcePixel};
use crate::grid::{Grid, Mask};
use crate::heightmap::Heightmap;

pub const DEFAULT_DOWN_ANGLE_DEG: f64 = 40.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProposalParams {
    /// Largest angle between a suction normal and +z that still counts as
    /// suction-down (rad).
    pub down_angle: f64,
    pub gripper: GripperParams,
}

impl Default for ProposalParams {
    fn default() -> Self {
        Self {
            down_angle: DEFAULT_DOWN_ANGLE_DEG.to_radians(),
            gripper: GripperParams::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SuctionProposal {
    pub point: Point3<f64>,
    pub normal: Vector3<f64>,
    pub affordance: f64,
    pub primitive: PrimitiveKind,
    pub point_index: usize,
    pub source: Option<SourcePixel>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraspProposal {
    /// Between the fingers, at the pixel's surface height.
    pub midpoint: Point3<f64>,
    /// Closing-axis angle from the heightmap x-axis, in `[0, pi)`.
    pub angle: f64,
    pub width: f64,
    pub affordance: f64,
    pub primitive: PrimitiveKind,
    pub row: usize,
    pub col: usize,
    pub angle_index: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Proposal {
    Suction(SuctionProposal),
    Grasp(GraspProposal),
}

impl Proposal {
    pub fn primitive(&self) -> PrimitiveKind {
        match self {
            Proposal::Suction(s) => s.primitive,
            Proposal::Grasp(g) => g.primitive,
        }
    }

    pub fn affordance(&self) -> f64 {
        match self {
            Proposal::Suction(s) => s.affordance,
            Proposal::Grasp(g) => g.affordance,
        }
    }

    pub fn set_affordance(&mut self, value: f64) {
        match self {
            Proposal::Suction(s) => s.affordance = value,
            Proposal::Grasp(g) => g.affordance = value,
        }
    }

    pub fn position(&self) -> Point3<f64> {
        match self {
            Proposal::Suction(s) => s.point,
            Proposal::Grasp(g) => g.midpoint,
        }
    }
}

impl From<SuctionProposal> for Proposal {
    fn from(s: SuctionProposal) -> Self {
        Proposal::Suction(s)
    }
}

impl From<GraspProposal> for Proposal {
    fn from(g: GraspProposal) -> Self {
        Proposal::Grasp(g)
    }
}

/// Per-point foreground flags from per-frame pixel masks. Points without a
/// source pixel, or from frames without a mask, count as foreground.
pub fn foreground_points(cloud: &PointCloud, masks: &[Mask]) -> Vec<bool> {
    if cloud.sources.is_empty() {
        return vec![true; cloud.len()];
    }
    cloud
        .sources
        .iter()
        .map(|s| {
            masks
                .get(s.frame as usize)
                .and_then(|m| m.get(s.row as usize, s.col as usize).copied())
                .unwrap_or(true)
        })
        .collect()
}

/// Suction proposals for every foreground point with a valid normal, ranked
/// by affordance (ties: lowest point index).
pub fn make_suction_proposals(
    cloud: &PointCloud,
    affordances: &[f64],
    foreground: &[bool],
    down_angle: f64,
) -> Result<Vec<SuctionProposal>, AffordanceError> {
    let normals = cloud.normals.as_ref().ok_or(AffordanceError::MissingNormals)?;
    if affordances.len() != cloud.len() || foreground.len() != cloud.len() {
        return Err(AffordanceError::DimensionMismatch {
            expected: (cloud.len(), 1),
            got: (affordances.len().min(foreground.len()), 1),
        });
    }
    let cos_down = down_angle.cos();
    let mut out: Vec<SuctionProposal> = (0..cloud.len())
        .filter(|&i| foreground[i])
        .filter_map(|i| {
            let n = normals[i]?;
            let primitive = if n.z >= cos_down {
                PrimitiveKind::SuctionDown
            } else {
                PrimitiveKind::SuctionSide
            };
            Some(SuctionProposal {
                point: cloud.points[i],
                normal: n,
                affordance: affordances[i].clamp(0.0, 1.0),
                primitive,
                point_index: i,
                source: cloud.sources.get(i).copied(),
            })
        })
        .collect();
    out.sort_by(|a, b| desc(a.affordance, b.affordance).then(a.point_index.cmp(&b.point_index)));
    Ok(out)
}

/// Grasp proposals from per-angle maps (one per rotation, in order). Width
/// comes from the same profile the baseline scores; pixels whose profile is
/// not a valid grasp (possible with learned maps) get the full opening.
/// Pixels with zero affordance or outside `foreground` are dropped.
pub fn make_grasp_proposals(
    hm: &Heightmap,
    maps: &[AffordanceMap],
    foreground: Option<&Mask>,
    gripper: GripperParams,
) -> Result<Vec<GraspProposal>, AffordanceError> {
    if maps.is_empty() {
        return Ok(Vec::new());
    }
    let taps = GraspTaps::new(maps.len(), hm.resolution, gripper)?;
    let mut out = Vec::new();
    for (a, map) in maps.iter().enumerate() {
        if map.kind != MapKind::Grasp {
            return Err(AffordanceError::Invalid(format!("map {a} is not a grasp map")));
        }
        if map.dims() != hm.dims() {
            return Err(AffordanceError::DimensionMismatch { expected: hm.dims(), got: map.dims() });
        }
        let angle = map.angle.unwrap_or(a as f64 * std::f64::consts::PI / maps.len() as f64);
        for (r, c, &v) in map.values.indexed() {
            if v <= 0.0 || foreground.is_some_and(|m| !m[(r, c)]) {
                continue;
            }
            let width = measure_grasp(&hm.height, &taps, r, c, a)
                .map_or(gripper.max_opening, |m| (m.width + gripper.width_clearance).min(gripper.max_opening));
            let midpoint = hm.pixel_to_world(r, c).expect("in bounds");
            let primitive = if hm.bin.wall_distance(midpoint.x, midpoint.y) < hm.bin.wall_margin {
                PrimitiveKind::FlushGrasp
            } else {
                PrimitiveKind::GraspDown
            };
            out.push(GraspProposal {
                midpoint,
                angle,
                width,
                affordance: v as f64,
                primitive,
                row: r,
                col: c,
                angle_index: a,
            });
        }
    }
    let cols = hm.cols();
    out.sort_by(|a, b| {
        desc(a.affordance, b.affordance)
            .then((a.row * cols + a.col).cmp(&(b.row * cols + b.col)))
            .then(a.angle_index.cmp(&b.angle_index))
    });
    Ok(out)
}

/// Looks up each point's affordance in the map of its source frame.
pub fn point_affordances_from_maps(cloud: &PointCloud, maps: &[AffordanceMap]) -> Result<Vec<f64>, AffordanceError> {
    if cloud.sources.len() != cloud.len() {
        return Err(AffordanceError::Invalid("cloud has no source pixels".into()));
    }
    cloud
        .sources
        .iter()
        .map(|s| {
            let map = maps
                .get(s.frame as usize)
                .ok_or_else(|| AffordanceError::Invalid(format!("no map for frame {}", s.frame)))?;
            map.values
                .get(s.row as usize, s.col as usize)
                .map(|&v| v as f64)
                .ok_or(AffordanceError::DimensionMismatch {
                    expected: (s.row as usize + 1, s.col as usize + 1),
                    got: map.dims(),
                })
        })
        .collect()
}

/// Rasterizes per-point suction affordances back onto one frame's pixels.
pub fn suction_map_for_frame(cloud: &PointCloud, values: &[f64], frame: u32, rows: usize, cols: usize) -> AffordanceMap {
    let mut grid = Grid::new(rows, cols, 0.0f32);
    for (s, &v) in cloud.sources.iter().zip(values) {
        if s.frame == frame {
            if let Some(cell) = grid.get(s.row as usize, s.col as usize) {
                let v = (v.clamp(0.0, 1.0) as f32).max(*cell);
                grid[(s.row as usize, s.col as usize)] = v;
            }
        }
    }
    AffordanceMap {
        values: grid,
        kind: MapKind::Suction,
        angle: None,
        source: MapSource::Baseline,
    }
}

fn desc(a: f64, b: f64) -> Ordering {
    b.total_cmp(&a)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::heightmap::{BinGeometry, RotationSet};
    use crate::synth::{Scene, SceneBox};

    fn cloud_with_normals(normals: Vec<Vector3<f64>>) -> PointCloud {
        let n = normals.len();
        let mut c = PointCloud::from_points((0..n).map(|i| Point3::new(i as f64 * 0.01, 0.0, 0.0)).collect(), Point3::new(0.0, 0.0, 1.0));
        c.normals = Some(normals.into_iter().map(Some).collect());
        c
    }

    #[test]
    fn suction_primitive_classification() {
        let t = 60f64.to_radians();
        let cloud = cloud_with_normals(vec![Vector3::z(), Vector3::new(t.sin(), 0.0, t.cos())]);
        let props = make_suction_proposals(&cloud, &[0.5, 0.5], &[true, true], 40f64.to_radians()).unwrap();
        assert_eq!(props[0].primitive, PrimitiveKind::SuctionDown);
        assert_eq!(props[1].primitive, PrimitiveKind::SuctionSide);
        assert_eq!(props[0].point_index, 0);
    }

    #[test]
    fn background_points_dropped_and_ties_broken_by_index() {
        let cloud = cloud_with_normals(vec![Vector3::z(); 4]);
        let props = make_suction_proposals(&cloud, &[0.2, 0.9, 0.9, 0.3], &[true; 4], 0.7).unwrap();
        let order: Vec<_> = props.iter().map(|p| p.point_index).collect();
        assert_eq!(order, vec![1, 2, 3, 0]);
        let none = make_suction_proposals(&cloud, &[0.2, 0.9, 0.9, 0.3], &[false; 4], 0.7).unwrap();
        assert!(none.is_empty());
    }

    #[test]
    fn grasp_primitive_by_wall_distance_and_width() {
        let bin = BinGeometry::new(Point3::origin(), 0.3, 0.2, 0.03).unwrap();
        let mut s = Scene::empty(0.0);
        s.boxes.push(SceneBox::upright(0.151, 0.101, 0.0, Vector3::new(0.04, 0.12, 0.05), 0.0, [9, 9, 9]));
        let hm = s.render_heightmap(bin, 0.002);
        let rs = RotationSet::default();
        let gripper = GripperParams::default();
        let maps = super::super::grasp_baseline(&hm, &rs, gripper).unwrap();
        let props = make_grasp_proposals(&hm, &maps, None, gripper).unwrap();
        let top = props[0];
        assert_eq!(top.primitive, PrimitiveKind::GraspDown);
        assert!((top.width - (0.04 + gripper.width_clearance)).abs() <= 0.002 + 1e-12, "{}", top.width);
        assert!(props.windows(2).all(|w| w[0].affordance >= w[1].affordance));
        assert!(props.iter().all(|p| p.width > 0.0 && p.width <= gripper.max_opening));

        // sparse learned map: 1 cm from the wall is flush
        let mut flat = maps.clone();
        for m in flat.iter_mut() {
            m.values = Grid::new(hm.rows(), hm.cols(), 0.0);
        }
        flat[0].values[(50, 5)] = 0.7;
        flat[0].values[(50, 75)] = 0.6;
        let props = make_grasp_proposals(&hm, &flat, None, gripper).unwrap();
        assert_eq!(props.len(), 2);
        assert_eq!(props[0].primitive, PrimitiveKind::FlushGrasp);
        assert_eq!(props[1].primitive, PrimitiveKind::GraspDown);
        assert_eq!(props[0].width, gripper.max_opening);
    }

    #[test]
    fn map_lookup_round_trip() {
        let mut cloud = cloud_with_normals(vec![Vector3::z(); 3]);
        cloud.sources = vec![
            SourcePixel { frame: 0, row: 0, col: 1 },
            SourcePixel { frame: 1, row: 1, col: 0 },
            SourcePixel { frame: 0, row: 1, col: 1 },
        ];
        let m0 = suction_map_for_frame(&cloud, &[0.25, 0.5, 0.75], 0, 2, 2);
        let m1 = suction_map_for_frame(&cloud, &[0.25, 0.5, 0.75], 1, 2, 2);
        let back = point_affordances_from_maps(&cloud, &[m0, m1]).unwrap();
        assert_eq!(back, vec![0.25, 0.5, 0.75]);
        let masks = vec![Grid::new(2, 2, false), Grid::new(2, 2, true)];
        assert_eq!(foreground_points(&cloud, &masks), vec![false, true, false]);
    }
}
