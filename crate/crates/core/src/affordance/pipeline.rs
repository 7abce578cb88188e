//! End-to-end scene processing: frames to cloud and heightmap, dense
//! affordance maps, and ranked suction and grasp proposals.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{
    foreground_points, grasp_baseline, make_grasp_proposals, make_suction_proposals, point_affordances_from_maps,
    suction_baseline, suction_map_for_frame, AffordanceError, AffordanceMap, GraspProposal, GripperParams, MapKind,
    SuctionParams, SuctionProposal, DEFAULT_DOWN_ANGLE_DEG,
};
use crate::geometry::{background_subtract, estimate_normals, project_frames, BackgroundParams, GeometryError, PointCloud, RgbdFrame};
use crate::grid::{Grid, Mask};
use crate::heightmap::{
    build_heightmap, close_sampling_gaps, fill_missing_heights, heightmap_foreground, BinGeometry, Heightmap, HeightmapError, RotationSet,
    DEFAULT_RESOLUTION, DEFAULT_ROTATIONS, SYNTHETIC_FILL_HEIGHT,
};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Heightmap(#[from] HeightmapError),
    #[error(transparent)]
    Affordance(#[from] AffordanceError),
    #[error("{0}")]
    Input(String),
}

/// One observation of a bin: registered scene frames and, optionally, frames
/// of the empty bin from the same cameras.
#[derive(Debug, Clone)]
pub struct SceneObservation {
    pub frames: Vec<RgbdFrame>,
    pub empty: Option<Vec<RgbdFrame>>,
    pub bin: BinGeometry,
    pub resolution: f64,
}

impl SceneObservation {
    pub fn new(frames: Vec<RgbdFrame>, empty: Option<Vec<RgbdFrame>>, bin: BinGeometry) -> Self {
        Self { frames, empty, bin, resolution: DEFAULT_RESOLUTION }
    }

    fn validate(&self) -> Result<(), PipelineError> {
        if self.frames.is_empty() {
            return Err(PipelineError::Input("scene has no frames".into()));
        }
        if let Some(e) = &self.empty {
            if e.len() != self.frames.len() {
                return Err(PipelineError::Input(format!(
                    "{} empty-bin frames for {} scene frames",
                    e.len(),
                    self.frames.len()
                )));
            }
        }
        self.bin.validate()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineParams {
    pub normal_radius: f64,
    pub suction_window: f64,
    pub suction_beta: f64,
    pub rotations: usize,
    pub gripper: GripperParams,
    /// Largest normal angle from +z for suction-down (rad).
    pub down_angle: f64,
    pub background: BackgroundParams,
    /// Height given to foreground columns with no depth return (m).
    pub fill_height: f64,
}

impl Default for PipelineParams {
    fn default() -> Self {
        Self {
            normal_radius: 0.01,
            suction_window: 0.01,
            suction_beta: super::DEFAULT_SUCTION_BETA,
            rotations: DEFAULT_ROTATIONS,
            gripper: GripperParams::default(),
            down_angle: DEFAULT_DOWN_ANGLE_DEG.to_radians(),
            background: BackgroundParams::default(),
            fill_height: SYNTHETIC_FILL_HEIGHT,
        }
    }
}

/// Learned maps for one scene: a suction map per frame and a grasp map per
/// rotation angle, on the heightmap grid.
#[derive(Debug, Clone)]
pub struct LearnedMaps {
    pub suction: Vec<AffordanceMap>,
    pub grasp: Vec<AffordanceMap>,
}

#[derive(Debug, Clone)]
pub struct SceneAffordances {
    /// Foreground points inside the bin, with normals.
    pub cloud: PointCloud,
    pub suction_values: Vec<f64>,
    /// Suction affordance rasterized onto each frame.
    pub suction_maps: Vec<AffordanceMap>,
    pub suction: Vec<SuctionProposal>,
    /// Fused heightmap with missing foreground columns filled.
    pub heightmap: Heightmap,
    pub foreground: Mask,
    pub grasp_maps: Vec<AffordanceMap>,
    pub grasp: Vec<GraspProposal>,
}

/// Per-frame pixel foreground, or `None` without empty-bin frames.
fn pixel_foreground(obs: &SceneObservation, params: &PipelineParams) -> Result<Option<Vec<Mask>>, PipelineError> {
    let Some(empty) = &obs.empty else {
        return Ok(None);
    };
    let masks = obs
        .frames
        .iter()
        .zip(empty)
        .map(|(s, e)| background_subtract(s, e, params.background))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Some(masks))
}

/// Cloud of scene points inside the bin footprint that are foreground: by
/// pixel differencing when empty frames exist, otherwise by rising above the
/// floor by more than the depth tolerance.
fn foreground_cloud(obs: &SceneObservation, masks: Option<&[Mask]>, params: &PipelineParams) -> Result<PointCloud, PipelineError> {
    let cloud = project_frames(&obs.frames)?;
    let fg = match masks {
        Some(m) => foreground_points(&cloud, m),
        None => vec![true; cloud.len()],
    };
    let b = &obs.bin;
    Ok(cloud.filter(|i| {
        let p = cloud.points[i];
        let inside = p.x >= b.origin[0] && p.x <= b.origin[0] + b.x_extent && p.y >= b.origin[1] && p.y <= b.origin[1] + b.y_extent;
        let raised = masks.is_some() || p.z - b.origin[2] > params.background.depth_tol;
        inside && raised && fg[i]
    }))
}

fn scene_heightmap(obs: &SceneObservation, params: &PipelineParams) -> Result<(Heightmap, Mask), PipelineError> {
    let scene = project_frames(&obs.frames)?;
    let hm = close_sampling_gaps(&build_heightmap(&[scene], obs.bin, obs.resolution)?);
    let fg = match &obs.empty {
        Some(empty) => {
            let e = close_sampling_gaps(&build_heightmap(&[project_frames(empty)?], obs.bin, obs.resolution)?);
            heightmap_foreground(&hm, &e, params.background)?
        }
        None => Grid::from_fn(hm.rows(), hm.cols(), |r, c| hm.known_mask[(r, c)] && hm.height[(r, c)] > params.background.depth_tol),
    };
    Ok((fill_missing_heights(&hm, &fg, params.fill_height), fg))
}

fn with_normals(cloud: PointCloud, radius: f64) -> Result<PointCloud, PipelineError> {
    if cloud.is_empty() {
        return Ok(PointCloud { normals: Some(Vec::new()), ..cloud });
    }
    Ok(estimate_normals(&cloud, radius)?)
}

/// Geometric baselines on a scene: normal-variance suction on the foreground
/// cloud and hill-profile grasping on the filled heightmap.
pub fn baseline_affordances(obs: &SceneObservation, params: &PipelineParams) -> Result<SceneAffordances, PipelineError> {
    obs.validate()?;
    let masks = pixel_foreground(obs, params)?;
    let cloud = with_normals(foreground_cloud(obs, masks.as_deref(), params)?, params.normal_radius)?;
    let suction_values = if cloud.is_empty() {
        Vec::new()
    } else {
        suction_baseline(&cloud, SuctionParams { window_radius: params.suction_window, beta: params.suction_beta })?
    };
    let (heightmap, foreground) = scene_heightmap(obs, params)?;
    let grasp_maps = grasp_baseline(&heightmap, &RotationSet::new(params.rotations), params.gripper)?;
    finish(obs, params, cloud, suction_values, None, heightmap, foreground, grasp_maps)
}

/// Proposals from externally produced maps. Suction maps must match each
/// frame's size and grasp maps the heightmap's.
pub fn learned_affordances(obs: &SceneObservation, params: &PipelineParams, maps: LearnedMaps) -> Result<SceneAffordances, PipelineError> {
    obs.validate()?;
    if maps.suction.len() != obs.frames.len() {
        return Err(PipelineError::Input(format!("{} suction maps for {} frames", maps.suction.len(), obs.frames.len())));
    }
    for (m, f) in maps.suction.iter().zip(&obs.frames) {
        if m.kind != MapKind::Suction {
            return Err(AffordanceError::Invalid("expected a suction map".into()).into());
        }
        if m.dims() != f.depth.dims() {
            return Err(AffordanceError::DimensionMismatch { expected: f.depth.dims(), got: m.dims() }.into());
        }
    }
    let masks = pixel_foreground(obs, params)?;
    let cloud = with_normals(foreground_cloud(obs, masks.as_deref(), params)?, params.normal_radius)?;
    let suction_values = point_affordances_from_maps(&cloud, &maps.suction)?;
    let (heightmap, foreground) = scene_heightmap(obs, params)?;
    finish(obs, params, cloud, suction_values, Some(maps.suction), heightmap, foreground, maps.grasp)
}

#[allow(clippy::too_many_arguments)]
fn finish(
    obs: &SceneObservation,
    params: &PipelineParams,
    cloud: PointCloud,
    suction_values: Vec<f64>,
    suction_maps: Option<Vec<AffordanceMap>>,
    heightmap: Heightmap,
    foreground: Mask,
    grasp_maps: Vec<AffordanceMap>,
) -> Result<SceneAffordances, PipelineError> {
    let all = vec![true; cloud.len()];
    let suction = make_suction_proposals(&cloud, &suction_values, &all, params.down_angle)?;
    let suction_maps = suction_maps.unwrap_or_else(|| {
        obs.frames
            .iter()
            .enumerate()
            .map(|(i, f)| suction_map_for_frame(&cloud, &suction_values, i as u32, f.depth.rows(), f.depth.cols()))
            .collect()
    });
    let grasp = make_grasp_proposals(&heightmap, &grasp_maps, Some(&foreground), params.gripper)?;
    Ok(SceneAffordances { cloud, suction_values, suction_maps, suction, heightmap, foreground, grasp_maps, grasp })
}
