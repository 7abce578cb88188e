//! Dense affordance maps for the four picking primitives, from the geometric
//! baselines or from learned-map files, and their conversion into ranked
//! pick proposals.

mod grasp;
mod learned;
pub mod pipeline;
mod proposals;
mod suction;

pub use grasp::{grasp_baseline, measure_grasp, GraspMeasure, GraspTaps, GripperParams};
pub use learned::{load_learned_map, read_learned_map, save_learned_map, write_learned_map, LEARNED_MAP_VERSION};
pub use proposals::{
    foreground_points, make_grasp_proposals, make_suction_proposals, point_affordances_from_maps,
    suction_map_for_frame, GraspProposal, Proposal, ProposalParams, SuctionProposal,
    DEFAULT_DOWN_ANGLE_DEG,
};
pub use suction::{suction_baseline, SuctionParams, DEFAULT_SUCTION_BETA};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::Grid;

/// Picking primitive. The derived order (sd < ss < gd < fg) is the planner's
/// tie-break order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PrimitiveKind {
    #[serde(rename = "sd")]
    SuctionDown,
    #[serde(rename = "ss")]
    SuctionSide,
    #[serde(rename = "gd")]
    GraspDown,
    #[serde(rename = "fg")]
    FlushGrasp,
}

impl PrimitiveKind {
    pub const ALL: [PrimitiveKind; 4] = [
        PrimitiveKind::SuctionDown,
        PrimitiveKind::SuctionSide,
        PrimitiveKind::GraspDown,
        PrimitiveKind::FlushGrasp,
    ];

    pub fn code(self) -> &'static str {
        match self {
            PrimitiveKind::SuctionDown => "sd",
            PrimitiveKind::SuctionSide => "ss",
            PrimitiveKind::GraspDown => "gd",
            PrimitiveKind::FlushGrasp => "fg",
        }
    }

    pub fn from_code(code: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.code() == code)
    }

    pub fn is_suction(self) -> bool {
        matches!(self, PrimitiveKind::SuctionDown | PrimitiveKind::SuctionSide)
    }
}

impl std::fmt::Display for PrimitiveKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.code())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MapKind {
    Suction,
    Grasp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MapSource {
    Baseline,
    LearnedFile,
}

/// Per-pixel affordances in `[0, 1]`. Grasp maps carry the gripper angle.
#[derive(Debug, Clone, PartialEq)]
pub struct AffordanceMap {
    pub values: Grid<f32>,
    pub kind: MapKind,
    pub angle: Option<f64>,
    pub source: MapSource,
}

impl AffordanceMap {
    pub fn validate(&self) -> Result<(), AffordanceError> {
        if (self.kind == MapKind::Grasp) != self.angle.is_some() {
            return Err(AffordanceError::Invalid("angle must be present iff the map is a grasp map".into()));
        }
        if let Some(v) = self.values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(AffordanceError::Invalid(format!("value {v} outside [0, 1]")));
        }
        Ok(())
    }

    pub fn dims(&self) -> (usize, usize) {
        self.values.dims()
    }

    /// Highest value and its pixel; ties go to the lowest linear index.
    pub fn argmax(&self) -> Option<((usize, usize), f32)> {
        let mut best: Option<((usize, usize), f32)> = None;
        for (r, c, &v) in self.values.indexed() {
            if best.is_none_or(|(_, b)| v > b) {
                best = Some(((r, c), v));
            }
        }
        best
    }
}

#[derive(Debug, Error)]
pub enum AffordanceError {
    #[error("invalid affordance map: {0}")]
    Invalid(String),
    #[error("map is {got:?}, expected {expected:?}")]
    DimensionMismatch { expected: (usize, usize), got: (usize, usize) },
    #[error("non-finite value at index {0}")]
    NonFinite(usize),
    #[error("malformed affordance file: {0}")]
    Format(String),
    #[error("cloud has no normals")]
    MissingNormals,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn primitive_order_and_codes() {
        let mut v = vec![PrimitiveKind::FlushGrasp, PrimitiveKind::SuctionSide, PrimitiveKind::GraspDown, PrimitiveKind::SuctionDown];
        v.sort();
        assert_eq!(v, PrimitiveKind::ALL);
        for k in PrimitiveKind::ALL {
            assert_eq!(PrimitiveKind::from_code(k.code()), Some(k));
            assert_eq!(serde_json::to_string(&k).unwrap(), format!("\"{}\"", k.code()));
        }
        assert_eq!(PrimitiveKind::from_code("xx"), None);
    }

    #[test]
    fn map_validation() {
        let mut m = AffordanceMap {
            values: Grid::new(2, 2, 0.5),
            kind: MapKind::Suction,
            angle: None,
            source: MapSource::Baseline,
        };
        m.validate().unwrap();
        m.angle = Some(0.0);
        assert!(m.validate().is_err());
        m.kind = MapKind::Grasp;
        m.validate().unwrap();
        m.values[(1, 1)] = 1.5;
        assert!(m.validate().is_err());
    }
}
