//! graspkit: affordance-based grasping and cross-domain recognition toolkit.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod geometry;
pub mod grid;
pub mod io;
pub mod heightmap;
pub mod affordance;
pub mod synth;
pub mod planner;
pub mod recognition;
pub mod evaluation;
pub mod state_tracker;
