//! Label formats, augmentation, and the affordance and recognition
//! benchmarks.

mod benchmark;
mod dataset;
mod labels;
mod metrics;
mod scenes;

use std::path::PathBuf;

use thiserror::Error;

pub use benchmark::{
    run_1v20_benchmark, BenchmarkCase, BenchmarkResult, BenchmarkTable, OraclePipeline, PipelineOutput, RandomPipeline,
    RecognitionPipeline, SingleModelPipeline, TwoStagePipeline,
};
pub use dataset::{
    evaluate_dataset, grasp_map_path, load_label_dataset, observation_affordances, read_labeled_scene, read_learned_maps, read_scene_observation,
    scene_affordances,
    split_names, stable_hash, suction_map_path, suction_mask_path, write_affordance_maps, write_labeled_scene,
    LabelDataset, LabeledScene, Method, SceneInfo, Split, BIN_FILE, EMPTY_DIR, GRASP_FILE, LEARNED_DIR,
};
pub use labels::{
    jitter_augment, read_grasp_labels, read_suction_mask, write_grasp_labels, write_suction_mask, GraspLabel, Polarity,
    SuctionLabel, SuctionLabelMask,
};
pub use metrics::{
    axis_angle_distance, grasp_counts, grasp_matches, grasp_outcome, grasp_precision, suction_counts, suction_precision,
    Counts, PrecisionCounts, PrecisionRow, PrecisionTable, TopSlice, MATCH_ANGLE_DEG, MATCH_PIXELS,
};
pub use scenes::{grasp_labels_for, random_scene, scene_name, synthetic_labeled_scene, write_synthetic_dataset, LabeledSceneParams};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("missing file {}", .0.display())]
    Missing(PathBuf),
    #[error("{0}")]
    Io(String),
    #[error("malformed input: {0}")]
    Format(String),
    #[error("suction proposal has no source pixel")]
    MissingSource,
    #[error(transparent)]
    Frame(#[from] crate::io::IoError),
    #[error(transparent)]
    Affordance(#[from] crate::affordance::AffordanceError),
    #[error(transparent)]
    Pipeline(#[from] crate::affordance::pipeline::PipelineError),
}
