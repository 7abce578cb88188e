//! Python bindings: dataset synthesis, affordance inference, evaluation,
//! simulated stowing and the recognition benchmark. Structured results come
//! back as plain dicts and lists.

use std::path::Path;

use graspkit::affordance::pipeline::PipelineParams;
use graspkit::affordance::Proposal;
use graspkit::evaluation::{
    evaluate_dataset, grasp_matches as grasp_match, load_label_dataset, observation_affordances, read_grasp_labels,
    read_scene_observation, read_suction_mask, run_1v20_benchmark, write_suction_mask, write_synthetic_dataset, EvalError,
    GraspLabel, LabeledSceneParams, Method, Polarity, RandomPipeline, SingleModelPipeline, Split, SuctionLabel,
    TwoStagePipeline,
};
use graspkit::grid::Grid;
use graspkit::planner::{run_stow_episode, BoxFaceSource, HeightmapSource, LogisticSuccess, PlannerConfig, ProposalSource, SimScene};
use graspkit::recognition::synthetic::{benchmark_train_config, SyntheticWorld, WorldParams, BENCHMARK_LAMBDA};
use pyo3::exceptions::{PyFileNotFoundError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

#[derive(Debug, PartialEq)]
enum Failure {
    NotFound(String),
    Invalid(String),
    Internal(String),
}

impl From<EvalError> for Failure {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Missing(p) => Failure::NotFound(p.display().to_string()),
            e @ EvalError::Format(_) => Failure::Invalid(e.to_string()),
            e => Failure::Internal(e.to_string()),
        }
    }
}

impl From<Failure> for PyErr {
    fn from(f: Failure) -> Self {
        match f {
            Failure::NotFound(m) => PyFileNotFoundError::new_err(m),
            Failure::Invalid(m) => PyValueError::new_err(m),
            Failure::Internal(m) => PyRuntimeError::new_err(m),
        }
    }
}

type Result<T> = std::result::Result<T, Failure>;

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    serde_json::to_string(value).map_err(|e| Failure::Internal(e.to_string()))
}

fn parse_method(method: &str) -> Result<Method> {
    match method {
        "baseline" => Ok(Method::Baseline),
        "learned" => Ok(Method::Learned),
        other => Err(Failure::Invalid(format!("method must be 'baseline' or 'learned', got {other:?}"))),
    }
}

fn parse_split(split: &str) -> Result<Split> {
    match split {
        "train" => Ok(Split::Train),
        "test" => Ok(Split::Test),
        "all" => Ok(Split::All),
        other => Err(Failure::Invalid(format!("split must be 'train', 'test' or 'all', got {other:?}"))),
    }
}

fn require_dir(path: &Path) -> Result<()> {
    if path.is_dir() { Ok(()) } else { Err(Failure::NotFound(format!("{} is not a directory", path.display()))) }
}

#[derive(Serialize)]
struct AffordanceResult {
    suction_count: usize,
    grasp_count: usize,
    ranked: Vec<Proposal>,
}

fn affordances_json(scene_dir: &Path, method: &str, top: Option<usize>) -> Result<String> {
    require_dir(scene_dir)?;
    let method = parse_method(method)?;
    let (stems, obs) = read_scene_observation(scene_dir)?;
    let aff = observation_affordances(&stems, &obs, scene_dir, method, &PipelineParams::default())?;
    let mut ranked: Vec<Proposal> = aff.suction.iter().copied().map(Proposal::Suction).chain(aff.grasp.iter().copied().map(Proposal::Grasp)).collect();
    ranked.sort_by(|a, b| b.affordance().total_cmp(&a.affordance()));
    ranked.truncate(top.unwrap_or(usize::MAX));
    to_json(&AffordanceResult { suction_count: aff.suction.len(), grasp_count: aff.grasp.len(), ranked })
}

fn evaluate_json(root: &Path, method: &str, split: &str) -> Result<String> {
    require_dir(root)?;
    let ds = load_label_dataset(root)?;
    to_json(&evaluate_dataset(&ds, parse_split(split)?, parse_method(method)?, &PipelineParams::default())?)
}

fn stow_json(objects: usize, seed: u64, time_limit: f64, config_json: Option<&str>, source: &str) -> Result<(String, String)> {
    let cfg: PlannerConfig = match config_json {
        Some(text) => serde_json::from_str(text).map_err(|e| Failure::Invalid(format!("planner config: {e}")))?,
        None => PlannerConfig::default(),
    };
    cfg.validate().map_err(|e| Failure::Invalid(e.to_string()))?;
    if time_limit.is_nan() || time_limit < 0.0 {
        return Err(Failure::Invalid(format!("time_limit must be non-negative, got {time_limit}")));
    }
    let source: Box<dyn ProposalSource> = match source {
        "heightmap" => Box::new(HeightmapSource::default()),
        "box" => Box::new(BoxFaceSource::default()),
        other => return Err(Failure::Invalid(format!("source must be 'heightmap' or 'box', got {other:?}"))),
    };
    let scene = SimScene::random(objects, &mut ChaCha8Rng::seed_from_u64(seed));
    let params = graspkit::planner::EpisodeParams { time_limit, ..Default::default() };
    let log = run_stow_episode(scene, source.as_ref(), &LogisticSuccess::default(), &cfg, params, seed);
    Ok((to_json(&log.summary())?, log.to_jsonl()))
}

fn benchmark_json(seed: u64, cases: usize) -> Result<String> {
    let set = SyntheticWorld::generate(WorldParams::default(), seed).features;
    let config = set.train_pipelines(benchmark_train_config(seed), BENCHMARK_LAMBDA).map_err(|e| Failure::Internal(e.to_string()))?;
    let cases = set.benchmark_cases(cases, 10, seed ^ 0x5eed).map_err(|e| Failure::Invalid(e.to_string()))?;
    let run = |p: &mut dyn graspkit::evaluation::RecognitionPipeline| run_1v20_benchmark(&cases, p).map_err(|e| Failure::Internal(e.to_string()));
    let rows = vec![
        run(&mut SingleModelPipeline { name: "N-net".into(), model: &config.nnet, catalog: &set.catalog })?,
        run(&mut SingleModelPipeline { name: "K-net".into(), model: &config.knet, catalog: &set.catalog })?,
        run(&mut TwoStagePipeline { config: &config, catalog: &set.catalog })?,
        run(&mut RandomPipeline::new(seed))?,
    ];
    to_json(&rows)
}

fn mask_rows(path: &Path) -> Result<Vec<Vec<u8>>> {
    if !path.is_file() {
        return Err(Failure::NotFound(path.display().to_string()));
    }
    let m = read_suction_mask(path)?;
    Ok((0..m.rows()).map(|r| (0..m.cols()).map(|c| m[(r, c)].to_byte()).collect()).collect())
}

fn write_mask_rows(path: &Path, rows: &[Vec<u8>]) -> Result<()> {
    let cols = rows.first().map_or(0, Vec::len);
    if cols == 0 || rows.iter().any(|r| r.len() != cols) {
        return Err(Failure::Invalid("mask rows must be non-empty and of equal length".into()));
    }
    let mut mask = Grid::new(rows.len(), cols, SuctionLabel::Neither);
    for (r, row) in rows.iter().enumerate() {
        for (c, &b) in row.iter().enumerate() {
            mask[(r, c)] = SuctionLabel::from_byte(b).ok_or_else(|| Failure::Invalid(format!("value {b} at ({r}, {c}) is not 0, 128 or 255")))?;
        }
    }
    Ok(write_suction_mask(path, &mask)?)
}

fn json_value<'py>(py: Python<'py>, text: &str) -> PyResult<Bound<'py, PyAny>> {
    py.import("json")?.call_method1("loads", (text,))
}

/// Writes `scenes` synthetic labelled scenes under `root`.
#[pyfunction]
#[pyo3(signature = (root, scenes = 5, seed = 0))]
fn synth_dataset(root: &str, scenes: usize, seed: u64) -> PyResult<()> {
    write_synthetic_dataset(Path::new(root), scenes, seed, &LabeledSceneParams::default()).map_err(Failure::from)?;
    Ok(())
}

/// Suction and grasp proposals of one scene directory, best first.
#[pyfunction]
#[pyo3(signature = (scene_dir, method = "baseline", top = None))]
fn scene_affordances<'py>(py: Python<'py>, scene_dir: &str, method: &str, top: Option<usize>) -> PyResult<Bound<'py, PyAny>> {
    let text = py.detach(|| affordances_json(Path::new(scene_dir), method, top))?;
    json_value(py, &text)
}

/// Top-1 / 1% / 5% / 10% precision table of a labelled dataset.
#[pyfunction]
#[pyo3(signature = (root, method = "baseline", split = "test"))]
fn evaluate<'py>(py: Python<'py>, root: &str, method: &str, split: &str) -> PyResult<Bound<'py, PyAny>> {
    let text = py.detach(|| evaluate_json(Path::new(root), method, split))?;
    json_value(py, &text)
}

/// Runs a simulated stow episode; returns `(summary, jsonl_log)`.
#[pyfunction]
#[pyo3(signature = (objects = 10, seed = 0, time_limit = 900.0, config_json = None, source = "heightmap"))]
fn stow_episode<'py>(
    py: Python<'py>,
    objects: usize,
    seed: u64,
    time_limit: f64,
    config_json: Option<&str>,
    source: &str,
) -> PyResult<(Bound<'py, PyAny>, String)> {
    let (summary, log) = py.detach(|| stow_json(objects, seed, time_limit, config_json, source))?;
    Ok((json_value(py, &summary)?, log))
}

/// 1-vs-20 recognition benchmark on a synthetic feature world.
#[pyfunction]
#[pyo3(signature = (seed = 0, cases = 200))]
fn recognition_benchmark<'py>(py: Python<'py>, seed: u64, cases: usize) -> PyResult<Bound<'py, PyAny>> {
    let text = py.detach(|| benchmark_json(seed, cases))?;
    json_value(py, &text)
}

/// Whether a grasp at `(row, col, angle)` matches a label within 4 px and 11.25 degrees.
#[pyfunction]
fn grasp_matches(row: usize, col: usize, angle: f64, label_row: usize, label_col: usize, label_angle: f64) -> bool {
    grasp_match(row, col, angle, &GraspLabel::new(label_row, label_col, label_angle, Polarity::Positive))
}

/// Suction label mask as rows of 0 / 128 / 255.
#[pyfunction]
fn read_mask(path: &str) -> PyResult<Vec<Vec<u8>>> {
    Ok(mask_rows(Path::new(path))?)
}

#[pyfunction]
fn write_mask(path: &str, rows: Vec<Vec<u8>>) -> PyResult<()> {
    Ok(write_mask_rows(Path::new(path), &rows)?)
}

/// Grasp labels as dicts with row, col, angle_rad and polarity.
#[pyfunction]
fn read_grasps<'py>(py: Python<'py>, path: &str) -> PyResult<Bound<'py, PyAny>> {
    let p = Path::new(path);
    if !p.is_file() {
        return Err(Failure::NotFound(path.to_string()).into());
    }
    let labels = read_grasp_labels(p).map_err(Failure::from)?;
    json_value(py, &to_json(&labels)?)
}

#[pymodule]
fn graspkit_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(synth_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(scene_affordances, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(stow_episode, m)?)?;
    m.add_function(wrap_pyfunction!(recognition_benchmark, m)?)?;
    m.add_function(wrap_pyfunction!(grasp_matches, m)?)?;
    m.add_function(wrap_pyfunction!(read_mask, m)?)?;
    m.add_function(wrap_pyfunction!(write_mask, m)?)?;
    m.add_function(wrap_pyfunction!(read_grasps, m)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parsers_reject_unknown_names() {
        assert_eq!(parse_method("learned"), Ok(Method::Learned));
        assert!(matches!(parse_method("deep"), Err(Failure::Invalid(_))));
        assert_eq!(parse_split("all"), Ok(Split::All));
        assert!(matches!(parse_split("val"), Err(Failure::Invalid(_))));
    }

    #[test]
    fn scene_round_trip_through_json() {
        let dir = tempfile::tempdir().unwrap();
        write_synthetic_dataset(dir.path(), 2, 1, &LabeledSceneParams::default()).unwrap();
        let aff: serde_json::Value = serde_json::from_str(&affordances_json(&dir.path().join("scene0000"), "baseline", Some(5)).unwrap()).unwrap();
        assert_eq!(aff["ranked"].as_array().unwrap().len(), 5);
        let table: serde_json::Value = serde_json::from_str(&evaluate_json(dir.path(), "baseline", "all").unwrap()).unwrap();
        assert_eq!(table["scenes"], 2);
        assert!(matches!(affordances_json(&dir.path().join("none"), "baseline", None), Err(Failure::NotFound(_))));
        assert!(matches!(affordances_json(&dir.path().join("scene0000"), "learned", None), Err(Failure::NotFound(_))));
    }

    #[test]
    fn masks_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.png");
        let rows = vec![vec![0, 128, 255], vec![255, 255, 0]];
        write_mask_rows(&path, &rows).unwrap();
        assert_eq!(mask_rows(&path).unwrap(), rows);
        assert!(matches!(write_mask_rows(&path, &[vec![0, 7]]), Err(Failure::Invalid(_))));
        assert!(matches!(write_mask_rows(&path, &[vec![0, 0], vec![0]]), Err(Failure::Invalid(_))));
    }

    #[test]
    fn stow_is_deterministic() {
        let a = stow_json(4, 2, 200.0, None, "box").unwrap();
        assert_eq!(a, stow_json(4, 2, 200.0, None, "box").unwrap());
        assert!(matches!(stow_json(4, 2, 200.0, Some("{\"suppression_radius\": -1}"), "box"), Err(Failure::Invalid(_))));
        assert!(matches!(stow_json(4, 2, 200.0, None, "camera"), Err(Failure::Invalid(_))));
    }
}
