//! Labelled scene datasets on disk.
//!
//! ```text
//! root/<scene>/bin.json           bin geometry and heightmap resolution
//! root/<scene>/NNN.{color.png, depth.png, meta.json}
//! root/<scene>/NNN.suction.png    suction labels for frame NNN
//! root/<scene>/grasps.json        grasp labels on the heightmap
//! root/<scene>/empty/NNN.*        optional empty-bin frames
//! root/<scene>/learned/           optional maps: suction_NNN.affd, grasp_AA.affd
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{
    read_grasp_labels, read_suction_mask, write_grasp_labels, write_suction_mask, EvalError, GraspLabel, PrecisionCounts,
    PrecisionTable, SuctionLabelMask,
};
use crate::affordance::pipeline::{baseline_affordances, learned_affordances, LearnedMaps, PipelineParams, SceneAffordances, SceneObservation};
use crate::affordance::{load_learned_map, save_learned_map, AffordanceMap};
use crate::heightmap::{BinGeometry, DEFAULT_RESOLUTION};
use crate::io::{frame_stems, read_frame, write_frame};

pub const BIN_FILE: &str = "bin.json";
pub const GRASP_FILE: &str = "grasps.json";
pub const EMPTY_DIR: &str = "empty";
pub const LEARNED_DIR: &str = "learned";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneInfo {
    #[serde(flatten)]
    pub bin: BinGeometry,
    #[serde(default = "default_resolution")]
    pub resolution: f64,
}

fn default_resolution() -> f64 {
    DEFAULT_RESOLUTION
}

pub fn suction_mask_path(dir: &Path, stem: &str) -> PathBuf {
    dir.join(format!("{stem}.suction.png"))
}

/// 64-bit FNV-1a.
pub fn stable_hash(name: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Deterministic 4:1 train/test split: items are ordered by stable hash
/// (then name) and every fifth goes to test.
pub fn split_names(names: &[String]) -> (Vec<String>, Vec<String>) {
    let mut keyed: Vec<(u64, &String)> = names.iter().map(|n| (stable_hash(n), n)).collect();
    keyed.sort();
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (i, (_, n)) in keyed.into_iter().enumerate() {
        if i % 5 == 4 { test.push(n.clone()) } else { train.push(n.clone()) }
    }
    train.sort();
    test.sort();
    (train, test)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
    All,
}

#[derive(Debug, Clone)]
pub struct LabeledScene {
    pub name: String,
    pub stems: Vec<String>,
    pub observation: SceneObservation,
    pub suction_masks: Vec<SuctionLabelMask>,
    pub grasp_labels: Vec<GraspLabel>,
}

#[derive(Debug, Clone)]
pub struct LabelDataset {
    pub root: PathBuf,
    /// Scene directory names, sorted.
    pub scenes: Vec<String>,
    pub train: Vec<String>,
    pub test: Vec<String>,
}

fn require(path: PathBuf) -> Result<PathBuf, EvalError> {
    if path.exists() { Ok(path) } else { Err(EvalError::Missing(path)) }
}

/// Scans `root` for scene directories (those holding `bin.json`) and checks
/// that every frame has a suction mask and that grasp labels exist.
pub fn load_label_dataset(root: &Path) -> Result<LabelDataset, EvalError> {
    let entries = fs::read_dir(root).map_err(|e| EvalError::Io(format!("{}: {e}", root.display())))?;
    let mut scenes = Vec::new();
    for e in entries {
        let e = e.map_err(|e| EvalError::Io(e.to_string()))?;
        let path = e.path();
        if path.is_dir() && path.join(BIN_FILE).exists() {
            let stems = frame_stems(&path)?;
            if stems.is_empty() {
                return Err(EvalError::Format(format!("{}: no frames", path.display())));
            }
            for s in &stems {
                require(suction_mask_path(&path, s))?;
            }
            require(path.join(GRASP_FILE))?;
            scenes.push(e.file_name().to_string_lossy().into_owned());
        }
    }
    if scenes.is_empty() {
        return Err(EvalError::Format(format!("{}: no scene directories", root.display())));
    }
    scenes.sort();
    let (train, test) = split_names(&scenes);
    Ok(LabelDataset { root: root.to_path_buf(), scenes, train, test })
}

impl LabelDataset {
    pub fn split(&self, split: Split) -> &[String] {
        match split {
            Split::Train => &self.train,
            Split::Test => &self.test,
            Split::All => &self.scenes,
        }
    }

    pub fn load_scene(&self, name: &str) -> Result<LabeledScene, EvalError> {
        read_labeled_scene(&self.root.join(name))
    }
}

/// Frames, optional empty-bin frames and bin geometry of a scene directory;
/// labels are not required.
pub fn read_scene_observation(dir: &Path) -> Result<(Vec<String>, SceneObservation), EvalError> {
    let info: SceneInfo = crate::io::read_json(&require(dir.join(BIN_FILE))?)?;
    let stems = frame_stems(dir)?;
    if stems.is_empty() {
        return Err(EvalError::Format(format!("{}: no frames", dir.display())));
    }
    let frames = stems.iter().map(|s| read_frame(dir, s)).collect::<Result<Vec<_>, _>>()?;
    let empty_dir = dir.join(EMPTY_DIR);
    let empty = if empty_dir.is_dir() {
        Some(stems.iter().map(|s| read_frame(&empty_dir, s)).collect::<Result<Vec<_>, _>>()?)
    } else {
        None
    };
    Ok((stems, SceneObservation { frames, empty, bin: info.bin, resolution: info.resolution }))
}

pub fn read_labeled_scene(dir: &Path) -> Result<LabeledScene, EvalError> {
    let (stems, observation) = read_scene_observation(dir)?;
    let frames = &observation.frames;
    let mut suction_masks = Vec::with_capacity(stems.len());
    for (s, f) in stems.iter().zip(frames) {
        let m = read_suction_mask(&require(suction_mask_path(dir, s))?)?;
        if m.dims() != f.depth.dims() {
            return Err(EvalError::Format(format!("{}: mask {:?} does not match frame {:?}", suction_mask_path(dir, s).display(), m.dims(), f.depth.dims())));
        }
        suction_masks.push(m);
    }
    let grasp_labels = read_grasp_labels(&require(dir.join(GRASP_FILE))?)?;
    let dims = observation.bin.grid_dims(observation.resolution);
    for l in &grasp_labels {
        l.validate(dims)?;
    }
    let name = dir.file_name().map_or_else(String::new, |n| n.to_string_lossy().into_owned());
    Ok(LabeledScene { name, stems, observation, suction_masks, grasp_labels })
}

pub fn write_labeled_scene(dir: &Path, scene: &LabeledScene) -> Result<(), EvalError> {
    fs::create_dir_all(dir).map_err(|e| EvalError::Io(format!("{}: {e}", dir.display())))?;
    let obs = &scene.observation;
    crate::io::write_json(&dir.join(BIN_FILE), &SceneInfo { bin: obs.bin, resolution: obs.resolution })?;
    for (i, s) in scene.stems.iter().enumerate() {
        write_frame(dir, s, &obs.frames[i])?;
        write_suction_mask(&suction_mask_path(dir, s), &scene.suction_masks[i])?;
    }
    if let Some(empty) = &obs.empty {
        let ed = dir.join(EMPTY_DIR);
        fs::create_dir_all(&ed).map_err(|e| EvalError::Io(format!("{}: {e}", ed.display())))?;
        for (s, f) in scene.stems.iter().zip(empty) {
            write_frame(&ed, s, f)?;
        }
    }
    write_grasp_labels(&dir.join(GRASP_FILE), &scene.grasp_labels)
}

pub fn suction_map_path(dir: &Path, stem: &str) -> PathBuf {
    dir.join(format!("suction_{stem}.affd"))
}

pub fn grasp_map_path(dir: &Path, angle_index: usize) -> PathBuf {
    dir.join(format!("grasp_{angle_index:02}.affd"))
}

/// Writes the suction map of each frame and every grasp map into `dir`, in
/// the layout [`read_learned_maps`] expects.
pub fn write_affordance_maps(dir: &Path, stems: &[String], aff: &SceneAffordances) -> Result<(), EvalError> {
    fs::create_dir_all(dir).map_err(|e| EvalError::Io(format!("{}: {e}", dir.display())))?;
    for (s, m) in stems.iter().zip(&aff.suction_maps) {
        save_learned_map(m, suction_map_path(dir, s))?;
    }
    for (a, m) in aff.grasp_maps.iter().enumerate() {
        save_learned_map(m, grasp_map_path(dir, a))?;
    }
    Ok(())
}

/// Reads `suction_NNN.affd` for every frame and all `grasp_AA.affd` in
/// angle order.
pub fn read_learned_maps(dir: &Path, stems: &[String], obs: &SceneObservation) -> Result<LearnedMaps, EvalError> {
    let mut suction = Vec::new();
    for (s, f) in stems.iter().zip(&obs.frames) {
        suction.push(load_learned_map(require(suction_map_path(dir, s))?, Some(f.depth.dims()))?);
    }
    let dims = obs.bin.grid_dims(obs.resolution);
    let mut grasp: Vec<AffordanceMap> = Vec::new();
    loop {
        let p = grasp_map_path(dir, grasp.len());
        if !p.exists() {
            break;
        }
        grasp.push(load_learned_map(p, Some(dims))?);
    }
    if grasp.is_empty() {
        return Err(EvalError::Missing(grasp_map_path(dir, 0)));
    }
    Ok(LearnedMaps { suction, grasp })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Baseline,
    Learned,
}

impl Method {
    pub fn label(self) -> &'static str {
        match self {
            Method::Baseline => "Baseline",
            Method::Learned => "Learned maps",
        }
    }
}

pub fn scene_affordances(scene: &LabeledScene, dir: &Path, method: Method, params: &PipelineParams) -> Result<SceneAffordances, EvalError> {
    observation_affordances(&scene.stems, &scene.observation, dir, method, params)
}

/// Affordances of a scene in `dir`; the learned method reads its maps from
/// `dir/learned`.
pub fn observation_affordances(
    stems: &[String],
    obs: &SceneObservation,
    dir: &Path,
    method: Method,
    params: &PipelineParams,
) -> Result<SceneAffordances, EvalError> {
    Ok(match method {
        Method::Baseline => baseline_affordances(obs, params)?,
        Method::Learned => learned_affordances(obs, params, read_learned_maps(&dir.join(LEARNED_DIR), stems, obs)?)?,
    })
}

/// Suction and grasp precision at Top-1 / 1% / 5% / 10%, with TP and FP
/// pooled over every scene of the split.
pub fn evaluate_dataset(ds: &LabelDataset, split: Split, method: Method, params: &PipelineParams) -> Result<PrecisionTable, EvalError> {
    let mut suction = PrecisionCounts::default();
    let mut grasp = PrecisionCounts::default();
    let names = ds.split(split);
    for name in names {
        let scene = ds.load_scene(name)?;
        let aff = scene_affordances(&scene, &ds.root.join(name), method, params)?;
        suction.add_suction(&aff.suction, &scene.suction_masks)?;
        grasp.add_grasp(&aff.grasp, &scene.grasp_labels);
    }
    Ok(PrecisionTable { method: method.label().into(), scenes: names.len(), suction: suction.row(), grasp: grasp.row() })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fnv_reference_values() {
        assert_eq!(stable_hash(""), 0xcbf29ce484222325);
        assert_eq!(stable_hash("a"), 0xaf63dc4c8601ec8c);
        assert_eq!(stable_hash("foobar"), 0x85944171f73967e8);
    }

    #[test]
    fn split_is_four_to_one_and_disjoint() {
        for n in [1usize, 4, 5, 9, 10, 37, 100] {
            let names: Vec<String> = (0..n).map(|i| format!("scene{i:04}")).collect();
            let (train, test) = split_names(&names);
            assert_eq!(train.len() + test.len(), n);
            assert!(test.iter().all(|t| !train.contains(t)));
            assert!((train.len() as i64 - 4 * test.len() as i64).abs() <= 4, "{n}: {} / {}", train.len(), test.len());
            assert!((test.len() as f64 - n as f64 / 5.0).abs() <= 1.0);
            let mut rev = names.clone();
            rev.reverse();
            assert_eq!(split_names(&rev), (train, test));
        }
    }
}
