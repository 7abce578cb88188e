//! Feature sets for training and benchmarking, in memory and on disk.
//!
//! ```text
//! catalog/products.feat     product vectors of every object
//! catalog/objects.json      {"known": [...], "novel": [...], "calibration": [...]}
//! features/train.feat       observed vectors of known objects
//! features/calibration.feat observed vectors of known and calibration objects
//! features/test.feat        observed vectors of known and novel objects
//! ```
//!
//! Calibration objects are novel objects that only serve to calibrate the
//! recollection threshold; they never appear in benchmark cases.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use nalgebra::DVector;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    calibrate_threshold, read_features, train_embedding, train_knet, write_features, FeatureSource, FeatureVector,
    ProductCatalog, RecognitionConfig, RecognitionError, TrainConfig, TrainingSample,
};
use crate::evaluation::BenchmarkCase;

pub const PRODUCTS_FILE: &str = "products.feat";
pub const OBJECTS_FILE: &str = "objects.json";
pub const TRAIN_FILE: &str = "train.feat";
pub const CALIBRATION_FILE: &str = "calibration.feat";
pub const TEST_FILE: &str = "test.feat";

/// Object roles, as stored in `objects.json`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObjectRoles {
    pub known: Vec<String>,
    pub novel: Vec<String>,
    #[serde(default)]
    pub calibration: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct FeatureSet {
    /// Products of the known and novel benchmark objects.
    pub catalog: ProductCatalog,
    /// Products of the known and calibration objects.
    pub calibration_catalog: ProductCatalog,
    pub known_ids: Vec<String>,
    pub novel_ids: Vec<String>,
    pub calibration_ids: Vec<String>,
    pub train: Vec<TrainingSample>,
    /// Held-out observations of known and calibration objects.
    pub calibration: Vec<TrainingSample>,
    /// Held-out observations of every benchmark object.
    pub test: Vec<TrainingSample>,
}

impl FeatureSet {
    /// Calibration observations labelled `true` when the object is known.
    pub fn calibration_samples(&self) -> Vec<(DVector<f64>, bool)> {
        let known: BTreeSet<&str> = self.known_ids.iter().map(String::as_str).collect();
        self.calibration.iter().map(|s| (s.x.clone(), known.contains(s.object.as_str()))).collect()
    }

    /// Trains N-net and K-net on the training observations and calibrates
    /// the recollection threshold on the calibration split.
    pub fn train_pipelines(&self, cfg: TrainConfig, lambda: f64) -> Result<RecognitionConfig, RecognitionError> {
        let nnet = train_embedding(&self.train, &self.catalog, cfg)?.model;
        let knet = train_knet(&self.train, &self.catalog, cfg, lambda)?.model;
        let k_threshold = calibrate_threshold(&knet, &self.calibration_catalog, &self.calibration_samples())?;
        Ok(RecognitionConfig { k_threshold, knet, nnet })
    }

    /// 1-vs-20 cases: the ground truth is drawn uniformly from all benchmark
    /// objects, and the candidates are it plus random fillers to make
    /// `per_pool` known and `per_pool` novel ids, shuffled.
    pub fn benchmark_cases(&self, count: usize, per_pool: usize, seed: u64) -> Result<Vec<BenchmarkCase>, RecognitionError> {
        if self.known_ids.len() < per_pool || self.novel_ids.len() < per_pool {
            return Err(RecognitionError::InvalidParameter(format!(
                "{per_pool} candidates per pool need at least that many known ({}) and novel ({}) objects",
                self.known_ids.len(),
                self.novel_ids.len()
            )));
        }
        let mut by_object: BTreeMap<&str, Vec<&DVector<f64>>> = BTreeMap::new();
        for s in &self.test {
            by_object.entry(s.object.as_str()).or_default().push(&s.x);
        }
        let all: Vec<(&String, bool)> = self
            .known_ids
            .iter()
            .map(|k| (k, true))
            .chain(self.novel_ids.iter().map(|n| (n, false)))
            .filter(|(id, _)| by_object.contains_key(id.as_str()))
            .collect();
        if all.is_empty() {
            return Err(RecognitionError::InvalidParameter("no test observations of benchmark objects".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok((0..count)
            .map(|_| {
                let (truth, known) = all[rng.random_range(0..all.len())];
                let mut pick = |pool: &[String]| -> Vec<String> {
                    let mut others: Vec<&String> = pool.iter().filter(|p| *p != truth).collect();
                    others.shuffle(&mut rng);
                    let take = if pool.contains(truth) { per_pool - 1 } else { per_pool };
                    let mut out: Vec<String> = others.into_iter().take(take).cloned().collect();
                    if pool.contains(truth) {
                        out.push(truth.clone());
                    }
                    out
                };
                let mut candidates = pick(&self.known_ids);
                candidates.extend(pick(&self.novel_ids));
                candidates.shuffle(&mut rng);
                let obs = &by_object[truth.as_str()];
                let observed = obs[rng.random_range(0..obs.len())].clone();
                BenchmarkCase { candidates, known_candidates: per_pool, observed, truth: truth.clone(), truth_known: known }
            })
            .collect())
    }

    pub fn roles(&self) -> ObjectRoles {
        ObjectRoles { known: self.known_ids.clone(), novel: self.novel_ids.clone(), calibration: self.calibration_ids.clone() }
    }

    pub fn write(&self, features_dir: &Path, catalog_dir: &Path) -> Result<(), RecognitionError> {
        std::fs::create_dir_all(features_dir)?;
        std::fs::create_dir_all(catalog_dir)?;
        let mut products = Vec::new();
        let mut push = |cat: &ProductCatalog, ids: &[String]| {
            for id in ids {
                for v in &cat.get(id).expect("role ids are in the catalog").vectors {
                    products.push(to_feature(id, FeatureSource::Product, v));
                }
            }
        };
        push(&self.catalog, &self.known_ids);
        push(&self.catalog, &self.novel_ids);
        push(&self.calibration_catalog, &self.calibration_ids);
        write_feature_file(&catalog_dir.join(PRODUCTS_FILE), &products)?;
        let roles = serde_json::to_string_pretty(&self.roles()).map_err(|e| RecognitionError::Format(e.to_string()))?;
        std::fs::write(catalog_dir.join(OBJECTS_FILE), roles + "\n")?;
        for (name, samples) in [(TRAIN_FILE, &self.train), (CALIBRATION_FILE, &self.calibration), (TEST_FILE, &self.test)] {
            let feats: Vec<_> = samples.iter().map(|s| to_feature(&s.object, FeatureSource::Observed, &s.x)).collect();
            write_feature_file(&features_dir.join(name), &feats)?;
        }
        Ok(())
    }

    /// Reads the layout written by [`FeatureSet::write`] and checks that
    /// every observation belongs to an object of the right role.
    pub fn read(features_dir: &Path, catalog_dir: &Path) -> Result<Self, RecognitionError> {
        let path = catalog_dir.join(OBJECTS_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))?;
        let roles: ObjectRoles = serde_json::from_str(&text).map_err(|e| RecognitionError::Format(format!("{OBJECTS_FILE}: {e}")))?;
        let products = read_feature_file(&catalog_dir.join(PRODUCTS_FILE), FeatureSource::Product)?;
        let role_of = |id: &str| {
            if roles.known.iter().any(|k| k == id) {
                Some('k')
            } else if roles.novel.iter().any(|k| k == id) {
                Some('n')
            } else if roles.calibration.iter().any(|k| k == id) {
                Some('c')
            } else {
                None
            }
        };
        let mut catalog = ProductCatalog::new();
        let mut calibration_catalog = ProductCatalog::new();
        for f in &products {
            let role = role_of(&f.object_id).ok_or_else(|| RecognitionError::UnknownObject(f.object_id.clone()))?;
            let v = f.to_dvector();
            if role != 'c' {
                catalog.insert(f.object_id.clone(), v.clone(), role == 'k')?;
            }
            if role != 'n' {
                calibration_catalog.insert(f.object_id.clone(), v, role == 'k')?;
            }
        }
        for id in roles.known.iter().chain(&roles.novel).chain(&roles.calibration) {
            if catalog.get(id).is_none() && calibration_catalog.get(id).is_none() {
                return Err(RecognitionError::Format(format!("object {id} has no product vectors")));
            }
        }
        let observed = |name: &str, allowed: &[char]| -> Result<Vec<TrainingSample>, RecognitionError> {
            read_feature_file(&features_dir.join(name), FeatureSource::Observed)?
                .into_iter()
                .map(|f| match role_of(&f.object_id) {
                    Some(r) if allowed.contains(&r) => Ok(TrainingSample { x: f.to_dvector(), object: f.object_id }),
                    _ => Err(RecognitionError::Format(format!("{name}: object {} is not allowed here", f.object_id))),
                })
                .collect()
        };
        Ok(Self {
            train: observed(TRAIN_FILE, &['k'])?,
            calibration: observed(CALIBRATION_FILE, &['k', 'c'])?,
            test: observed(TEST_FILE, &['k', 'n'])?,
            catalog,
            calibration_catalog,
            known_ids: roles.known,
            novel_ids: roles.novel,
            calibration_ids: roles.calibration,
        })
    }
}

fn to_feature(id: &str, source: FeatureSource, v: &DVector<f64>) -> FeatureVector {
    FeatureVector { object_id: id.to_string(), source, values: v.iter().map(|&x| x as f32).collect() }
}

fn write_feature_file(path: &Path, features: &[FeatureVector]) -> Result<(), RecognitionError> {
    let mut w = BufWriter::new(File::create(path)?);
    write_features(&mut w, features)?;
    std::io::Write::flush(&mut w)?;
    Ok(())
}

fn read_feature_file(path: &Path, source: FeatureSource) -> Result<Vec<FeatureVector>, RecognitionError> {
    let file = File::open(path).map_err(|e| std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))?;
    read_features(&mut BufReader::new(file), source)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::recognition::synthetic::{SyntheticWorld, WorldParams};

    fn small() -> SyntheticWorld {
        let params = WorldParams { known_objects: 12, novel_objects: 12, calibration_objects: 4, train_per_object: 3, held_out_per_object: 2, ..WorldParams::default() };
        SyntheticWorld::generate(params, 3)
    }

    #[test]
    fn disk_round_trip_keeps_roles_and_samples() {
        let w = small();
        let dir = tempfile::tempdir().unwrap();
        let (fd, cd) = (dir.path().join("features"), dir.path().join("catalog"));
        w.features.write(&fd, &cd).unwrap();
        let back = FeatureSet::read(&fd, &cd).unwrap();
        assert_eq!(back.roles(), w.features.roles());
        assert_eq!(back.catalog.len(), 24);
        assert_eq!(back.calibration_catalog.len(), 16);
        assert_eq!(back.catalog.known_ids().count(), 12);
        assert_eq!(back.test.len(), w.features.test.len());
        for (a, b) in back.train.iter().zip(&w.features.train) {
            assert_eq!(a.object, b.object);
            assert!((&a.x - &b.x).amax() < 1e-6);
        }
        assert_eq!(
            back.calibration_samples().iter().map(|s| s.1).collect::<Vec<_>>(),
            w.features.calibration_samples().iter().map(|s| s.1).collect::<Vec<_>>()
        );
    }

    #[test]
    fn misplaced_observations_are_rejected() {
        let w = small();
        let dir = tempfile::tempdir().unwrap();
        let (fd, cd) = (dir.path().join("features"), dir.path().join("catalog"));
        let mut set = w.features.clone();
        set.train.push(set.test.last().unwrap().clone());
        set.write(&fd, &cd).unwrap();
        assert!(matches!(FeatureSet::read(&fd, &cd), Err(RecognitionError::Format(_))));
        assert!(FeatureSet::read(&dir.path().join("none"), &cd).is_err());
    }

    #[test]
    fn cases_need_enough_objects() {
        let w = small();
        assert_eq!(w.features.benchmark_cases(5, 10, 1).unwrap().len(), 5);
        assert!(w.features.benchmark_cases(5, 13, 1).is_err());
    }
}
