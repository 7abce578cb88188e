//! Synthetic cross-domain feature world: each object has a few product views
//! in product space; observations pass through a shared unknown affine
//! distortion and carry a per-object nuisance offset plus per-image noise.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{FeatureSet, ProductCatalog, TrainConfig, TrainingSample};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorldParams {
    pub dim: usize,
    /// Overall feature scale; every other length is relative to it.
    pub scale: f64,
    pub known_objects: usize,
    pub novel_objects: usize,
    /// Extra novel objects whose observations only calibrate the threshold.
    pub calibration_objects: usize,
    /// Objects come in families of similar products.
    pub family_size: usize,
    /// Spread of family members around the family center.
    pub family_spread: f64,
    pub views_per_object: usize,
    pub view_spread: f64,
    pub distortion: f64,
    pub shift: f64,
    pub nuisance: f64,
    pub noise: f64,
    /// Strength and rank of observation noise confined to a shared random
    /// subspace (lighting, pose).
    pub structured_noise: f64,
    pub structured_rank: usize,
    pub train_per_object: usize,
    pub held_out_per_object: usize,
}

impl Default for WorldParams {
    fn default() -> Self {
        Self {
            dim: 32,
            scale: 0.2,
            known_objects: 20,
            novel_objects: 20,
            calibration_objects: 10,
            family_size: 4,
            family_spread: 0.15,
            views_per_object: 3,
            view_spread: 0.35,
            distortion: 0.8,
            shift: 0.5,
            nuisance: 0.3,
            noise: 0.3,
            structured_noise: 0.0,
            structured_rank: 0,
            train_per_object: 40,
            held_out_per_object: 10,
        }
    }
}

/// Auxiliary-loss weight used with [`benchmark_train_config`].
pub const BENCHMARK_LAMBDA: f64 = 0.03;

/// Training settings for the synthetic 1-vs-20 benchmark.
pub fn benchmark_train_config(seed: u64) -> TrainConfig {
    TrainConfig {
        epochs: 30,
        classifier_temperature: 0.003,
        seed,
        ..TrainConfig::default()
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticWorld {
    pub params: WorldParams,
    pub features: FeatureSet,
}

struct Object {
    views: Vec<DVector<f64>>,
    nuisance: DVector<f64>,
}

fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn normal_vec(rng: &mut ChaCha8Rng, d: usize, scale: f64) -> DVector<f64> {
    DVector::from_fn(d, |_, _| scale * gauss(rng))
}

impl SyntheticWorld {
    pub fn generate(params: WorldParams, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = params.dim;
        let a = DMatrix::<f64>::identity(d, d)
            + DMatrix::from_fn(d, d, |_, _| params.distortion / (d as f64).sqrt() * gauss(&mut rng));
        let c = normal_vec(&mut rng, d, params.shift * params.scale);
        let basis: Vec<DVector<f64>> = (0..params.structured_rank).map(|_| normal_vec(&mut rng, d, 1.0).normalize()).collect();
        let fs = params.family_size.max(1);
        let pool = |count: usize, rng: &mut ChaCha8Rng| -> Vec<Object> {
            let mut family = DVector::zeros(d);
            (0..count)
                .map(|i| {
                    if i % fs == 0 {
                        family = normal_vec(rng, d, params.scale);
                    }
                    let center = if fs == 1 { family.clone() } else { &family + normal_vec(rng, d, params.family_spread * params.scale) };
                    Object {
                        views: (0..params.views_per_object).map(|_| &center + normal_vec(rng, d, params.view_spread * params.scale)).collect(),
                        nuisance: normal_vec(rng, d, params.nuisance * params.scale),
                    }
                })
                .collect()
        };
        let known = pool(params.known_objects, &mut rng);
        let novel = pool(params.novel_objects, &mut rng);
        let calib = pool(params.calibration_objects, &mut rng);
        let observe = |o: &Object, rng: &mut ChaCha8Rng| {
            let v = &o.views[rng.random_range(0..o.views.len())];
            let mut n = normal_vec(rng, d, params.noise * params.scale);
            for b in &basis {
                n += b * (params.structured_noise * params.scale * gauss(rng));
            }
            &a * (v + &o.nuisance + n) + &c
        };

        let known_ids: Vec<String> = (0..known.len()).map(|i| format!("known{i:03}")).collect();
        let novel_ids: Vec<String> = (0..novel.len()).map(|i| format!("novel{i:03}")).collect();
        let mut catalog = ProductCatalog::new();
        let mut calibration_catalog = ProductCatalog::new();
        let mut train = Vec::new();
        let mut test = Vec::new();
        let mut calibration = Vec::new();
        for (id, o) in known_ids.iter().zip(&known) {
            for v in &o.views {
                catalog.insert(id.clone(), v.clone(), true).expect("finite");
                calibration_catalog.insert(id.clone(), v.clone(), true).expect("finite");
            }
            for _ in 0..params.train_per_object {
                train.push(TrainingSample { x: observe(o, &mut rng), object: id.clone() });
            }
            for _ in 0..params.held_out_per_object {
                calibration.push(TrainingSample { x: observe(o, &mut rng), object: id.clone() });
            }
            for _ in 0..params.held_out_per_object {
                test.push(TrainingSample { x: observe(o, &mut rng), object: id.clone() });
            }
        }
        for (id, o) in novel_ids.iter().zip(&novel) {
            for v in &o.views {
                catalog.insert(id.clone(), v.clone(), false).expect("finite");
            }
            for _ in 0..params.held_out_per_object {
                test.push(TrainingSample { x: observe(o, &mut rng), object: id.clone() });
            }
        }
        let calibration_ids: Vec<String> = (0..calib.len()).map(|i| format!("calib{i:03}")).collect();
        for (id, o) in calibration_ids.iter().zip(&calib) {
            for v in &o.views {
                calibration_catalog.insert(id.clone(), v.clone(), false).expect("finite");
            }
            for _ in 0..params.held_out_per_object {
                calibration.push(TrainingSample { x: observe(o, &mut rng), object: id.clone() });
            }
        }
        let features = FeatureSet { catalog, calibration_catalog, known_ids, novel_ids, calibration_ids, train, calibration, test };
        Self { params, features }
    }
}
