use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{joint_loss, triplet_ratio_loss, Classifier, EmbeddingModel, Gradients};
use super::{select_anchor, ProductCatalog, RecognitionError};

pub const DEFAULT_LAMBDA: f64 = 1.0;
pub const DEFAULT_CLASSIFIER_TEMPERATURE: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub seed: u64,
    /// Pick the positive product vector nearest to the current embedding
    /// (otherwise a random one of the object's vectors).
    pub multi_anchor: bool,
    /// Softmax temperature of the auxiliary classifier's initial logits
    /// (K-net only).
    pub classifier_temperature: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            lr: 1e-3,
            momentum: 0.99,
            batch_size: 16,
            seed: 0,
            multi_anchor: true,
            classifier_temperature: DEFAULT_CLASSIFIER_TEMPERATURE,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSample {
    pub x: DVector<f64>,
    pub object: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub model: EmbeddingModel,
    /// Mean loss over each epoch, measured before each batch update.
    pub epoch_losses: Vec<f64>,
}

/// Observed-stream training with the triplet loss only; product vectors stay
/// fixed.
pub fn train_embedding(samples: &[TrainingSample], catalog: &ProductCatalog, cfg: TrainConfig) -> Result<TrainReport, RecognitionError> {
    train(samples, catalog, cfg, None)
}

/// Triplet loss plus `lambda` times an auxiliary softmax classification over
/// the known objects. The linear classifier starts as the nearest-prototype
/// rule on each object's mean product vector and is dropped after training.
pub fn train_knet(
    samples: &[TrainingSample],
    catalog: &ProductCatalog,
    cfg: TrainConfig,
    lambda: f64,
) -> Result<TrainReport, RecognitionError> {
    if !(lambda >= 0.0) {
        return Err(RecognitionError::InvalidParameter(format!("lambda must be non-negative, got {lambda}")));
    }
    train(samples, catalog, cfg, Some(lambda))
}

fn train(
    samples: &[TrainingSample],
    catalog: &ProductCatalog,
    cfg: TrainConfig,
    lambda: Option<f64>,
) -> Result<TrainReport, RecognitionError> {
    let known: Vec<&str> = catalog.known_ids().filter(|id| samples.iter().any(|s| s.object == *id)).collect();
    if known.len() < 2 {
        return Err(RecognitionError::TooFewObjects(known.len()));
    }
    if cfg.batch_size == 0 || !(cfg.lr >= 0.0) || !(cfg.classifier_temperature > 0.0) || !(0.0..1.0).contains(&cfg.momentum) {
        return Err(RecognitionError::InvalidParameter(format!("bad training config {cfg:?}")));
    }
    let d_out = catalog.dim().expect("non-empty catalog");
    let d_in = samples[0].x.len();
    let mut labels = Vec::with_capacity(samples.len());
    for s in samples {
        if s.x.len() != d_in {
            return Err(RecognitionError::Dimension { expected: d_in, got: s.x.len() });
        }
        let label = known
            .iter()
            .position(|k| *k == s.object)
            .ok_or_else(|| RecognitionError::UnknownObject(format!("{} is not a known catalog object", s.object)))?;
        labels.push(label);
    }

    let mut model = EmbeddingModel::identity(d_in, d_out);
    let prototypes: Vec<DVector<f64>> = known
        .iter()
        .map(|id| {
            let vs = &catalog.get(id).expect("known id").vectors;
            vs.iter().sum::<DVector<f64>>() / vs.len() as f64
        })
        .collect();
    let mut classifier = Classifier::from_prototypes(&prototypes);
    classifier.weights /= cfg.classifier_temperature;
    classifier.bias /= cfg.classifier_temperature;
    let mut vw = DMatrix::zeros(d_out, d_in);
    let mut vb = DVector::zeros(d_out);
    let mut vcw = DMatrix::zeros(known.len(), d_out);
    let mut vcb = DVector::zeros(known.len());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);

    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let mut gw = DMatrix::zeros(d_out, d_in);
            let mut gb = DVector::zeros(d_out);
            let mut gcw = DMatrix::zeros(known.len(), d_out);
            let mut gcb = DVector::zeros(known.len());
            for &i in batch {
                let s = &samples[i];
                let label = labels[i];
                let e = model.embed(&s.x);
                let pos_vectors = &catalog.get(known[label]).expect("known id").vectors;
                let pos = if cfg.multi_anchor {
                    &pos_vectors[select_anchor(&e, pos_vectors).expect("non-empty")]
                } else {
                    &pos_vectors[rng.random_range(0..pos_vectors.len())]
                };
                let mut neg_label = rng.random_range(0..known.len() - 1);
                if neg_label >= label {
                    neg_label += 1;
                }
                let neg_vectors = &catalog.get(known[neg_label]).expect("known id").vectors;
                let neg = &neg_vectors[select_anchor(&e, neg_vectors).expect("non-empty")];
                let (loss, g): (f64, Gradients) = match lambda {
                    None => triplet_ratio_loss(&model, &s.x, pos, neg)?,
                    Some(l) => joint_loss(&model, &classifier, l, &s.x, pos, neg, label)?,
                };
                total += loss;
                gw += &g.weights;
                gb += &g.bias;
                if let Some((cw, cb)) = &g.classifier {
                    gcw += cw;
                    gcb += cb;
                }
            }
            let scale = cfg.lr / batch.len() as f64;
            vw = &vw * cfg.momentum - gw * scale;
            vb = &vb * cfg.momentum - gb * scale;
            model.weights += &vw;
            model.bias += &vb;
            if lambda.is_some() {
                vcw = &vcw * cfg.momentum - gcw * scale;
                vcb = &vcb * cfg.momentum - gcb * scale;
                classifier.weights += &vcw;
                classifier.bias += &vcb;
            }
        }
        epoch_losses.push(total / samples.len() as f64);
        model.trained = true;
    }
    model.validate()?;
    Ok(TrainReport { model, epoch_losses })
}
