//! Cross-domain matching of observed-object features to product features: a
//! trainable observed-stream embedding against a frozen product stream, the
//! multi-anchor switch, and the two-stage known/novel pipeline.

pub mod dataset;
mod io;
mod model;
pub mod synthetic;
mod train;

pub use dataset::{FeatureSet, ObjectRoles};
pub use io::{read_features, read_model, write_features, write_model, FEATURE_FILE_VERSION, MODEL_FILE_VERSION};
pub use model::{joint_loss, triplet_ratio_loss, triplet_terms, Classifier, EmbeddingModel, Gradients, TripletTerms, DISTANCE_EPS};
pub use train::{train_embedding, train_knet, TrainConfig, TrainReport, TrainingSample, DEFAULT_CLASSIFIER_TEMPERATURE, DEFAULT_LAMBDA};

use std::collections::BTreeMap;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RecognitionError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("non-finite value")]
    NonFinite,
    #[error("unknown object {0}")]
    UnknownObject(String),
    #[error("need at least two known objects to form negatives, got {0}")]
    TooFewObjects(usize),
    #[error("no candidates")]
    NoCandidates,
    #[error("catalog has no known objects")]
    NoKnownObjects,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("malformed file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureSource {
    Product,
    Observed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub object_id: String,
    pub source: FeatureSource,
    pub values: Vec<f32>,
}

impl FeatureVector {
    pub fn to_dvector(&self) -> DVector<f64> {
        DVector::from_iterator(self.values.len(), self.values.iter().map(|&v| v as f64))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CatalogEntry {
    pub vectors: Vec<DVector<f64>>,
    /// Seen during training.
    pub known: bool,
}

/// Product vectors per object. Iteration order is the sorted object id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ProductCatalog {
    entries: BTreeMap<String, CatalogEntry>,
    dim: Option<usize>,
}

impl ProductCatalog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, id: impl Into<String>, vector: DVector<f64>, known: bool) -> Result<(), RecognitionError> {
        if vector.iter().any(|v| !v.is_finite()) {
            return Err(RecognitionError::NonFinite);
        }
        match self.dim {
            Some(d) if d != vector.len() => return Err(RecognitionError::Dimension { expected: d, got: vector.len() }),
            _ => self.dim = Some(vector.len()),
        }
        let e = self.entries.entry(id.into()).or_insert(CatalogEntry {
            vectors: Vec::new(),
            known,
        });
        e.known |= known;
        e.vectors.push(vector);
        Ok(())
    }

    /// Builds a catalog from product feature vectors; ids in `known` are
    /// marked as seen in training.
    pub fn from_features<'a>(
        features: impl IntoIterator<Item = &'a FeatureVector>,
        known: &dyn Fn(&str) -> bool,
    ) -> Result<Self, RecognitionError> {
        let mut c = Self::new();
        for f in features {
            c.insert(f.object_id.clone(), f.to_dvector(), known(&f.object_id))?;
        }
        Ok(c)
    }

    pub fn set_known(&mut self, id: &str, known: bool) -> Result<(), RecognitionError> {
        self.entries
            .get_mut(id)
            .map(|e| e.known = known)
            .ok_or_else(|| RecognitionError::UnknownObject(id.to_string()))
    }

    pub fn get(&self, id: &str) -> Option<&CatalogEntry> {
        self.entries.get(id)
    }

    pub fn dim(&self) -> Option<usize> {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn known_ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().filter(|(_, e)| e.known).map(|(k, _)| k.as_str())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &CatalogEntry)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }
}

/// Index of the product vector nearest to `embedded`; ties keep the first.
pub fn select_anchor(embedded: &DVector<f64>, products: &[DVector<f64>]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, p) in products.iter().enumerate() {
        let d = (embedded - p).norm_squared();
        if best.is_none_or(|(_, b)| d < b) {
            best = Some((i, d));
        }
    }
    best.map(|(i, _)| i)
}

/// Distance from `embedded` to the nearest product vector of an object.
pub fn anchor_distance(embedded: &DVector<f64>, products: &[DVector<f64>]) -> f64 {
    select_anchor(embedded, products).map_or(f64::INFINITY, |i| (embedded - &products[i]).norm())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Recollection {
    Known,
    Novel,
}

/// Distance from the K-net embedding of `observed` to the nearest product
/// vector of any known object.
pub fn known_distance(observed: &DVector<f64>, knet: &EmbeddingModel, catalog: &ProductCatalog) -> Result<f64, RecognitionError> {
    let e = knet.embed_checked(observed)?;
    let mut best = f64::INFINITY;
    let mut any = false;
    for (_, entry) in catalog.iter().filter(|(_, e)| e.known) {
        any = true;
        best = best.min(anchor_distance(&e, &entry.vectors));
    }
    if !any {
        return Err(RecognitionError::NoKnownObjects);
    }
    Ok(best)
}

/// Known iff the nearest known product vector is within `k_threshold`.
pub fn recollect(
    observed: &DVector<f64>,
    knet: &EmbeddingModel,
    catalog: &ProductCatalog,
    k_threshold: f64,
) -> Result<Recollection, RecognitionError> {
    let d = known_distance(observed, knet, catalog)?;
    Ok(if d > k_threshold { Recollection::Novel } else { Recollection::Known })
}

/// Candidates ranked by ascending anchor distance under `model`; equal
/// distances keep the input order.
pub fn rank_candidates(
    observed: &DVector<f64>,
    model: &EmbeddingModel,
    catalog: &ProductCatalog,
    candidates: &[String],
) -> Result<Vec<(String, f64)>, RecognitionError> {
    if candidates.is_empty() {
        return Err(RecognitionError::NoCandidates);
    }
    let e = model.embed_checked(observed)?;
    let mut out = candidates
        .iter()
        .map(|id| {
            let entry = catalog.get(id).ok_or_else(|| RecognitionError::UnknownObject(id.clone()))?;
            Ok((id.clone(), anchor_distance(&e, &entry.vectors)))
        })
        .collect::<Result<Vec<_>, RecognitionError>>()?;
    out.sort_by(|a, b| a.1.total_cmp(&b.1));
    Ok(out)
}

/// The two-stage pipeline: K-net recollection, then K-net or N-net matching.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecognitionConfig {
    pub k_threshold: f64,
    pub knet: EmbeddingModel,
    pub nnet: EmbeddingModel,
}

impl RecognitionConfig {
    pub fn validate(&self) -> Result<(), RecognitionError> {
        if !(self.k_threshold > 0.0) {
            return Err(RecognitionError::InvalidParameter(format!("k_threshold must be positive, got {}", self.k_threshold)));
        }
        self.knet.validate()?;
        self.nnet.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Recognition {
    pub stage: Recollection,
    pub ranking: Vec<(String, f64)>,
}

pub fn recognize(
    observed: &DVector<f64>,
    config: &RecognitionConfig,
    catalog: &ProductCatalog,
    candidates: &[String],
) -> Result<Recognition, RecognitionError> {
    if candidates.is_empty() {
        return Err(RecognitionError::NoCandidates);
    }
    let stage = recollect(observed, &config.knet, catalog, config.k_threshold)?;
    let model = match stage {
        Recollection::Known => &config.knet,
        Recollection::Novel => &config.nnet,
    };
    Ok(Recognition {
        stage,
        ranking: rank_candidates(observed, model, catalog, candidates)?,
    })
}

/// Threshold maximizing balanced known/novel accuracy on labelled
/// observations (`true` = known). Candidates are midpoints between
/// consecutive distinct distances; ties keep the smallest threshold.
pub fn calibrate_threshold(
    knet: &EmbeddingModel,
    catalog: &ProductCatalog,
    samples: &[(DVector<f64>, bool)],
) -> Result<f64, RecognitionError> {
    let mut d: Vec<(f64, bool)> = samples
        .iter()
        .map(|(x, k)| known_distance(x, knet, catalog).map(|v| (v, *k)))
        .collect::<Result<_, _>>()?;
    let n_known = d.iter().filter(|(_, k)| *k).count();
    let n_novel = d.len() - n_known;
    if n_known == 0 || n_novel == 0 {
        return Err(RecognitionError::InvalidParameter("calibration needs known and novel samples".into()));
    }
    d.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut cands = vec![d[0].0 * 0.5];
    for w in d.windows(2) {
        if w[1].0 > w[0].0 {
            cands.push(0.5 * (w[0].0 + w[1].0));
        }
    }
    cands.push(d[d.len() - 1].0 * 1.5 + 1e-12);
    let mut best = (f64::NEG_INFINITY, cands[0]);
    for &t in &cands {
        let tp = d.iter().filter(|(v, k)| *k && *v <= t).count() as f64 / n_known as f64;
        let tn = d.iter().filter(|(v, k)| !*k && *v > t).count() as f64 / n_novel as f64;
        let bal = 0.5 * (tp + tn);
        if bal > best.0 {
            best = (bal, t);
        }
    }
    Ok(best.1.max(f64::MIN_POSITIVE))
}
