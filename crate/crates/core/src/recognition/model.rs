use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::RecognitionError;

/// Smoothing inside the square roots of the triplet distances.
pub const DISTANCE_EPS: f64 = 1e-8;

/// Trainable affine map from observed features into the product feature
/// space. Product features are never transformed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingModel {
    pub weights: DMatrix<f64>,
    pub bias: DVector<f64>,
    pub trained: bool,
}

impl EmbeddingModel {
    /// Identity on the shared leading dimensions, zero elsewhere.
    pub fn identity(d_in: usize, d_out: usize) -> Self {
        Self {
            weights: DMatrix::identity(d_out, d_in),
            bias: DVector::zeros(d_out),
            trained: false,
        }
    }

    pub fn d_in(&self) -> usize {
        self.weights.ncols()
    }

    pub fn d_out(&self) -> usize {
        self.weights.nrows()
    }

    pub fn validate(&self) -> Result<(), RecognitionError> {
        if self.bias.len() != self.d_out() {
            return Err(RecognitionError::Dimension { expected: self.d_out(), got: self.bias.len() });
        }
        if self.weights.iter().chain(self.bias.iter()).any(|v| !v.is_finite()) {
            return Err(RecognitionError::NonFinite);
        }
        Ok(())
    }

    pub fn embed(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.weights * x + &self.bias
    }

    pub fn embed_checked(&self, x: &DVector<f64>) -> Result<DVector<f64>, RecognitionError> {
        if x.len() != self.d_in() {
            return Err(RecognitionError::Dimension { expected: self.d_in(), got: x.len() });
        }
        Ok(self.embed(x))
    }
}

/// Linear softmax head used only while training the known-object model.
#[derive(Debug, Clone, PartialEq)]
pub struct Classifier {
    pub weights: DMatrix<f64>,
    pub bias: DVector<f64>,
}

impl Classifier {
    pub fn zeros(classes: usize, dim: usize) -> Self {
        Self {
            weights: DMatrix::zeros(classes, dim),
            bias: DVector::zeros(classes),
        }
    }

    /// Nearest-prototype classifier: logits `2 pᵀe - |p|²`, which differ
    /// from `-|e - p|²` by a term shared across classes.
    pub fn from_prototypes(prototypes: &[DVector<f64>]) -> Self {
        let dim = prototypes.first().map_or(0, |p| p.len());
        Self {
            weights: DMatrix::from_fn(prototypes.len(), dim, |r, c| 2.0 * prototypes[r][c]),
            bias: DVector::from_iterator(prototypes.len(), prototypes.iter().map(|p| -p.norm_squared())),
        }
    }
}

/// Parameter gradients of the embedding (and classifier, when used).
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: DMatrix<f64>,
    pub bias: DVector<f64>,
    pub classifier: Option<(DMatrix<f64>, DVector<f64>)>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TripletTerms {
    pub loss: f64,
    pub d_pos: f64,
    pub d_neg: f64,
}

fn smooth_norm(v: &DVector<f64>) -> f64 {
    (v.norm_squared() + DISTANCE_EPS).sqrt()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Distance-ratio loss on an already embedded anchor: with `d+`, `d-` the
/// smoothed distances to `pos` and `neg`, the loss is
/// `(e^{d+} / (e^{d+} + e^{d-}))^2`. Returns the loss and its gradient with
/// respect to the embedded vector.
pub fn triplet_terms(e: &DVector<f64>, pos: &DVector<f64>, neg: &DVector<f64>) -> (TripletTerms, DVector<f64>) {
    let u = e - pos;
    let v = e - neg;
    let dp = smooth_norm(&u);
    let dn = smooth_norm(&v);
    let s = sigmoid(dp - dn);
    let coef = 2.0 * s * s * (1.0 - s);
    let grad = u * (coef / dp) - v * (coef / dn);
    (
        TripletTerms {
            loss: s * s,
            d_pos: dp,
            d_neg: dn,
        },
        grad,
    )
}

/// Triplet loss of `model(x)` against fixed product vectors, with gradients
/// for the model parameters.
pub fn triplet_ratio_loss(
    model: &EmbeddingModel,
    x: &DVector<f64>,
    pos: &DVector<f64>,
    neg: &DVector<f64>,
) -> Result<(f64, Gradients), RecognitionError> {
    for v in [pos, neg] {
        if v.len() != model.d_out() {
            return Err(RecognitionError::Dimension { expected: model.d_out(), got: v.len() });
        }
    }
    let e = model.embed_checked(x)?;
    let (terms, ge) = triplet_terms(&e, pos, neg);
    Ok((
        terms.loss,
        Gradients {
            weights: &ge * x.transpose(),
            bias: ge,
            classifier: None,
        },
    ))
}

/// Triplet loss plus `lambda` times the softmax cross-entropy of the
/// classifier on the embedded vector for class `label`.
pub fn joint_loss(
    model: &EmbeddingModel,
    classifier: &Classifier,
    lambda: f64,
    x: &DVector<f64>,
    pos: &DVector<f64>,
    neg: &DVector<f64>,
    label: usize,
) -> Result<(f64, Gradients), RecognitionError> {
    if label >= classifier.bias.len() {
        return Err(RecognitionError::UnknownObject(format!("class {label}")));
    }
    let e = model.embed_checked(x)?;
    let (terms, mut ge) = triplet_terms(&e, pos, neg);
    let logits = &classifier.weights * &e + &classifier.bias;
    let max = logits.max();
    let exps = logits.map(|z| (z - max).exp());
    let total = exps.sum();
    let mut probs = exps / total;
    let ce = -(probs[label].ln());
    probs[label] -= 1.0;
    ge += classifier.weights.transpose() * &probs * lambda;
    let gv = &probs * e.transpose() * lambda;
    let gc = probs * lambda;
    Ok((
        terms.loss + lambda * ce,
        Gradients {
            weights: &ge * x.transpose(),
            bias: ge,
            classifier: Some((gv, gc)),
        },
    ))
}
