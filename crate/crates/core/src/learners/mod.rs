//! Feature-space learners behind one fit/update/predict surface.
//!
//! * [`centroid`]: cosine nearest-centroid with a tuned softmax scale.
//! * [`mme`]: linear feature map plus cosine prototypes trained with
//!   minimax entropy.
//! * [`consistency`]: nearest-centroid base with masked-consistency
//!   pseudo-label selection and self-training.
//!
//! Argmax ties always resolve to the lowest class index.

pub mod centroid;
pub mod consistency;
pub mod mme;

use thiserror::Error;

use crate::config::{Algorithm, AlgorithmParams};
use crate::stream::RngStream;

pub use centroid::{centroid_fit, centroid_predict, centroid_tune, CentroidModel, TauSearch};
pub use consistency::{
    consistency_masks, consistency_select, consistency_self_train, ConsistencyParams, ConsistencyState,
};
pub use mme::{mme_init, mme_losses, mme_step, MmeHyper, MmeModel};

#[derive(Debug, Error, PartialEq)]
pub enum LearnerError {
    #[error("no labeled samples")]
    NoLabels,
    #[error("input vector has (near) zero norm")]
    ZeroVector,
    #[error("feature dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("empty {0} batch")]
    EmptyBatch(&'static str),
    #[error("non-finite gradient: {0}")]
    NonFiniteGradient(String),
    #[error("source features have rank 0")]
    RankDeficient,
    #[error("model has no usable class centroid")]
    NoUsableCentroid,
}

/// A train-pool sample whose label the learner is allowed to see.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabeledExample<'a> {
    pub id: &'a str,
    pub features: &'a [f64],
    pub label: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnlabeledExample<'a> {
    pub id: &'a str,
    pub features: &'a [f64],
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub probabilities: Vec<f64>,
    pub argmax: usize,
}

impl Prediction {
    /// Build from probabilities; argmax over them with the lowest-index tie rule.
    pub fn from_probabilities(probabilities: Vec<f64>) -> Self {
        let argmax = argmax_lowest(&probabilities);
        Self { probabilities, argmax }
    }

    /// Up to `k` `(class, probability)` pairs, descending, ties by class index.
    pub fn top_k(&self, k: usize) -> Vec<(usize, f64)> {
        let mut order: Vec<usize> = (0..self.probabilities.len()).collect();
        order.sort_by(|&a, &b| {
            self.probabilities[b]
                .total_cmp(&self.probabilities[a])
                .then_with(|| a.cmp(&b))
        });
        order.truncate(k);
        // The argmax is authoritative for position 0 even if probabilities
        // underflowed to a tie.
        if let Some(pos) = order.iter().position(|&c| c == self.argmax) {
            let c = order.remove(pos);
            order.insert(0, c);
        }
        order.into_iter().map(|c| (c, self.probabilities[c])).collect()
    }
}

pub trait Classifier {
    fn predict(&self, features: &[f64]) -> Result<Prediction, LearnerError>;
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Index of the largest value; the lowest index wins ties.
pub fn argmax_lowest(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

pub(crate) fn log_sum_exp(logits: &[f64]) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + logits.iter().map(|&z| (z - max).exp()).sum::<f64>().ln()
}

/// Everything a learner may use when training at a checkpoint.
#[derive(Debug, Clone, Copy)]
pub struct TrainingData<'a> {
    /// Fully labeled source pool chosen for the run.
    pub source: &'a [LabeledExample<'a>],
    /// Target samples labeled so far.
    pub labeled: &'a [LabeledExample<'a>],
    /// Target pool samples without labels.
    pub unlabeled: &'a [UnlabeledExample<'a>],
}

/// Model state carried between checkpoints and stages.
#[derive(Debug, Clone, PartialEq)]
pub enum LearnerState {
    Centroid(CentroidModel),
    Mme(MmeModel),
    Consistency(ConsistencyState),
}

impl LearnerState {
    pub fn algorithm(&self) -> Algorithm {
        match self {
            Self::Centroid(_) => Algorithm::Centroid,
            Self::Mme(_) => Algorithm::Mme,
            Self::Consistency(_) => Algorithm::Consistency,
        }
    }

    /// Initial model from the fully labeled source pool. Returns warnings
    /// alongside the state.
    pub fn fit_source(
        algorithm: Algorithm,
        params: &AlgorithmParams,
        source: &[LabeledExample<'_>],
        class_count: usize,
        rng: &mut RngStream,
    ) -> Result<(Self, Vec<String>), LearnerError> {
        let search = params.tau_search();
        match algorithm {
            Algorithm::Centroid => Ok((Self::Centroid(centroid_fit(source, class_count, &search, rng)?), vec![])),
            Algorithm::Consistency => {
                let base = centroid_fit(source, class_count, &search, rng)?;
                Ok((
                    Self::Consistency(ConsistencyState::new(base, params.consistency_params())),
                    vec![],
                ))
            }
            Algorithm::Mme => {
                let init = mme_init(source, class_count, params.feature_dim, params.mme_hyper())?;
                Ok((Self::Mme(init.model), init.warnings))
            }
        }
    }

    /// Continue training on target data at a checkpoint.
    pub fn update(
        &self,
        params: &AlgorithmParams,
        data: TrainingData<'_>,
        rng: &mut RngStream,
    ) -> Result<Self, LearnerError> {
        let search = params.tau_search();
        match self {
            Self::Centroid(model) => Ok(Self::Centroid(centroid::refit(model, data.labeled, &search, rng)?)),
            Self::Consistency(state) => {
                let base = centroid::refit(&state.base, data.labeled, &search, rng)?;
                let start = ConsistencyState::new(base, params.consistency_params());
                Ok(Self::Consistency(consistency_self_train(&start, data.labeled, data.unlabeled)?))
            }
            Self::Mme(model) => {
                let model = model.clone().with_hyper(params.mme_hyper());
                Ok(Self::Mme(mme::mme_train_grouped(&model, &[data.source, data.labeled], data.unlabeled)?))
            }
        }
    }
}

impl Classifier for LearnerState {
    fn predict(&self, features: &[f64]) -> Result<Prediction, LearnerError> {
        match self {
            Self::Centroid(m) => m.predict(features),
            Self::Mme(m) => m.predict(features),
            Self::Consistency(s) => s.predict(features),
        }
    }
}
