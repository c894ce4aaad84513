//! Cosine nearest-centroid classifier with a learnable softmax scale.
//!
//! Centroids are the normalized mean of normalized class features. The scale
//! `tau` multiplies cosine similarities before softmax and is picked from a
//! grid by mean query log-likelihood over sampled support/query episodes.

use rand::seq::SliceRandom;

use super::{argmax_lowest, dot, log_sum_exp, norm, softmax, Classifier, LabeledExample, LearnerError, Prediction};
use crate::stream::RngStream;

/// Scale used when there are too few labels to tune.
pub const DEFAULT_SCALE: f64 = 10.0;
/// Centroids shorter than this before normalization count as empty.
pub const EMPTY_NORM: f64 = 1e-9;
/// Inputs shorter than this cannot be classified by cosine.
pub const ZERO_INPUT_NORM: f64 = 1e-12;
pub const DEFAULT_GRID: [f64; 8] = [1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0, 128.0];

#[derive(Debug, Clone, PartialEq)]
pub struct TauSearch {
    pub grid: Vec<f64>,
    pub episodes: usize,
    /// Returned when tuning is not possible.
    pub fallback: f64,
}

impl Default for TauSearch {
    fn default() -> Self {
        Self {
            grid: DEFAULT_GRID.to_vec(),
            episodes: 50,
            fallback: DEFAULT_SCALE,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CentroidModel {
    centroids: Vec<Vec<f64>>,
    active: Vec<bool>,
    temperature: f64,
}

impl CentroidModel {
    /// Normalizes each raw centroid; those with norm below [`EMPTY_NORM`] are
    /// flagged empty and excluded from prediction.
    pub fn from_raw_centroids(raw: Vec<Vec<f64>>, temperature: f64) -> Self {
        let mut active = Vec::with_capacity(raw.len());
        let centroids = raw
            .into_iter()
            .map(|c| {
                let n = norm(&c);
                if n < EMPTY_NORM {
                    active.push(false);
                    vec![0.0; c.len()]
                } else {
                    active.push(true);
                    c.into_iter().map(|x| x / n).collect()
                }
            })
            .collect();
        Self {
            centroids,
            active,
            temperature,
        }
    }

    pub fn centroids(&self) -> &[Vec<f64>] {
        &self.centroids
    }

    pub fn is_active(&self, class: usize) -> bool {
        self.active[class]
    }

    pub fn class_count(&self) -> usize {
        self.centroids.len()
    }

    pub fn dim(&self) -> usize {
        self.centroids.first().map_or(0, Vec::len)
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    pub fn with_temperature(mut self, temperature: f64) -> Self {
        self.temperature = temperature;
        self
    }

    /// Cosine similarity to each centroid; `None` for empty classes.
    pub fn cosines(&self, features: &[f64]) -> Result<Vec<Option<f64>>, LearnerError> {
        if features.len() != self.dim() {
            return Err(LearnerError::DimensionMismatch {
                expected: self.dim(),
                found: features.len(),
            });
        }
        let n = norm(features);
        if n < ZERO_INPUT_NORM {
            return Err(LearnerError::ZeroVector);
        }
        Ok(self
            .centroids
            .iter()
            .zip(&self.active)
            .map(|(c, &on)| on.then(|| dot(features, c) / n))
            .collect())
    }
}

impl Classifier for CentroidModel {
    fn predict(&self, features: &[f64]) -> Result<Prediction, LearnerError> {
        centroid_predict(self, features)
    }
}

fn check_dims(labeled: &[LabeledExample<'_>]) -> Result<usize, LearnerError> {
    let first = labeled.first().ok_or(LearnerError::NoLabels)?;
    let d = first.features.len();
    for ex in labeled {
        if ex.features.len() != d {
            return Err(LearnerError::DimensionMismatch {
                expected: d,
                found: ex.features.len(),
            });
        }
    }
    Ok(d)
}

/// Per-class mean of normalized features (not yet normalized). Zero-norm
/// inputs contribute nothing; classes without samples stay at zero.
pub fn class_means<'a, I>(examples: I, class_count: usize, dim: usize) -> Vec<Vec<f64>>
where
    I: IntoIterator<Item = (&'a [f64], usize)>,
{
    let mut sums = vec![vec![0.0; dim]; class_count];
    let mut counts = vec![0usize; class_count];
    for (features, label) in examples {
        counts[label] += 1;
        let n = norm(features);
        if n < ZERO_INPUT_NORM {
            continue;
        }
        sums[label].iter_mut().zip(features).for_each(|(s, x)| *s += x / n);
    }
    sums.into_iter()
        .zip(counts)
        .map(|(s, n)| if n == 0 { s } else { s.into_iter().map(|x| x / n as f64).collect() })
        .collect()
}

fn tuning_feasible(labeled: &[LabeledExample<'_>], class_count: usize) -> bool {
    let mut counts = vec![0usize; class_count];
    for ex in labeled {
        counts[ex.label] += 1;
    }
    counts.iter().filter(|&&n| n >= 2).count() >= 2
}

pub fn centroid_fit(
    labeled: &[LabeledExample<'_>],
    class_count: usize,
    search: &TauSearch,
    rng: &mut RngStream,
) -> Result<CentroidModel, LearnerError> {
    let dim = check_dims(labeled)?;
    let raw = class_means(labeled.iter().map(|e| (e.features, e.label)), class_count, dim);
    let tau = centroid_tune(labeled, class_count, search, rng);
    Ok(CentroidModel::from_raw_centroids(raw, tau))
}

/// Refit on target labels, keeping `prev`'s centroid for classes without any
/// and `prev`'s scale when tuning is infeasible.
pub(crate) fn refit(
    prev: &CentroidModel,
    labeled: &[LabeledExample<'_>],
    search: &TauSearch,
    rng: &mut RngStream,
) -> Result<CentroidModel, LearnerError> {
    if labeled.is_empty() {
        return Ok(prev.clone());
    }
    let dim = check_dims(labeled)?;
    if dim != prev.dim() {
        return Err(LearnerError::DimensionMismatch {
            expected: prev.dim(),
            found: dim,
        });
    }
    let fresh = CentroidModel::from_raw_centroids(
        class_means(labeled.iter().map(|e| (e.features, e.label)), prev.class_count(), dim),
        prev.temperature,
    );
    let mut merged = fresh;
    for k in 0..merged.class_count() {
        if !merged.active[k] && prev.active[k] {
            merged.centroids[k] = prev.centroids[k].clone();
            merged.active[k] = true;
        }
    }
    if tuning_feasible(labeled, prev.class_count()) {
        merged.temperature = centroid_tune(labeled, prev.class_count(), search, rng);
    }
    Ok(merged)
}

/// Grid search for the softmax scale. Falls back to `search.fallback` unless
/// at least two classes have two or more labels.
///
/// Each episode splits every class with `n >= 2` labels into `n / 2` queries
/// and the rest as support; singleton classes act as support only.
pub fn centroid_tune(
    labeled: &[LabeledExample<'_>],
    class_count: usize,
    search: &TauSearch,
    rng: &mut RngStream,
) -> f64 {
    if search.grid.is_empty() || search.episodes == 0 || !tuning_feasible(labeled, class_count) {
        return search.fallback;
    }
    let dim = labeled[0].features.len();
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); class_count];
    for (i, ex) in labeled.iter().enumerate() {
        by_class[ex.label].push(i);
    }

    // (cosines to active support centroids, position of the true class)
    let mut queries: Vec<(Vec<f64>, usize)> = Vec::new();
    for _ in 0..search.episodes {
        let mut support: Vec<(&[f64], usize)> = Vec::new();
        let mut query_idx: Vec<usize> = Vec::new();
        for (class, members) in by_class.iter().enumerate() {
            let mut members = members.clone();
            members.shuffle(rng);
            let q = if members.len() >= 2 { members.len() / 2 } else { 0 };
            query_idx.extend_from_slice(&members[..q]);
            support.extend(members[q..].iter().map(|&i| (labeled[i].features, class)));
        }
        let model = CentroidModel::from_raw_centroids(class_means(support, class_count, dim), 1.0);
        let active: Vec<usize> = (0..class_count).filter(|&k| model.active[k]).collect();
        for &i in &query_idx {
            let Ok(cos) = model.cosines(labeled[i].features) else {
                continue;
            };
            let Some(pos) = active.iter().position(|&k| k == labeled[i].label) else {
                continue;
            };
            queries.push((active.iter().map(|&k| cos[k].unwrap_or(0.0)).collect(), pos));
        }
    }
    if queries.is_empty() {
        return search.fallback;
    }

    let mut best = (f64::NEG_INFINITY, search.fallback);
    for &tau in &search.grid {
        let total: f64 = queries
            .iter()
            .map(|(cos, y)| {
                let logits: Vec<f64> = cos.iter().map(|c| tau * c).collect();
                logits[*y] - log_sum_exp(&logits)
            })
            .sum();
        let mean = total / queries.len() as f64;
        if mean > best.0 {
            best = (mean, tau);
        }
    }
    best.1
}

/// `softmax(tau * cos(x, c_k))` over non-empty classes; empty classes get
/// probability 0. The argmax is taken on the cosines themselves.
pub fn centroid_predict(model: &CentroidModel, features: &[f64]) -> Result<Prediction, LearnerError> {
    let cos = model.cosines(features)?;
    let active: Vec<usize> = (0..cos.len()).filter(|&k| cos[k].is_some()).collect();
    if active.is_empty() {
        return Err(LearnerError::NoUsableCentroid);
    }
    let sims: Vec<f64> = active.iter().map(|&k| cos[k].unwrap()).collect();
    let logits: Vec<f64> = sims.iter().map(|s| model.temperature * s).collect();
    let mut probabilities = vec![0.0; cos.len()];
    for (&k, p) in active.iter().zip(softmax(&logits)) {
        probabilities[k] = p;
    }
    let argmax = active[argmax_lowest(&sims)];
    Ok(Prediction { probabilities, argmax })
}
