//! Acquisition strategies: which unlabeled pool samples to buy labels for.

use std::collections::BTreeMap;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{DatasetHandle, LabeledState};
use crate::stream::RngStream;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum QueryError {
    #[error("requested {requested} samples but only {available} are unlabeled")]
    InsufficientPool { requested: usize, available: usize },
    #[error("no predictions for unlabeled sample '{0}'")]
    MissingPredictions(String),
    #[error("prediction for '{0}' is not a probability vector")]
    InvalidPredictions(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryStrategy {
    #[default]
    Random,
    Entropy,
    Margin,
}

impl QueryStrategy {
    pub const NAMES: [&'static str; 3] = ["random", "entropy", "margin"];

    pub fn needs_predictions(self) -> bool {
        !matches!(self, Self::Random)
    }
}

impl FromStr for QueryStrategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "random" => Ok(Self::Random),
            "entropy" => Ok(Self::Entropy),
            "margin" => Ok(Self::Margin),
            other => Err(format!(
                "unknown query strategy '{other}' (valid: {})",
                Self::NAMES.join(", ")
            )),
        }
    }
}

/// Inputs to a single acquisition. Ids are kept in canonical (sorted) order
/// so results do not depend on how the caller enumerated the pool.
#[derive(Debug)]
pub struct QueryContext {
    unlabeled_ids: Vec<String>,
    predictions: Option<BTreeMap<String, Vec<f64>>>,
    rng: RngStream,
}

impl QueryContext {
    pub fn new(
        mut unlabeled_ids: Vec<String>,
        predictions: Option<BTreeMap<String, Vec<f64>>>,
        rng: RngStream,
    ) -> Result<Self, QueryError> {
        unlabeled_ids.sort_unstable();
        if let Some(preds) = &predictions {
            for (id, p) in preds {
                let sum: f64 = p.iter().sum();
                if p.is_empty() || (sum - 1.0).abs() > 1e-9 || p.iter().any(|&x| !(0.0..=1.0).contains(&x)) {
                    return Err(QueryError::InvalidPredictions(id.clone()));
                }
            }
        }
        Ok(Self {
            unlabeled_ids,
            predictions,
            rng,
        })
    }

    pub fn unlabeled_ids(&self) -> &[String] {
        &self.unlabeled_ids
    }

    fn check_size(&self, k: usize) -> Result<(), QueryError> {
        if k > self.unlabeled_ids.len() {
            return Err(QueryError::InsufficientPool {
                requested: k,
                available: self.unlabeled_ids.len(),
            });
        }
        Ok(())
    }

    /// Rank by `key` ascending, ties by id, and keep the first `k`.
    fn rank_by(&self, k: usize, key: impl Fn(&[f64]) -> f64) -> Result<Vec<String>, QueryError> {
        self.check_size(k)?;
        let preds = self
            .predictions
            .as_ref()
            .ok_or_else(|| QueryError::MissingPredictions(self.unlabeled_ids.first().cloned().unwrap_or_default()))?;
        let mut keyed = self
            .unlabeled_ids
            .iter()
            .map(|id| {
                preds
                    .get(id)
                    .map(|p| (key(p), id))
                    .ok_or_else(|| QueryError::MissingPredictions(id.clone()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        keyed.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(b.1)));
        Ok(keyed.into_iter().take(k).map(|(_, id)| id.clone()).collect())
    }
}

/// Shannon entropy in nats, with `0 ln 0 = 0`.
pub fn entropy(p: &[f64]) -> f64 {
    -p.iter().filter(|&&x| x > 0.0).map(|&x| x * x.ln()).sum::<f64>()
}

/// Difference between the two largest probabilities (the top one alone if C = 1).
pub fn margin(p: &[f64]) -> f64 {
    let (mut first, mut second) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for &x in p {
        if x > first {
            second = first;
            first = x;
        } else if x > second {
            second = x;
        }
    }
    if second.is_finite() {
        first - second
    } else {
        first
    }
}

/// First `k` ids of a seeded uniform shuffle.
pub fn query_random(ctx: &mut QueryContext, k: usize) -> Result<Vec<String>, QueryError> {
    ctx.check_size(k)?;
    let mut ids = ctx.unlabeled_ids.clone();
    ids.shuffle(&mut ctx.rng);
    ids.truncate(k);
    Ok(ids)
}

/// Highest predictive entropy first.
pub fn query_entropy(ctx: &mut QueryContext, k: usize) -> Result<Vec<String>, QueryError> {
    ctx.rank_by(k, |p| -entropy(p))
}

/// Smallest top-1/top-2 margin first.
pub fn query_margin(ctx: &mut QueryContext, k: usize) -> Result<Vec<String>, QueryError> {
    ctx.rank_by(k, margin)
}

pub fn run_strategy(strategy: QueryStrategy, ctx: &mut QueryContext, k: usize) -> Result<Vec<String>, QueryError> {
    match strategy {
        QueryStrategy::Random => query_random(ctx, k),
        QueryStrategy::Entropy => query_entropy(ctx, k),
        QueryStrategy::Margin => query_margin(ctx, k),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SeedSelection {
    pub ids: Vec<String>,
    pub warnings: Vec<String>,
}

/// Per class (in index order) draw `deltas[c]` unlabeled members uniformly
/// without replacement. A class with too few unlabeled members gives all of
/// them and a warning.
pub fn stratified_seed_query(
    pool: &DatasetHandle,
    state: &LabeledState,
    deltas: &[usize],
    rng: &mut RngStream,
) -> SeedSelection {
    let mut by_class: Vec<Vec<&str>> = vec![Vec::new(); deltas.len()];
    for s in pool.train_pool() {
        if s.oracle_label() < deltas.len() && !state.contains(s.id()) {
            by_class[s.oracle_label()].push(s.id());
        }
    }
    let mut out = SeedSelection::default();
    for (class, (members, &want)) in by_class.iter_mut().zip(deltas).enumerate() {
        if want == 0 {
            continue;
        }
        members.sort_unstable();
        if members.len() < want {
            out.warnings.push(format!(
                "class {class} ('{}') has {} unlabeled samples, wanted {want}",
                pool.class_names()[class],
                members.len()
            ));
        }
        members.shuffle(rng);
        out.ids.extend(members.iter().take(want).map(|s| s.to_string()));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Sample;
    use crate::stream::derive_stream;

    fn ctx(preds: &[(&str, Vec<f64>)]) -> QueryContext {
        let ids = preds.iter().map(|(id, _)| id.to_string()).collect();
        let map = preds.iter().map(|(id, p)| (id.to_string(), p.clone())).collect();
        QueryContext::new(ids, Some(map), derive_stream(1, &["q"])).unwrap()
    }

    #[test]
    fn uniform_has_max_entropy() {
        let u = [1.0 / 3.0; 3];
        assert!((entropy(&u) - 3f64.ln()).abs() < 1e-12);
        assert!(entropy(&u) > entropy(&[0.9, 0.05, 0.05]));
    }

    #[test]
    fn entropy_picks_most_uncertain() {
        let mut c = ctx(&[("a", vec![0.9, 0.1]), ("b", vec![0.5, 0.5]), ("c", vec![0.7, 0.3])]);
        assert_eq!(query_entropy(&mut c, 1).unwrap(), vec!["b"]);
    }

    #[test]
    fn ties_resolve_by_id() {
        let p = vec![0.6, 0.4];
        let mut c = ctx(&[("d", p.clone()), ("b", p.clone()), ("c", p.clone()), ("a", p)]);
        assert_eq!(query_entropy(&mut c, 2).unwrap(), vec!["a", "b"]);
        assert_eq!(query_margin(&mut c, 3).unwrap(), vec!["a", "b", "c"]);
    }

    #[test]
    fn margin_ordering() {
        let mut c = ctx(&[("x", vec![0.8, 0.2]), ("y", vec![0.5, 0.5])]);
        assert_eq!(query_margin(&mut c, 1).unwrap(), vec!["y"]);
        assert!(query_margin(&mut c, 0).unwrap().is_empty());
    }

    #[test]
    fn random_exhaustive_and_empty() {
        let ids: Vec<String> = (0..20).map(|i| format!("i{i}")).collect();
        let mut c = QueryContext::new(ids.clone(), None, derive_stream(3, &["r"])).unwrap();
        assert!(query_random(&mut c, 0).unwrap().is_empty());
        let mut all = query_random(&mut c, 20).unwrap();
        all.sort();
        let mut want = ids;
        want.sort();
        assert_eq!(all, want);
        assert!(matches!(query_random(&mut c, 21), Err(QueryError::InsufficientPool { .. })));
    }

    #[test]
    fn missing_predictions_rejected() {
        let mut c = QueryContext::new(vec!["a".into()], None, derive_stream(3, &["r"])).unwrap();
        assert!(matches!(query_entropy(&mut c, 1), Err(QueryError::MissingPredictions(_))));
        let bad = BTreeMap::from([("a".to_string(), vec![0.2, 0.2])]);
        assert!(QueryContext::new(vec!["a".into()], Some(bad), derive_stream(3, &["r"])).is_err());
    }

    fn pool() -> DatasetHandle {
        let train = (0..9)
            .map(|i| Sample::new(format!("s{i}"), vec![i as f64], if i < 2 { 0 } else { 1 + i % 2 }))
            .collect();
        DatasetHandle::new("p", "p", 1, vec!["a".into(), "b".into(), "c".into()], train, vec![]).unwrap()
    }

    #[test]
    fn stratified_one_per_class() {
        let ds = pool();
        let sel = stratified_seed_query(&ds, &LabeledState::new(), &[1, 1, 1], &mut derive_stream(5, &["s"]));
        assert_eq!(sel.ids.len(), 3);
        assert!(sel.warnings.is_empty());
        let labels: Vec<usize> = sel.ids.iter().map(|id| ds.train_sample(id).unwrap().oracle_label()).collect();
        assert_eq!(labels, vec![0, 1, 2]);
    }

    #[test]
    fn stratified_shortfall_clamps_and_warns() {
        let ds = pool();
        let sel = stratified_seed_query(&ds, &LabeledState::new(), &[3, 0, 0], &mut derive_stream(5, &["s"]));
        assert_eq!(sel.ids.len(), 2);
        assert_eq!(sel.warnings.len(), 1);
    }

    #[test]
    fn stratified_is_deterministic() {
        let ds = pool();
        let a = stratified_seed_query(&ds, &LabeledState::new(), &[1, 2, 2], &mut derive_stream(5, &["s"]));
        let b = stratified_seed_query(&ds, &LabeledState::new(), &[1, 2, 2], &mut derive_stream(5, &["s"]));
        assert_eq!(a, b);
    }
}
