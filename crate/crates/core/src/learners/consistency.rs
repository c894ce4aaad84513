//! Masked-consistency pseudo-label selection and self-training.
//!
//! Each unlabeled sample's coordinates are ranked by absolute value. The top
//! `ceil(p * d)` are dealt round-robin into `m` disjoint masks. A sample is
//! kept for self-training only if zeroing each mask leaves the base model's
//! argmax unchanged.

use std::collections::BTreeMap;

use super::centroid::{centroid_predict, class_means, CentroidModel};
use super::{Classifier, LabeledExample, LearnerError, Prediction, UnlabeledExample};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConsistencyParams {
    pub mask_count: usize,
    pub mask_fraction: f64,
    pub rounds: usize,
}

impl Default for ConsistencyParams {
    fn default() -> Self {
        Self {
            mask_count: 3,
            mask_fraction: 0.5,
            rounds: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConsistencyState {
    pub base: CentroidModel,
    pub params: ConsistencyParams,
    /// Pseudo-labels from the last selection round, unlabeled ids only.
    pub pseudo_labels: BTreeMap<String, usize>,
}

impl ConsistencyState {
    pub fn new(base: CentroidModel, params: ConsistencyParams) -> Self {
        Self {
            base,
            params,
            pseudo_labels: BTreeMap::new(),
        }
    }
}

impl Classifier for ConsistencyState {
    fn predict(&self, features: &[f64]) -> Result<Prediction, LearnerError> {
        centroid_predict(&self.base, features)
    }
}

/// Number of coordinates masked out of `dim` for fraction `p`.
pub fn masked_count(dim: usize, fraction: f64) -> usize {
    // The small slack keeps e.g. 0.1 * 30 from rounding up to 4.
    ((fraction * dim as f64 - 1e-9).ceil().max(1.0) as usize).min(dim)
}

/// Deal the top `ceil(p * d)` coordinates of `importance` (most important
/// first) round-robin into `mask_count` masks. Masks beyond the number of
/// dealt coordinates stay empty.
pub fn consistency_masks(importance: &[usize], mask_count: usize, fraction: f64) -> Vec<Vec<usize>> {
    let mut masks = vec![Vec::new(); mask_count.max(1)];
    if importance.is_empty() {
        return masks;
    }
    let k = masked_count(importance.len(), fraction);
    let m = masks.len();
    for (rank, &coord) in importance.iter().take(k).enumerate() {
        masks[rank % m].push(coord);
    }
    masks
}

/// Coordinates by descending `|x_i|`, ties by index.
pub fn importance_ranking(features: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..features.len()).collect();
    order.sort_by(|&a, &b| features[b].abs().total_cmp(&features[a].abs()).then_with(|| a.cmp(&b)));
    order
}

fn consistent_label(base: &CentroidModel, params: &ConsistencyParams, features: &[f64]) -> Option<usize> {
    let original = centroid_predict(base, features).ok()?.argmax;
    let masks = consistency_masks(&importance_ranking(features), params.mask_count, params.mask_fraction);
    for mask in masks.iter().filter(|m| !m.is_empty()) {
        let mut variant = features.to_vec();
        for &i in mask {
            variant[i] = 0.0;
        }
        match centroid_predict(base, &variant) {
            Ok(p) if p.argmax == original => {}
            _ => return None,
        }
    }
    Some(original)
}

/// Pseudo-labels for every unlabeled sample whose prediction survives all masks.
pub fn consistency_select(state: &ConsistencyState, unlabeled: &[UnlabeledExample<'_>]) -> BTreeMap<String, usize> {
    unlabeled
        .iter()
        .filter_map(|u| consistent_label(&state.base, &state.params, u.features).map(|y| (u.id.to_string(), y)))
        .collect()
}

/// Up to `rounds` of select, pseudo-label, and refit the centroids on the
/// labeled and pseudo-labeled samples with equal weight. Stops early once a
/// round selects the same set as the previous one. Classes with no labeled
/// or pseudo-labeled member keep the starting centroid; the scale is kept.
pub fn consistency_self_train(
    state: &ConsistencyState,
    labeled: &[LabeledExample<'_>],
    unlabeled: &[UnlabeledExample<'_>],
) -> Result<ConsistencyState, LearnerError> {
    if labeled.is_empty() {
        return Err(LearnerError::NoLabels);
    }
    let start = &state.base;
    let mut current = state.clone();
    for _ in 0..state.params.rounds {
        let selected = consistency_select(&current, unlabeled);
        if selected == current.pseudo_labels {
            break;
        }
        let pseudo = unlabeled
            .iter()
            .filter_map(|u| selected.get(u.id).map(|&y| (u.features, y)));
        let raw = class_means(
            labeled.iter().map(|e| (e.features, e.label)).chain(pseudo),
            start.class_count(),
            start.dim(),
        );
        let refit = CentroidModel::from_raw_centroids(raw, start.temperature());
        let centroids: Vec<Vec<f64>> = (0..start.class_count())
            .map(|k| {
                if refit.is_active(k) || !start.is_active(k) {
                    refit.centroids()[k].clone()
                } else {
                    start.centroids()[k].clone()
                }
            })
            .collect();
        current = ConsistencyState {
            base: CentroidModel::from_raw_centroids(centroids, start.temperature()),
            params: state.params,
            pseudo_labels: selected,
        };
    }
    Ok(current)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_robin_masks() {
        let masks = consistency_masks(&[3, 0, 5, 1, 4, 2], 2, 0.5);
        assert_eq!(masks, vec![vec![3, 5], vec![0]]);
    }

    #[test]
    fn single_mask_takes_all() {
        let masks = consistency_masks(&[3, 0, 5, 1, 4, 2], 1, 0.5);
        assert_eq!(masks, vec![vec![3, 0, 5]]);
    }

    #[test]
    fn more_masks_than_coordinates() {
        let masks = consistency_masks(&[2, 1, 0, 3], 5, 0.5);
        assert_eq!(masks, vec![vec![2], vec![1], vec![], vec![], vec![]]);
    }

    #[test]
    fn masked_count_rounding() {
        assert_eq!(masked_count(6, 0.5), 3);
        assert_eq!(masked_count(30, 0.1), 3);
        assert_eq!(masked_count(10, 0.01), 1);
        assert_eq!(masked_count(7, 0.5), 4);
    }

    #[test]
    fn flip_under_mask_is_excluded() {
        // Masking the dominant coordinate of `a` moves it to class 1; `b`
        // survives both masks.
        let base = CentroidModel::from_raw_centroids(vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 1.0]], 10.0);
        let state = ConsistencyState::new(
            base,
            ConsistencyParams {
                mask_count: 2,
                mask_fraction: 0.5,
                rounds: 1,
            },
        );
        let (a, b) = ([2.0, 1.0, 0.0], [0.0, 3.0, 2.0]);
        let u = [UnlabeledExample { id: "a", features: &a }, UnlabeledExample { id: "b", features: &b }];
        let sel = consistency_select(&state, &u);
        assert_eq!(sel, BTreeMap::from([("b".to_string(), 1)]));
        assert!(consistency_select(&state, &[]).is_empty());
    }

    #[test]
    fn empty_selection_keeps_plain_fit() {
        let base = CentroidModel::from_raw_centroids(vec![vec![1.0, 0.0], vec![0.0, 1.0]], 10.0);
        let state = ConsistencyState::new(base.clone(), ConsistencyParams::default());
        let x = [1.0, 0.0];
        let l = [LabeledExample { id: "l", features: &x, label: 0 }];
        let out = consistency_self_train(&state, &l, &[]).unwrap();
        assert_eq!(out.base, base);
        assert!(out.pseudo_labels.is_empty());
        assert_eq!(consistency_self_train(&state, &[], &[]), Err(LearnerError::NoLabels));
    }
}
