//! Cumulative seed/label budgets turned into an ordered checkpoint schedule.
//!
//! Seed targets are labels per class. Label targets are total labels across
//! all classes and include the labels already bought during seeding, so a
//! label target equal to the current count yields a zero-delta checkpoint
//! that is still evaluated.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::LabeledState;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ScheduleError {
    #[error("{0}")]
    InvalidBudgets(String),
    #[error("label budget {budget} exceeds pool size {pool}")]
    BudgetExceedsPool { budget: usize, pool: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckpointKind {
    Seed,
    Label,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub index: usize,
    pub kind: CheckpointKind,
    pub cumulative_target: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CheckpointSchedule {
    pub checkpoints: Vec<Checkpoint>,
    pub warnings: Vec<String>,
}

impl CheckpointSchedule {
    pub fn len(&self) -> usize {
        self.checkpoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.checkpoints.is_empty()
    }
}

/// Labels to buy before training at a checkpoint.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AcquisitionRequest {
    /// Class-stratified seeding; one delta per class index.
    StratifiedPerClass { per_class_delta: Vec<usize> },
    /// Total count chosen by the configured query strategy.
    StrategyTotal { total_delta: usize },
}

impl AcquisitionRequest {
    pub fn total(&self) -> usize {
        match self {
            Self::StratifiedPerClass { per_class_delta } => per_class_delta.iter().sum(),
            Self::StrategyTotal { total_delta } => *total_delta,
        }
    }
}

pub(crate) fn check_budget_list(name: &str, budgets: &[usize]) -> Result<(), String> {
    if let Some(pos) = budgets.iter().position(|&b| b == 0) {
        return Err(format!("{name}[{pos}] must be positive"));
    }
    if let Some(pos) = budgets.windows(2).position(|w| w[0] >= w[1]) {
        return Err(format!(
            "{name} must be strictly increasing ({} then {})",
            budgets[pos],
            budgets[pos + 1]
        ));
    }
    Ok(())
}

pub fn build_schedule(
    seed_budgets: &[usize],
    label_budgets: &[usize],
    class_count: usize,
    pool_size: usize,
) -> Result<CheckpointSchedule, ScheduleError> {
    check_budget_list("seed_budgets", seed_budgets).map_err(ScheduleError::InvalidBudgets)?;
    check_budget_list("label_budgets", label_budgets).map_err(ScheduleError::InvalidBudgets)?;
    if seed_budgets.is_empty() && label_budgets.is_empty() {
        return Err(ScheduleError::InvalidBudgets(
            "at least one of seed_budgets, label_budgets must be non-empty".into(),
        ));
    }
    if class_count == 0 || pool_size == 0 {
        return Err(ScheduleError::InvalidBudgets(
            "class count and pool size must be positive".into(),
        ));
    }
    if let Some(&max_label) = label_budgets.last() {
        if max_label > pool_size {
            return Err(ScheduleError::BudgetExceedsPool {
                budget: max_label,
                pool: pool_size,
            });
        }
    }

    let mut warnings = Vec::new();
    let seed_total = seed_budgets.last().map(|&n| n * class_count).unwrap_or(0);
    if seed_total > pool_size {
        warnings.push(format!(
            "seed budget {} per class needs {seed_total} labels but the pool has {pool_size}",
            seed_budgets.last().unwrap()
        ));
    }
    for &b in label_budgets.iter().filter(|&&b| b < seed_total) {
        warnings.push(format!(
            "label budget {b} is below the {seed_total} labels bought during seeding; its checkpoint adds nothing"
        ));
    }

    let checkpoints = seed_budgets
        .iter()
        .map(|&t| (CheckpointKind::Seed, t))
        .chain(label_budgets.iter().map(|&t| (CheckpointKind::Label, t)))
        .enumerate()
        .map(|(index, (kind, cumulative_target))| Checkpoint {
            index,
            kind,
            cumulative_target,
        })
        .collect();
    Ok(CheckpointSchedule { checkpoints, warnings })
}

pub fn next_acquisition(checkpoint: &Checkpoint, state: &LabeledState, class_count: usize) -> AcquisitionRequest {
    match checkpoint.kind {
        CheckpointKind::Seed => AcquisitionRequest::StratifiedPerClass {
            per_class_delta: (0..class_count)
                .map(|c| checkpoint.cumulative_target.saturating_sub(state.count_for(c)))
                .collect(),
        },
        CheckpointKind::Label => AcquisitionRequest::StrategyTotal {
            total_delta: checkpoint.cumulative_target.saturating_sub(state.len()),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{DatasetHandle, Sample};

    #[test]
    fn table_shaped_seed_only_schedule() {
        let s = build_schedule(&[1, 2, 5, 10], &[], 31, 10_000).unwrap();
        assert_eq!(s.len(), 4);
        assert!(s.checkpoints.iter().all(|c| c.kind == CheckpointKind::Seed));
        assert_eq!(
            s.checkpoints.iter().map(|c| c.index).collect::<Vec<_>>(),
            vec![0, 1, 2, 3]
        );
    }

    #[test]
    fn single_label_checkpoint() {
        let s = build_schedule(&[], &[50], 5, 100).unwrap();
        assert_eq!(
            s.checkpoints,
            vec![Checkpoint {
                index: 0,
                kind: CheckpointKind::Label,
                cumulative_target: 50
            }]
        );
    }

    #[test]
    fn targets_copied_verbatim() {
        let s = build_schedule(&[1, 2], &[20, 40], 5, 100).unwrap();
        let got: Vec<_> = s.checkpoints.iter().map(|c| (c.kind, c.cumulative_target)).collect();
        use CheckpointKind::*;
        assert_eq!(got, vec![(Seed, 1), (Seed, 2), (Label, 20), (Label, 40)]);
        assert!(s.warnings.is_empty());
    }

    #[test]
    fn oversized_label_budget_rejected() {
        assert_eq!(
            build_schedule(&[1], &[1_000_000_000], 5, 500),
            Err(ScheduleError::BudgetExceedsPool {
                budget: 1_000_000_000,
                pool: 500
            })
        );
    }

    #[test]
    fn low_label_budget_warns() {
        let s = build_schedule(&[10], &[20, 60], 5, 100).unwrap();
        assert_eq!(s.warnings.len(), 1);
        let s = build_schedule(&[30], &[], 5, 100).unwrap();
        assert_eq!(s.warnings.len(), 1);
    }

    #[test]
    fn bad_lists_rejected() {
        assert!(matches!(build_schedule(&[5, 2], &[], 2, 10), Err(ScheduleError::InvalidBudgets(_))));
        assert!(matches!(build_schedule(&[], &[], 2, 10), Err(ScheduleError::InvalidBudgets(_))));
        assert!(matches!(build_schedule(&[0, 1], &[], 2, 10), Err(ScheduleError::InvalidBudgets(_))));
    }

    fn pool(labels: &[usize], classes: usize) -> DatasetHandle {
        let train = labels
            .iter()
            .enumerate()
            .map(|(i, &c)| Sample::new(format!("s{i:03}"), vec![1.0], c))
            .collect();
        DatasetHandle::new("p", "p", 1, (0..classes).map(|c| c.to_string()).collect(), train, vec![]).unwrap()
    }

    #[test]
    fn per_class_seed_deltas() {
        let ds = pool(&[0, 1, 1, 2, 2, 2], 3);
        let state = LabeledState::new().acquire_labels(&["s000", "s001", "s002"], &ds).unwrap();
        let cp = Checkpoint {
            index: 1,
            kind: CheckpointKind::Seed,
            cumulative_target: 2,
        };
        assert_eq!(
            next_acquisition(&cp, &state, 3),
            AcquisitionRequest::StratifiedPerClass {
                per_class_delta: vec![1, 0, 2]
            }
        );
    }

    #[test]
    fn label_delta_includes_seed_labels() {
        let labels: Vec<usize> = (0..50).map(|i| i % 5).collect();
        let ds = pool(&labels, 5);
        let ids: Vec<String> = (0..10).map(|i| format!("s{i:03}")).collect();
        let state = LabeledState::new().acquire_labels(&ids, &ds).unwrap();
        let cp = Checkpoint {
            index: 4,
            kind: CheckpointKind::Label,
            cumulative_target: 20,
        };
        assert_eq!(next_acquisition(&cp, &state, 5), AcquisitionRequest::StrategyTotal { total_delta: 10 });
    }

    #[test]
    fn zero_delta_at_inclusive_boundary() {
        // 345 classes at 10-shot already hold 3450 labels.
        let labels: Vec<usize> = (0..3450).map(|i| i % 345).collect();
        let ds = pool(&labels, 345);
        let ids: Vec<String> = (0..3450).map(|i| format!("s{i:03}")).collect();
        let state = LabeledState::new().acquire_labels(&ids, &ds).unwrap();
        assert_eq!(state.len(), 345 * 10);
        let cp = Checkpoint {
            index: 4,
            kind: CheckpointKind::Label,
            cumulative_target: 3450,
        };
        assert_eq!(next_acquisition(&cp, &state, 345).total(), 0);
    }
}
