//! Task files, experiment configuration, dotted-path overrides, and plan
//! validation against a dataset registry.
//!
//! A task file is a JSON document:
//!
//! ```json
//! {
//!   "name": "clipart-to-sketch",
//!   "problem_type": "image_classification",
//!   "stages": [
//!     {"name": "base", "dataset": "clipart", "seed_budgets": [1, 2, 5, 10], "label_budget": [50, 125]},
//!     {"name": "adapt", "dataset": "sketch", "seed_budgets": [1, 2, 5, 10], "label_budget": []}
//!   ],
//!   "whitelist": ["real", "painting"],
//!   "results_file": "results.jsonl"
//! }
//! ```

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::dataset::{DatasetHandle, DatasetRegistry};
use crate::learners::centroid::{TauSearch, DEFAULT_GRID, DEFAULT_SCALE};
use crate::learners::{ConsistencyParams, MmeHyper};
use crate::query::QueryStrategy;
use crate::schedule::{build_schedule, check_budget_list, ScheduleError};

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("malformed input: {0}")]
    MalformedInput(String),
    #[error("schema violation: {0}")]
    SchemaViolation(String),
    #[error("unknown key '{0}'")]
    UnknownKey(String),
    #[error("type mismatch for '{key}': {detail}")]
    TypeMismatch { key: String, detail: String },
    #[error("invalid override token '{0}' (expected key=value)")]
    BadOverride(String),
    #[error("invalid parameter {key}: {detail}")]
    InvalidParameter { key: String, detail: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemType {
    ImageClassification,
    VideoClassification,
    ObjectDetection,
}

impl fmt::Display for ProblemType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::ImageClassification => "image_classification",
            Self::VideoClassification => "video_classification",
            Self::ObjectDetection => "object_detection",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageKind {
    Base,
    Adapt,
}

impl fmt::Display for StageKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Base => "base",
            Self::Adapt => "adapt",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageSpec {
    #[serde(rename = "name")]
    pub kind: StageKind,
    pub dataset: String,
    /// Cumulative labels per class.
    pub seed_budgets: Vec<usize>,
    /// Cumulative labels across all classes, seed labels included.
    #[serde(rename = "label_budget")]
    pub label_budgets: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSpec {
    pub name: String,
    pub problem_type: ProblemType,
    pub stages: Vec<StageSpec>,
    pub whitelist: Vec<String>,
    pub results_file: String,
}

impl TaskSpec {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let violation = |m: String| Err(ConfigError::SchemaViolation(m));
        if self.name.trim().is_empty() {
            return violation("name: must be non-empty".into());
        }
        if self.results_file.trim().is_empty() {
            return violation("results_file: must be non-empty".into());
        }
        if self.stages.is_empty() {
            return violation("stages: must contain at least one stage".into());
        }
        for (i, stage) in self.stages.iter().enumerate() {
            let expected = if i == 0 { StageKind::Base } else { StageKind::Adapt };
            if stage.kind != expected {
                return violation(format!("stages[{i}].name: expected \"{expected}\", found \"{}\"", stage.kind));
            }
            if stage.dataset.is_empty() {
                return violation(format!("stages[{i}].dataset: must be non-empty"));
            }
            check_budget_list("seed_budgets", &stage.seed_budgets)
                .and_then(|_| check_budget_list("label_budget", &stage.label_budgets))
                .or_else(|m| violation(format!("stages[{i}].{m}")))?;
            if stage.seed_budgets.is_empty() && stage.label_budgets.is_empty() {
                return violation(format!("stages[{i}]: seed_budgets and label_budget are both empty"));
            }
        }
        let mut seen = BTreeSet::new();
        for name in &self.whitelist {
            if !seen.insert(name) {
                return violation(format!("whitelist: duplicate entry '{name}'"));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("task spec serializes")
    }

    pub fn checkpoint_count(&self) -> usize {
        self.stages
            .iter()
            .map(|s| s.seed_budgets.len() + s.label_budgets.len())
            .sum()
    }
}

pub fn parse_task_spec(text: &str) -> Result<TaskSpec, ConfigError> {
    let spec: TaskSpec = serde_json::from_str(text).map_err(|e| match e.classify() {
        serde_json::error::Category::Data => ConfigError::SchemaViolation(e.to_string()),
        _ => ConfigError::MalformedInput(e.to_string()),
    })?;
    spec.validate()?;
    Ok(spec)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Centroid,
    Mme,
    Consistency,
}

impl Algorithm {
    pub const NAMES: [&'static str; 3] = ["centroid", "mme", "consistency"];
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Centroid => "centroid",
            Self::Mme => "mme",
            Self::Consistency => "consistency",
        })
    }
}

impl FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "centroid" => Ok(Self::Centroid),
            "mme" => Ok(Self::Mme),
            "consistency" => Ok(Self::Consistency),
            other => Err(format!("unknown algorithm '{other}' (valid: {})", Self::NAMES.join(", "))),
        }
    }
}

/// Learner hyperparameters, all reachable as `algorithm_params.<name>`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgorithmParams {
    /// Entropy weight for minimax entropy.
    pub lambda: f64,
    pub learning_rate: f64,
    pub iterations: usize,
    /// Softmax temperature of the minimax-entropy prototypes.
    pub temperature: f64,
    /// Mapped dimension for minimax entropy; 0 keeps the input dimension.
    pub feature_dim: usize,
    /// Candidate scales for the centroid softmax.
    pub temperature_grid: Vec<f64>,
    /// Scale used when there are too few labels to tune.
    pub default_scale: f64,
    pub episodes: usize,
    pub mask_count: usize,
    pub mask_fraction: f64,
    pub rounds: usize,
}

impl Default for AlgorithmParams {
    fn default() -> Self {
        let mme = MmeHyper::default();
        let cons = ConsistencyParams::default();
        Self {
            lambda: mme.lambda,
            learning_rate: mme.learning_rate,
            iterations: mme.iterations,
            temperature: mme.temperature,
            feature_dim: 0,
            temperature_grid: DEFAULT_GRID.to_vec(),
            default_scale: DEFAULT_SCALE,
            episodes: TauSearch::default().episodes,
            mask_count: cons.mask_count,
            mask_fraction: cons.mask_fraction,
            rounds: cons.rounds,
        }
    }
}

impl AlgorithmParams {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |key: &str, detail: String| {
            Err(ConfigError::InvalidParameter {
                key: format!("algorithm_params.{key}"),
                detail,
            })
        };
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return bad("lambda", format!("must be >= 0, got {}", self.lambda));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return bad("learning_rate", format!("must be >= 0, got {}", self.learning_rate));
        }
        if self.iterations < 1 {
            return bad("iterations", "must be >= 1".into());
        }
        if !(self.temperature.is_finite() && self.temperature > 0.0) {
            return bad("temperature", format!("must be > 0, got {}", self.temperature));
        }
        if self.temperature_grid.is_empty() || self.temperature_grid.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
            return bad("temperature_grid", "must be a non-empty list of positive values".into());
        }
        if !(self.default_scale.is_finite() && self.default_scale > 0.0) {
            return bad("default_scale", "must be > 0".into());
        }
        if self.episodes < 1 {
            return bad("episodes", "must be >= 1".into());
        }
        if self.mask_count < 1 {
            return bad("mask_count", "must be >= 1".into());
        }
        if !(self.mask_fraction > 0.0 && self.mask_fraction < 1.0) {
            return bad("mask_fraction", format!("must be in (0, 1), got {}", self.mask_fraction));
        }
        if self.rounds < 1 {
            return bad("rounds", "must be >= 1".into());
        }
        Ok(())
    }

    pub fn tau_search(&self) -> TauSearch {
        TauSearch {
            grid: self.temperature_grid.clone(),
            episodes: self.episodes,
            fallback: self.default_scale,
        }
    }

    pub fn mme_hyper(&self) -> MmeHyper {
        MmeHyper {
            temperature: self.temperature,
            lambda: self.lambda,
            learning_rate: self.learning_rate,
            iterations: self.iterations,
        }
    }

    pub fn consistency_params(&self) -> ConsistencyParams {
        ConsistencyParams {
            mask_count: self.mask_count,
            mask_fraction: self.mask_fraction,
            rounds: self.rounds,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub task: TaskSpec,
    pub algorithm: Algorithm,
    pub master_seed: u64,
    pub query_strategy: QueryStrategy,
    pub algorithm_params: AlgorithmParams,
    pub pinned_source: Option<String>,
}

impl ExperimentConfig {
    pub fn new(task: TaskSpec, algorithm: Algorithm, master_seed: u64) -> Self {
        Self {
            task,
            algorithm,
            master_seed,
            query_strategy: QueryStrategy::default(),
            algorithm_params: AlgorithmParams::default(),
            pinned_source: None,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.task.validate()?;
        self.algorithm_params.validate()
    }

    /// Canonical JSON used for the config digest.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum OverrideValue {
    Scalar(String),
    List(Vec<String>),
}

/// Ordered `key=value` overrides; later entries win.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct OverrideSet {
    pub entries: Vec<(String, OverrideValue)>,
}

/// Dotted path; a segment is an identifier or a list index.
fn valid_key(key: &str) -> bool {
    key.split('.').all(|seg| {
        if !seg.is_empty() && seg.bytes().all(|b| b.is_ascii_digit()) {
            return true;
        }
        let mut chars = seg.chars();
        matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
            && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
    })
}

impl OverrideSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, key: impl Into<String>, value: OverrideValue) -> Result<(), ConfigError> {
        let key = key.into();
        if !valid_key(&key) {
            return Err(ConfigError::BadOverride(key));
        }
        self.entries.push((key, value));
        Ok(())
    }

    /// Parse `a.b.c=value`; a value containing commas is a list.
    pub fn push_token(&mut self, token: &str) -> Result<(), ConfigError> {
        let (key, value) = token
            .split_once('=')
            .ok_or_else(|| ConfigError::BadOverride(token.to_string()))?;
        let value = if value.contains(',') {
            OverrideValue::List(value.split(',').map(|s| s.trim().to_string()).collect())
        } else {
            OverrideValue::Scalar(value.trim().to_string())
        };
        self.push(key.trim(), value)
    }

    pub fn parse<S: AsRef<str>>(tokens: &[S]) -> Result<Self, ConfigError> {
        let mut set = Self::new();
        for t in tokens {
            set.push_token(t.as_ref())?;
        }
        Ok(set)
    }
}

fn coerce_scalar(template: &Value, raw: &str) -> Option<Value> {
    match template {
        Value::Bool(_) => raw.parse::<bool>().ok().map(Value::Bool),
        Value::Number(n) if n.is_u64() => raw.parse::<u64>().ok().map(Value::from),
        Value::Number(n) if n.is_i64() => raw.parse::<i64>().ok().map(Value::from),
        Value::Number(_) => raw
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .and_then(serde_json::Number::from_f64)
            .map(Value::Number),
        Value::String(_) => Some(Value::String(raw.to_string())),
        Value::Null if raw == "null" => Some(Value::Null),
        Value::Null => Some(Value::String(raw.to_string())),
        Value::Array(_) | Value::Object(_) => None,
    }
}

fn infer_scalar(raw: &str) -> Value {
    if let Ok(u) = raw.parse::<u64>() {
        return Value::from(u);
    }
    match raw.parse::<f64>().ok().and_then(serde_json::Number::from_f64) {
        Some(n) => Value::Number(n),
        None => Value::String(raw.to_string()),
    }
}

fn coerce(template: &Value, value: &OverrideValue) -> Option<Value> {
    match (template, value) {
        (Value::Array(items), v) => {
            let raws: Vec<&str> = match v {
                OverrideValue::Scalar(s) if s.is_empty() => vec![],
                OverrideValue::Scalar(s) => vec![s.as_str()],
                OverrideValue::List(l) => l.iter().map(String::as_str).collect(),
            };
            raws.into_iter()
                .map(|r| match items.first() {
                    Some(t) => coerce_scalar(t, r),
                    None => Some(infer_scalar(r)),
                })
                .collect::<Option<Vec<_>>>()
                .map(Value::Array)
        }
        (t, OverrideValue::Scalar(s)) => coerce_scalar(t, s),
        (_, OverrideValue::List(_)) => None,
    }
}

fn type_name(v: &Value) -> &'static str {
    match v {
        Value::Null => "optional string",
        Value::Bool(_) => "boolean",
        Value::Number(n) if n.is_u64() => "non-negative integer",
        Value::Number(_) => "number",
        Value::String(_) => "string",
        Value::Array(_) => "list",
        Value::Object(_) => "section",
    }
}

/// Apply `overrides` in order; the input config is not modified.
pub fn apply_overrides(config: &ExperimentConfig, overrides: &OverrideSet) -> Result<ExperimentConfig, ConfigError> {
    if overrides.entries.is_empty() {
        return Ok(config.clone());
    }
    let mut doc = serde_json::to_value(config).expect("config serializes");
    for (key, value) in &overrides.entries {
        let mut slot = &mut doc;
        for seg in key.split('.') {
            slot = match slot {
                Value::Object(map) => map.get_mut(seg).ok_or_else(|| ConfigError::UnknownKey(key.clone()))?,
                Value::Array(items) => seg
                    .parse::<usize>()
                    .ok()
                    .and_then(|i| items.get_mut(i))
                    .ok_or_else(|| ConfigError::UnknownKey(key.clone()))?,
                _ => return Err(ConfigError::UnknownKey(key.clone())),
            };
        }
        let replacement = coerce(slot, value).ok_or_else(|| ConfigError::TypeMismatch {
            key: key.clone(),
            detail: format!("expected {}, got {:?}", type_name(slot), value),
        })?;
        *slot = replacement;
        serde_json::from_value::<ExperimentConfig>(doc.clone()).map_err(|e| ConfigError::TypeMismatch {
            key: key.clone(),
            detail: e.to_string(),
        })?;
    }
    let out: ExperimentConfig = serde_json::from_value(doc).expect("checked after each override");
    out.validate()?;
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlanWarning {
    /// Offending config key or dataset name.
    pub subject: String,
    pub message: String,
}

impl fmt::Display for PlanWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.subject, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PlanError {
    #[error("stage {stage}: unknown target dataset '{name}'")]
    UnknownTargetDataset { stage: usize, name: String },
    #[error("unsupported problem_type '{0}'")]
    UnsupportedProblemType(ProblemType),
    #[error("stage {stage}: label budget {budget} exceeds the {pool}-sample pool of '{dataset}'")]
    BudgetExceedsPool {
        stage: usize,
        dataset: String,
        budget: usize,
        pool: usize,
    },
    #[error("whitelist: no candidate source dataset resolves and no pinned_source is set")]
    EmptyWhitelist,
    #[error("pinned_source: unknown dataset '{0}'")]
    UnknownSourceDataset(String),
    #[error("dataset '{name}': {detail}")]
    IncompatibleDataset { name: String, detail: String },
    #[error("stage {stage}: {detail}")]
    InvalidStage { stage: usize, detail: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidatedPlan {
    /// Whitelisted source candidates that resolve and are compatible.
    pub candidates: Vec<String>,
    pub warnings: Vec<PlanWarning>,
}

fn compatible(reference: &DatasetHandle, other: &DatasetHandle) -> Result<(), String> {
    if other.dim() != reference.dim() {
        return Err(format!("dim {} differs from '{}' ({})", other.dim(), reference.name(), reference.dim()));
    }
    if other.class_names() != reference.class_names() {
        return Err(format!("class list differs from '{}'", reference.name()));
    }
    Ok(())
}

/// Whitelisted datasets usable as a source for `target`: present in the
/// registry, not the target itself, same dimension and classes.
pub fn source_candidates(
    whitelist: &[String],
    target: &DatasetHandle,
    registry: &DatasetRegistry,
) -> (Vec<String>, Vec<PlanWarning>) {
    let mut candidates = Vec::new();
    let mut warnings = Vec::new();
    for name in whitelist {
        let warn = |message: String| PlanWarning {
            subject: name.clone(),
            message,
        };
        match registry.get(name) {
            None => warnings.push(warn("not in the dataset registry; skipped".into())),
            Some(_) if name == target.name() => warnings.push(warn("is the base target; skipped as a source".into())),
            Some(ds) => match compatible(target, ds) {
                Ok(()) => candidates.push(name.clone()),
                Err(detail) => warnings.push(warn(format!("{detail}; skipped"))),
            },
        }
    }
    (candidates, warnings)
}

/// Resolve every dataset the config refers to. Never mutates its inputs.
pub fn validate_plan(config: &ExperimentConfig, registry: &DatasetRegistry) -> Result<ValidatedPlan, Vec<PlanError>> {
    let mut errors = Vec::new();
    let mut warnings = Vec::new();
    let task = &config.task;
    if task.problem_type == ProblemType::ObjectDetection {
        errors.push(PlanError::UnsupportedProblemType(task.problem_type));
    }

    let base_target = task.stages.first().and_then(|s| registry.get(&s.dataset));
    for (i, stage) in task.stages.iter().enumerate() {
        let Some(target) = registry.get(&stage.dataset) else {
            errors.push(PlanError::UnknownTargetDataset {
                stage: i,
                name: stage.dataset.clone(),
            });
            continue;
        };
        if let Some(base) = base_target {
            if let Err(detail) = compatible(base, target) {
                errors.push(PlanError::IncompatibleDataset {
                    name: target.name().to_string(),
                    detail,
                });
            }
        }
        match build_schedule(&stage.seed_budgets, &stage.label_budgets, target.class_count(), target.train_pool().len()) {
            Ok(schedule) => warnings.extend(schedule.warnings.into_iter().map(|message| PlanWarning {
                subject: format!("task.stages[{i}]"),
                message,
            })),
            Err(ScheduleError::BudgetExceedsPool { budget, pool }) => errors.push(PlanError::BudgetExceedsPool {
                stage: i,
                dataset: target.name().to_string(),
                budget,
                pool,
            }),
            Err(ScheduleError::InvalidBudgets(detail)) => errors.push(PlanError::InvalidStage { stage: i, detail }),
        }
    }

    let mut candidates = Vec::new();
    if let Some(base) = base_target {
        let (found, skipped) = source_candidates(&task.whitelist, base, registry);
        candidates = found;
        warnings.extend(skipped);
        match &config.pinned_source {
            Some(pinned) => match registry.get(pinned) {
                None => errors.push(PlanError::UnknownSourceDataset(pinned.clone())),
                Some(ds) => {
                    if let Err(detail) = compatible(base, ds) {
                        errors.push(PlanError::IncompatibleDataset {
                            name: pinned.clone(),
                            detail,
                        });
                    }
                }
            },
            None if candidates.is_empty() => errors.push(PlanError::EmptyWhitelist),
            None => {}
        }
    }

    if errors.is_empty() {
        Ok(ValidatedPlan { candidates, warnings })
    } else {
        Err(errors)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TASK: &str = r#"{
        "name": "t",
        "problem_type": "image_classification",
        "stages": [{"name": "base", "dataset": "synthA", "seed_budgets": [1, 2, 5, 10], "label_budget": []}],
        "whitelist": ["synthSrc"],
        "results_file": "r.jsonl"
    }"#;

    #[test]
    fn parses_seed_only_stage() {
        let t = parse_task_spec(TASK).unwrap();
        assert_eq!(t.stages.len(), 1);
        assert_eq!(t.stages[0].seed_budgets, vec![1, 2, 5, 10]);
        assert_eq!(t.stages[0].kind, StageKind::Base);
    }

    #[test]
    fn syntax_vs_schema_errors() {
        assert!(matches!(parse_task_spec("{\"name\": "), Err(ConfigError::MalformedInput(_))));
        let empty = TASK.replace("[1, 2, 5, 10]", "[]");
        assert!(matches!(parse_task_spec(&empty), Err(ConfigError::SchemaViolation(_))));
        let unordered = TASK.replace("[1, 2, 5, 10]", "[5, 2]");
        assert!(matches!(parse_task_spec(&unordered), Err(ConfigError::SchemaViolation(_))));
        let extra = TASK.replace("\"name\": \"t\",", "\"name\": \"t\", \"extra\": 1,");
        assert!(matches!(parse_task_spec(&extra), Err(ConfigError::SchemaViolation(_))));
        let missing = TASK.replace(",\n        \"results_file\": \"r.jsonl\"", "");
        assert!(matches!(parse_task_spec(&missing), Err(ConfigError::SchemaViolation(_))));
        let adapt_first = TASK.replace("\"base\"", "\"adapt\"");
        assert!(matches!(parse_task_spec(&adapt_first), Err(ConfigError::SchemaViolation(_))));
    }

    #[test]
    fn object_detection_parses() {
        let t = parse_task_spec(&TASK.replace("image_classification", "object_detection")).unwrap();
        assert_eq!(t.problem_type, ProblemType::ObjectDetection);
    }

    fn config() -> ExperimentConfig {
        ExperimentConfig::new(parse_task_spec(TASK).unwrap(), Algorithm::Mme, 3)
    }

    #[test]
    fn empty_overrides_are_identity() {
        assert_eq!(apply_overrides(&config(), &OverrideSet::new()).unwrap(), config());
    }

    #[test]
    fn single_path_override() {
        let out = apply_overrides(&config(), &OverrideSet::parse(&["algorithm_params.lambda=0.1"]).unwrap()).unwrap();
        assert_eq!(out.algorithm_params.lambda, 0.1);
        let out = apply_overrides(&config(), &OverrideSet::parse(&["algorithm_params.lambda=0.25"]).unwrap()).unwrap();
        let mut want = config();
        want.algorithm_params.lambda = 0.25;
        assert_eq!(out, want);
    }

    #[test]
    fn last_write_wins() {
        let out = apply_overrides(
            &config(),
            &OverrideSet::parse(&["algorithm_params.iterations=1", "algorithm_params.iterations=2"]).unwrap(),
        )
        .unwrap();
        assert_eq!(out.algorithm_params.iterations, 2);
    }

    #[test]
    fn lists_enums_and_options() {
        let out = apply_overrides(
            &config(),
            &OverrideSet::parse(&[
                "algorithm_params.temperature_grid=1,10,100",
                "task.whitelist=a,b",
                "algorithm=centroid",
                "query_strategy=margin",
                "pinned_source=src",
                "master_seed=18446744073709551615",
            ])
            .unwrap(),
        )
        .unwrap();
        assert_eq!(out.algorithm_params.temperature_grid, vec![1.0, 10.0, 100.0]);
        assert_eq!(out.task.whitelist, vec!["a", "b"]);
        assert_eq!(out.algorithm, Algorithm::Centroid);
        assert_eq!(out.query_strategy, QueryStrategy::Margin);
        assert_eq!(out.pinned_source.as_deref(), Some("src"));
        assert_eq!(out.master_seed, u64::MAX);
    }

    #[test]
    fn override_errors() {
        let c = config();
        let run = |t: &str| apply_overrides(&c, &OverrideSet::parse(&[t]).unwrap());
        assert_eq!(run("algorithm_params.nope=1"), Err(ConfigError::UnknownKey("algorithm_params.nope".into())));
        assert_eq!(run("master_seed.x=1"), Err(ConfigError::UnknownKey("master_seed.x".into())));
        assert!(matches!(run("algorithm_params.iterations=many"), Err(ConfigError::TypeMismatch { .. })));
        assert!(matches!(run("algorithm=svm"), Err(ConfigError::TypeMismatch { .. })));
        assert!(matches!(run("algorithm_params=3"), Err(ConfigError::TypeMismatch { .. })));
        assert!(matches!(run("algorithm_params.mask_fraction=1.5"), Err(ConfigError::InvalidParameter { .. })));
        assert!(OverrideSet::parse(&["1bad=2"]).is_err());
        assert!(OverrideSet::parse(&["novalue"]).is_err());
        assert_eq!(run("task.stages.9.seed_budgets=1"), Err(ConfigError::UnknownKey("task.stages.9.seed_budgets".into())));
    }

    #[test]
    fn list_index_override() {
        let out = apply_overrides(&config(), &OverrideSet::parse(&["task.stages.0.seed_budgets=1,3,7"]).unwrap()).unwrap();
        assert_eq!(out.task.stages[0].seed_budgets, vec![1, 3, 7]);
    }
}
