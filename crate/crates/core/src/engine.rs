//! Experiment orchestration: source selection, learner carry-over, and the
//! acquire -> train -> evaluate -> record loop for every checkpoint.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use thiserror::Error;

use crate::config::{source_candidates, validate_plan, ConfigError, ExperimentConfig, PlanError, StageKind, TaskSpec};
use crate::dataset::{DataError, DatasetHandle, DatasetRegistry, LabeledState, Sample};
use crate::learners::{Classifier, LearnerError, LearnerState, TrainingData};
use crate::query::{run_strategy, stratified_seed_query, QueryContext, QueryError};
use crate::results::{
    metadata_path, partial_path, ResultsRecord, RunMetadata, SamplePrediction, StageMetadata, SCHEMA_VERSION, TOP_K,
};
use crate::schedule::{build_schedule, next_acquisition, AcquisitionRequest, ScheduleError};
use crate::selector::{select_source, SelectorError};
use crate::stream::fnv1a64;
pub use crate::stream::{derive_stream, RngStream};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("{}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    Plan(Vec<PlanError>),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error(transparent)]
    Selector(#[from] SelectorError),
    #[error(transparent)]
    Query(#[from] QueryError),
    #[error("stage {stage}{}: {source}", checkpoint.map(|c| format!(" checkpoint {c}")).unwrap_or_default())]
    Learner {
        stage: usize,
        checkpoint: Option<usize>,
        #[source]
        source: LearnerError,
    },
    #[error("empty test set")]
    EmptyTestSet,
    #[error("stage {0}: {1}")]
    StageOrder(usize, String),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Milliseconds from a monotonic source.
pub trait Clock: Send + Sync {
    fn now_ms(&self) -> u64;
}

#[derive(Debug)]
pub struct MonotonicClock(Instant);

impl Default for MonotonicClock {
    fn default() -> Self {
        Self(Instant::now())
    }
}

impl Clock for MonotonicClock {
    fn now_ms(&self) -> u64 {
        self.0.elapsed().as_millis() as u64
    }
}

/// Always reads zero; makes `elapsed_ms` reproducible.
#[derive(Debug, Default, Clone, Copy)]
pub struct FrozenClock;

impl Clock for FrozenClock {
    fn now_ms(&self) -> u64 {
        0
    }
}

pub struct RunContext {
    pub config: ExperimentConfig,
    pub registry: DatasetRegistry,
    pub clock: Box<dyn Clock>,
}

impl RunContext {
    pub fn new(config: ExperimentConfig, registry: DatasetRegistry) -> Self {
        Self {
            config,
            registry,
            clock: Box::new(MonotonicClock::default()),
        }
    }

    pub fn with_clock(mut self, clock: impl Clock + 'static) -> Self {
        self.clock = Box::new(clock);
        self
    }

    pub fn master_seed(&self) -> u64 {
        self.config.master_seed
    }

    fn dataset(&self, name: &str, stage: usize) -> Result<&Arc<DatasetHandle>, EngineError> {
        self.registry.get(name).ok_or_else(|| {
            EngineError::Plan(vec![PlanError::UnknownTargetDataset {
                stage,
                name: name.to_string(),
            }])
        })
    }
}

pub fn config_digest(config: &ExperimentConfig) -> String {
    format!("{:016x}", fnv1a64(config.canonical_json().as_bytes()))
}

/// Model and source handed from one stage to the next.
#[derive(Debug, Clone)]
pub struct Carry {
    pub state: LearnerState,
    pub source: String,
}

#[derive(Debug, Clone)]
pub struct StageOutcome {
    pub carry: Carry,
    pub records: Vec<ResultsRecord>,
    pub metadata: StageMetadata,
    /// Every id bought during the stage, in acquisition order.
    pub acquired: Vec<String>,
    pub warnings: Vec<String>,
}

/// A stage that aborted; `records` holds the checkpoints that completed.
#[derive(Debug)]
pub struct StageFailure {
    pub records: Vec<ResultsRecord>,
    pub error: EngineError,
}

impl<E: Into<EngineError>> From<E> for StageFailure {
    fn from(e: E) -> Self {
        Self {
            records: Vec::new(),
            error: e.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub per_sample: Vec<SamplePrediction>,
    pub top1_accuracy: f64,
}

/// Predict every test sample in file order and score top-1 accuracy.
pub fn evaluate(state: &impl Classifier, test_set: &[Sample]) -> Result<Evaluation, LearnerError> {
    if test_set.is_empty() {
        return Err(LearnerError::EmptyBatch("test"));
    }
    let mut correct = 0usize;
    let mut per_sample = Vec::with_capacity(test_set.len());
    for s in test_set {
        let p = state.predict(s.features())?;
        if p.argmax == s.oracle_label() {
            correct += 1;
        }
        let top = p.top_k(TOP_K);
        per_sample.push(SamplePrediction {
            id: s.id().to_string(),
            top5: top.iter().map(|t| t.0).collect(),
            scores: top.iter().map(|t| t.1).collect(),
        });
    }
    Ok(Evaluation {
        per_sample,
        top1_accuracy: correct as f64 / test_set.len() as f64,
    })
}

fn stage_label(stage: usize) -> String {
    format!("stage{stage}")
}

/// Run one stage. Stage 0 must be the base stage with no inherited state;
/// later stages are adapt stages continuing from `inherited`.
pub fn run_stage(ctx: &RunContext, stage_index: usize, inherited: Option<&Carry>) -> Result<StageOutcome, StageFailure> {
    let config = &ctx.config;
    let stage = config
        .task
        .stages
        .get(stage_index)
        .ok_or_else(|| EngineError::StageOrder(stage_index, "no such stage".into()))?;
    let target = ctx.dataset(&stage.dataset, stage_index)?.clone();
    let seed = ctx.master_seed();
    let slabel = stage_label(stage_index);
    let params = &config.algorithm_params;
    let mut warnings = Vec::new();

    let (source_name, mut state) = match (stage.kind, inherited) {
        (StageKind::Base, None) => {
            let source_name = match &config.pinned_source {
                Some(p) => p.clone(),
                None => {
                    let (candidates, skipped) = source_candidates(&config.task.whitelist, &target, &ctx.registry);
                    warnings.extend(skipped.iter().map(ToString::to_string));
                    select_source(&target, &ctx.registry, &candidates)?.chosen
                }
            };
            let source = ctx.dataset(&source_name, stage_index)?;
            let mut rng = derive_stream(seed, &[slabel.as_str(), "source-fit"]);
            let (state, w) = LearnerState::fit_source(
                config.algorithm,
                params,
                &source.fully_labeled_pool(),
                target.class_count(),
                &mut rng,
            )
            .map_err(|source| EngineError::Learner {
                stage: stage_index,
                checkpoint: None,
                source,
            })?;
            warnings.extend(w);
            (source_name, state)
        }
        (StageKind::Adapt, Some(carry)) => (
            config.pinned_source.clone().unwrap_or_else(|| carry.source.clone()),
            carry.state.clone(),
        ),
        (StageKind::Base, Some(_)) => {
            return Err(EngineError::StageOrder(stage_index, "base stage cannot inherit a model".into()).into())
        }
        (StageKind::Adapt, None) => {
            return Err(EngineError::StageOrder(stage_index, "adapt stage needs an inherited model".into()).into())
        }
    };
    let source = ctx.dataset(&source_name, stage_index)?.clone();
    let source_examples = source.fully_labeled_pool();

    let class_count = target.class_count();
    let schedule = build_schedule(
        &stage.seed_budgets,
        &stage.label_budgets,
        class_count,
        target.train_pool().len(),
    )?;
    warnings.extend(schedule.warnings.iter().cloned());

    let digest = config_digest(config);
    let mut records = Vec::with_capacity(schedule.len());
    let mut labeled = LabeledState::new();
    let mut acquired = Vec::new();
    let mut trained = false;

    for cp in &schedule.checkpoints {
        let started = ctx.clock.now_ms();
        let clabel = format!("ckpt{}", cp.index);
        let step = (|| -> Result<ResultsRecord, EngineError> {
            let ids = match next_acquisition(cp, &labeled, class_count) {
                AcquisitionRequest::StratifiedPerClass { per_class_delta } => {
                    let mut rng = derive_stream(seed, &[slabel.as_str(), clabel.as_str(), "seed"]);
                    let sel = stratified_seed_query(&target, &labeled, &per_class_delta, &mut rng);
                    warnings.extend(sel.warnings.into_iter().map(|w| format!("{slabel} {clabel}: {w}")));
                    sel.ids
                }
                AcquisitionRequest::StrategyTotal { total_delta: 0 } => Vec::new(),
                AcquisitionRequest::StrategyTotal { total_delta } => {
                    let unlabeled = labeled.unlabeled_examples(&target);
                    let predictions = if config.query_strategy.needs_predictions() {
                        let mut map = BTreeMap::new();
                        for u in &unlabeled {
                            let p = state.predict(u.features).map_err(|source| EngineError::Learner {
                                stage: stage_index,
                                checkpoint: Some(cp.index),
                                source,
                            })?;
                            map.insert(u.id.to_string(), p.probabilities);
                        }
                        Some(map)
                    } else {
                        None
                    };
                    let rng = derive_stream(seed, &[slabel.as_str(), clabel.as_str(), "query"]);
                    let mut qctx =
                        QueryContext::new(unlabeled.iter().map(|u| u.id.to_string()).collect(), predictions, rng)?;
                    run_strategy(config.query_strategy, &mut qctx, total_delta)?
                }
            };
            labeled = labeled.acquire_labels(&ids, &target)?;
            acquired.extend(ids.iter().cloned());

            // Unchanged labels since the last fit leave the model untouched.
            if !ids.is_empty() || !trained {
                let lab = labeled.labeled_examples(&target);
                let unl = labeled.unlabeled_examples(&target);
                let data = TrainingData {
                    source: &source_examples,
                    labeled: &lab,
                    unlabeled: &unl,
                };
                let mut rng = derive_stream(seed, &[slabel.as_str(), clabel.as_str(), "train"]);
                state = state.update(params, data, &mut rng).map_err(|source| EngineError::Learner {
                    stage: stage_index,
                    checkpoint: Some(cp.index),
                    source,
                })?;
                trained = true;
            }

            let eval = evaluate(&state, target.test_set()).map_err(|source| match source {
                LearnerError::EmptyBatch(_) => EngineError::EmptyTestSet,
                source => EngineError::Learner {
                    stage: stage_index,
                    checkpoint: Some(cp.index),
                    source,
                },
            })?;
            Ok(ResultsRecord {
                schema_version: SCHEMA_VERSION,
                task: config.task.name.clone(),
                stage_index,
                stage_kind: stage.kind,
                checkpoint_index: cp.index,
                checkpoint_kind: cp.kind,
                cumulative_target: cp.cumulative_target,
                labeled_count: labeled.len(),
                source_dataset: source_name.clone(),
                per_sample: eval.per_sample,
                top1_accuracy: eval.top1_accuracy,
                elapsed_ms: ctx.clock.now_ms().saturating_sub(started),
                config_digest: digest.clone(),
            })
        })();
        match step {
            Ok(record) => records.push(record),
            Err(error) => return Err(StageFailure { records, error }),
        }
    }

    Ok(StageOutcome {
        metadata: StageMetadata {
            stage_index,
            kind: stage.kind,
            dataset: target.name().to_string(),
            source_dataset: source_name.clone(),
            class_count,
            pool_size: target.train_pool().len(),
            test_size: target.test_set().len(),
        },
        carry: Carry {
            state,
            source: source_name,
        },
        records,
        acquired,
        warnings,
    })
}

/// Full run summary returned alongside the written files.
#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub results_path: PathBuf,
    pub metadata: RunMetadata,
    pub warnings: Vec<String>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> EngineError + '_ {
    move |source| EngineError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_atomically(path: &Path, contents: &[u8]) -> Result<(), EngineError> {
    let tmp = partial_path(path);
    fs::write(&tmp, contents).map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

/// Run every stage in order, streaming records into `<results_path>.partial`
/// and renaming it into place on success. On failure the `.partial` file is
/// left behind with the completed records.
pub fn run_experiment(ctx: &RunContext, results_path: impl AsRef<Path>) -> Result<ExperimentOutcome, EngineError> {
    let results_path = results_path.as_ref();
    ctx.config.validate()?;
    let plan = validate_plan(&ctx.config, &ctx.registry).map_err(EngineError::Plan)?;
    let mut warnings: Vec<String> = plan.warnings.iter().map(ToString::to_string).collect();

    if let Some(dir) = results_path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let partial = partial_path(results_path);
    let file = File::create(&partial).map_err(io_err(&partial))?;
    let mut out = BufWriter::new(file);

    let mut stages = Vec::new();
    let mut carry: Option<Carry> = None;
    for index in 0..ctx.config.task.stages.len() {
        let outcome = run_stage(ctx, index, carry.as_ref());
        let (records, next) = match outcome {
            Ok(o) => {
                warnings.extend(o.warnings);
                stages.push(o.metadata);
                (o.records, Ok(o.carry))
            }
            Err(f) => (f.records, Err(f.error)),
        };
        for r in &records {
            out.write_all(r.to_line().as_bytes()).map_err(io_err(&partial))?;
        }
        out.flush().map_err(io_err(&partial))?;
        carry = Some(next?);
    }
    drop(out);

    let metadata = RunMetadata {
        schema_version: SCHEMA_VERSION,
        task: ctx.config.task.name.clone(),
        algorithm: ctx.config.algorithm,
        master_seed: ctx.config.master_seed,
        query_strategy: ctx.config.query_strategy,
        algorithm_params: ctx.config.algorithm_params.clone(),
        config_digest: config_digest(&ctx.config),
        stages,
    };
    let mut meta_text = serde_json::to_string_pretty(&metadata).expect("metadata serializes");
    meta_text.push('\n');
    write_atomically(&metadata_path(results_path), meta_text.as_bytes())?;
    fs::rename(&partial, results_path).map_err(io_err(results_path))?;
    let mut seen = std::collections::BTreeSet::new();
    warnings.retain(|w| seen.insert(w.clone()));
    Ok(ExperimentOutcome {
        results_path: results_path.to_path_buf(),
        metadata,
        warnings,
    })
}

/// `outputs/<date>/<start-time>/<results_file>` under `root`.
pub fn default_results_path(root: impl AsRef<Path>, task: &TaskSpec, started: chrono::DateTime<chrono::Local>) -> PathBuf {
    root.as_ref()
        .join("outputs")
        .join(started.format("%Y-%m-%d").to_string())
        .join(started.format("%H-%M-%S").to_string())
        .join(&task.results_file)
}
