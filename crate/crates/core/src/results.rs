//! Newline-delimited results records and the run metadata sidecar.
//!
//! Every line of a results file is one JSON object with `schema_version: 1`.
//! Next to it, `<results>.meta.json` holds what a report needs but a record
//! does not carry: the algorithm, its parameters, and per-stage pool sizes.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::config::{Algorithm, AlgorithmParams, StageKind};
use crate::query::QueryStrategy;
use crate::schedule::CheckpointKind;

pub const SCHEMA_VERSION: u32 = 1;
pub const TOP_K: usize = 5;

#[derive(Debug, Error)]
pub enum ResultsError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {detail}")]
    Malformed { path: PathBuf, line: usize, detail: String },
    #[error("{path}:{line}: schema_version {found} (expected {SCHEMA_VERSION})")]
    SchemaMismatch { path: PathBuf, line: usize, found: String },
    #[error("{0}: no records")]
    EmptyResults(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplePrediction {
    pub id: String,
    /// Class indices by descending score, ties by index.
    pub top5: Vec<usize>,
    pub scores: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResultsRecord {
    pub schema_version: u32,
    pub task: String,
    pub stage_index: usize,
    pub stage_kind: StageKind,
    pub checkpoint_index: usize,
    pub checkpoint_kind: CheckpointKind,
    pub cumulative_target: usize,
    pub labeled_count: usize,
    pub source_dataset: String,
    pub per_sample: Vec<SamplePrediction>,
    pub top1_accuracy: f64,
    pub elapsed_ms: u64,
    pub config_digest: String,
}

impl ResultsRecord {
    pub fn to_line(&self) -> String {
        let mut line = serde_json::to_string(self).expect("record serializes");
        line.push('\n');
        line
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageMetadata {
    pub stage_index: usize,
    pub kind: StageKind,
    pub dataset: String,
    pub source_dataset: String,
    pub class_count: usize,
    pub pool_size: usize,
    pub test_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunMetadata {
    pub schema_version: u32,
    pub task: String,
    pub algorithm: Algorithm,
    pub master_seed: u64,
    pub query_strategy: QueryStrategy,
    pub algorithm_params: AlgorithmParams,
    pub config_digest: String,
    pub stages: Vec<StageMetadata>,
}

pub fn metadata_path(results_path: &Path) -> PathBuf {
    let mut name = results_path.as_os_str().to_os_string();
    name.push(".meta.json");
    PathBuf::from(name)
}

pub fn partial_path(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_os_string();
    name.push(".partial");
    PathBuf::from(name)
}

fn read(path: &Path) -> Result<String, ResultsError> {
    fs::read_to_string(path).map_err(|source| ResultsError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Parse and schema-check a results file.
pub fn read_results(path: impl AsRef<Path>) -> Result<Vec<ResultsRecord>, ResultsError> {
    let path = path.as_ref();
    let text = read(path)?;
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let malformed = |detail: String| ResultsError::Malformed {
            path: path.to_path_buf(),
            line: i + 1,
            detail,
        };
        let value: Value = serde_json::from_str(line).map_err(|e| malformed(e.to_string()))?;
        match value.get("schema_version") {
            Some(v) if v.as_u64() == Some(u64::from(SCHEMA_VERSION)) => {}
            other => {
                return Err(ResultsError::SchemaMismatch {
                    path: path.to_path_buf(),
                    line: i + 1,
                    found: other.map_or_else(|| "missing".to_string(), Value::to_string),
                })
            }
        }
        records.push(serde_json::from_value(value).map_err(|e| malformed(e.to_string()))?);
    }
    if records.is_empty() {
        return Err(ResultsError::EmptyResults(path.to_path_buf()));
    }
    Ok(records)
}

pub fn read_metadata(results_path: impl AsRef<Path>) -> Result<RunMetadata, ResultsError> {
    let path = metadata_path(results_path.as_ref());
    let text = read(&path)?;
    let meta: RunMetadata = serde_json::from_str(&text).map_err(|e| ResultsError::Malformed {
        path: path.clone(),
        line: e.line(),
        detail: e.to_string(),
    })?;
    if meta.schema_version != SCHEMA_VERSION {
        return Err(ResultsError::SchemaMismatch {
            path,
            line: 1,
            found: meta.schema_version.to_string(),
        });
    }
    Ok(meta)
}
