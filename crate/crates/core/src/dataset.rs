//! Feature-vector datasets, the registry, and labeled-pool bookkeeping.
//!
//! A dataset is described by a JSON manifest naming two CSV files whose
//! header is `id,label,f0,...,f{d-1}`. Labels are class names from the
//! manifest's `classes` list.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::learners::{LabeledExample, UnlabeledExample};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("missing file {0}")]
    MissingFile(PathBuf),
    #[error("{file}: row {row}: expected {expected} features, found {found}")]
    DimensionMismatch {
        file: String,
        row: String,
        expected: usize,
        found: usize,
    },
    #[error("{file}: row {row}: unknown label '{label}'")]
    UnknownLabel {
        file: String,
        row: String,
        label: String,
    },
    #[error("duplicate sample id '{0}'")]
    DuplicateId(String),
    #[error("sample '{0}' has non-finite features")]
    NonFinite(String),
    #[error("malformed input in {file}: {detail}")]
    Malformed { file: String, detail: String },
    #[error("invalid dataset: {0}")]
    Invalid(String),
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
    #[error("sample '{0}' is already labeled")]
    AlreadyLabeled(String),
    #[error("unknown train-pool sample id '{0}'")]
    UnknownId(String),
    #[error("dataset '{0}' registered twice")]
    DuplicateDataset(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// One feature vector with its ground-truth class.
///
/// The oracle label is meant for the labeling oracle, evaluation, and the
/// synthetic generator. Learners only ever see [`LabeledExample`]s built from
/// a [`LabeledState`].
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    id: String,
    features: Vec<f64>,
    oracle_label: usize,
}

impl Sample {
    pub fn new(id: impl Into<String>, features: Vec<f64>, oracle_label: usize) -> Self {
        Self {
            id: id.into(),
            features,
            oracle_label,
        }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn oracle_label(&self) -> usize {
        self.oracle_label
    }

    pub fn unlabeled(&self) -> UnlabeledExample<'_> {
        UnlabeledExample {
            id: &self.id,
            features: &self.features,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Split {
    Train,
    Test,
}

/// A named, domain-tagged dataset with disjoint train pool and test split.
#[derive(Debug, Clone)]
pub struct DatasetHandle {
    name: String,
    domain_tag: String,
    dim: usize,
    class_names: Vec<String>,
    train_pool: Vec<Sample>,
    test_set: Vec<Sample>,
    index: HashMap<String, (Split, usize)>,
}

impl DatasetHandle {
    pub fn new(
        name: impl Into<String>,
        domain_tag: impl Into<String>,
        dim: usize,
        class_names: Vec<String>,
        train_pool: Vec<Sample>,
        test_set: Vec<Sample>,
    ) -> Result<Self, DataError> {
        let name = name.into();
        if name.is_empty() {
            return Err(DataError::Invalid("dataset name is empty".into()));
        }
        if dim == 0 {
            return Err(DataError::Invalid(format!("{name}: dim must be positive")));
        }
        if class_names.is_empty() {
            return Err(DataError::Invalid(format!("{name}: no classes")));
        }
        let distinct: BTreeSet<&String> = class_names.iter().collect();
        if distinct.len() != class_names.len() {
            return Err(DataError::Invalid(format!("{name}: duplicate class names")));
        }
        let mut index = HashMap::with_capacity(train_pool.len() + test_set.len());
        for (split, samples) in [(Split::Train, &train_pool), (Split::Test, &test_set)] {
            for (i, s) in samples.iter().enumerate() {
                if s.features.len() != dim {
                    return Err(DataError::DimensionMismatch {
                        file: name.clone(),
                        row: s.id.clone(),
                        expected: dim,
                        found: s.features.len(),
                    });
                }
                if s.oracle_label >= class_names.len() {
                    return Err(DataError::UnknownLabel {
                        file: name.clone(),
                        row: s.id.clone(),
                        label: s.oracle_label.to_string(),
                    });
                }
                if s.features.iter().any(|v| !v.is_finite()) {
                    return Err(DataError::NonFinite(s.id.clone()));
                }
                if index.insert(s.id.clone(), (split, i)).is_some() {
                    return Err(DataError::DuplicateId(s.id.clone()));
                }
            }
        }
        Ok(Self {
            name,
            domain_tag: domain_tag.into(),
            dim,
            class_names,
            train_pool,
            test_set,
            index,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn domain_tag(&self) -> &str {
        &self.domain_tag
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn class_count(&self) -> usize {
        self.class_names.len()
    }

    pub fn train_pool(&self) -> &[Sample] {
        &self.train_pool
    }

    pub fn test_set(&self) -> &[Sample] {
        &self.test_set
    }

    /// Train-pool sample by id; test ids are not reachable through this.
    pub fn train_sample(&self, id: &str) -> Option<&Sample> {
        match self.index.get(id) {
            Some((Split::Train, i)) => Some(&self.train_pool[*i]),
            _ => None,
        }
    }

    pub fn is_test_id(&self, id: &str) -> bool {
        matches!(self.index.get(id), Some((Split::Test, _)))
    }

    /// The whole train pool as labeled examples (source-domain fitting).
    pub fn fully_labeled_pool(&self) -> Vec<LabeledExample<'_>> {
        self.train_pool
            .iter()
            .map(|s| LabeledExample {
                id: &s.id,
                features: &s.features,
                label: s.oracle_label,
            })
            .collect()
    }

    /// Same dataset under another name and domain tag.
    pub fn renamed(&self, name: impl Into<String>, domain_tag: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            domain_tag: domain_tag.into(),
            ..self.clone()
        }
    }
}

/// Named datasets available to a run, in name order.
#[derive(Debug, Clone, Default)]
pub struct DatasetRegistry {
    datasets: BTreeMap<String, Arc<DatasetHandle>>,
}

impl DatasetRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, dataset: DatasetHandle) -> Result<(), DataError> {
        let name = dataset.name().to_string();
        if self.datasets.contains_key(&name) {
            return Err(DataError::DuplicateDataset(name));
        }
        self.datasets.insert(name, Arc::new(dataset));
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Arc<DatasetHandle>> {
        self.datasets.get(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.datasets.contains_key(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.datasets.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.datasets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.datasets.is_empty()
    }

    /// Load every `*.manifest.json` in `dir` (sorted by file name).
    pub fn load_dir(dir: impl AsRef<Path>) -> Result<Self, DataError> {
        let dir = dir.as_ref();
        let entries = fs::read_dir(dir).map_err(|source| match source.kind() {
            std::io::ErrorKind::NotFound => DataError::MissingFile(dir.to_path_buf()),
            _ => DataError::Io {
                path: dir.to_path_buf(),
                source,
            },
        })?;
        let mut manifests: Vec<PathBuf> = entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                p.file_name()
                    .and_then(|n| n.to_str())
                    .is_some_and(|n| n.ends_with(MANIFEST_SUFFIX))
            })
            .collect();
        manifests.sort();
        let mut registry = Self::new();
        for path in manifests {
            registry.insert(load_feature_dataset(&path)?)?;
        }
        Ok(registry)
    }
}

pub const MANIFEST_SUFFIX: &str = ".manifest.json";

/// On-disk manifest. CSV paths are relative to the manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub name: String,
    pub domain_tag: String,
    pub dim: usize,
    pub classes: Vec<String>,
    pub train_csv: String,
    pub test_csv: String,
}

fn read_to_string(path: &Path) -> Result<String, DataError> {
    fs::read_to_string(path).map_err(|source| match source.kind() {
        std::io::ErrorKind::NotFound => DataError::MissingFile(path.to_path_buf()),
        _ => DataError::Io {
            path: path.to_path_buf(),
            source,
        },
    })
}

pub fn load_feature_dataset(manifest_path: impl AsRef<Path>) -> Result<DatasetHandle, DataError> {
    let manifest_path = manifest_path.as_ref();
    let text = read_to_string(manifest_path)?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| DataError::Malformed {
        file: manifest_path.display().to_string(),
        detail: e.to_string(),
    })?;
    let base = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    let train = read_feature_csv(&base.join(&manifest.train_csv), &manifest)?;
    let test = read_feature_csv(&base.join(&manifest.test_csv), &manifest)?;
    DatasetHandle::new(
        manifest.name,
        manifest.domain_tag,
        manifest.dim,
        manifest.classes,
        train,
        test,
    )
}

fn read_feature_csv(path: &Path, manifest: &Manifest) -> Result<Vec<Sample>, DataError> {
    let file = path.display().to_string();
    let text = read_to_string(path)?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(text.as_bytes());
    let malformed = |detail: String| DataError::Malformed {
        file: file.clone(),
        detail,
    };

    let header = reader.headers().map_err(|e| malformed(e.to_string()))?.clone();
    if header.len() < 2 || &header[0] != "id" || &header[1] != "label" {
        return Err(malformed("header must start with id,label".into()));
    }
    if header.len() - 2 != manifest.dim {
        return Err(DataError::DimensionMismatch {
            file,
            row: "header".into(),
            expected: manifest.dim,
            found: header.len() - 2,
        });
    }

    let class_index: HashMap<&str, usize> = manifest
        .classes
        .iter()
        .enumerate()
        .map(|(i, c)| (c.as_str(), i))
        .collect();
    let mut samples = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| malformed(e.to_string()))?;
        let id = record.get(0).unwrap_or_default().to_string();
        if record.len() < 2 || record.len() - 2 != manifest.dim {
            return Err(DataError::DimensionMismatch {
                file,
                row: id,
                expected: manifest.dim,
                found: record.len().saturating_sub(2),
            });
        }
        let label = &record[1];
        let Some(&class) = class_index.get(label) else {
            return Err(DataError::UnknownLabel {
                file,
                row: id,
                label: label.to_string(),
            });
        };
        let features = record
            .iter()
            .skip(2)
            .map(|v| v.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| malformed(format!("row {id}: {e}")))?;
        samples.push(Sample::new(id, features, class));
    }
    Ok(samples)
}

fn write_feature_csv(path: &Path, dataset: &DatasetHandle, samples: &[Sample]) -> Result<(), DataError> {
    let io = |source: std::io::Error| DataError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut writer = csv::Writer::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(source) => io(source),
        other => DataError::Malformed {
            file: path.display().to_string(),
            detail: format!("{other:?}"),
        },
    })?;
    let csv_err = |e: csv::Error| DataError::Malformed {
        file: path.display().to_string(),
        detail: e.to_string(),
    };
    let mut header = vec!["id".to_string(), "label".to_string()];
    header.extend((0..dataset.dim()).map(|i| format!("f{i}")));
    writer.write_record(&header).map_err(csv_err)?;
    for s in samples {
        let mut row = Vec::with_capacity(dataset.dim() + 2);
        row.push(s.id.clone());
        row.push(dataset.class_names()[s.oracle_label].clone());
        row.extend(s.features.iter().map(|v| v.to_string()));
        writer.write_record(&row).map_err(csv_err)?;
    }
    writer.flush().map_err(io)
}

/// Write `<name>.manifest.json`, `<name>.train.csv` and `<name>.test.csv`
/// into `dir`; returns the manifest path.
pub fn write_feature_dataset(dataset: &DatasetHandle, dir: impl AsRef<Path>) -> Result<PathBuf, DataError> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|source| DataError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let manifest = Manifest {
        name: dataset.name().to_string(),
        domain_tag: dataset.domain_tag().to_string(),
        dim: dataset.dim(),
        classes: dataset.class_names().to_vec(),
        train_csv: format!("{}.train.csv", dataset.name()),
        test_csv: format!("{}.test.csv", dataset.name()),
    };
    write_feature_csv(&dir.join(&manifest.train_csv), dataset, dataset.train_pool())?;
    write_feature_csv(&dir.join(&manifest.test_csv), dataset, dataset.test_set())?;
    let manifest_path = dir.join(format!("{}{MANIFEST_SUFFIX}", dataset.name()));
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    text.push('\n');
    fs::write(&manifest_path, text).map_err(|source| DataError::Io {
        path: manifest_path.clone(),
        source,
    })?;
    Ok(manifest_path)
}

/// Which train-pool samples have been purchased from the oracle.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LabeledState {
    labeled_ids: BTreeSet<String>,
    per_class_counts: BTreeMap<usize, usize>,
}

impl LabeledState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn labeled_ids(&self) -> &BTreeSet<String> {
        &self.labeled_ids
    }

    pub fn per_class_counts(&self) -> &BTreeMap<usize, usize> {
        &self.per_class_counts
    }

    pub fn count_for(&self, class: usize) -> usize {
        self.per_class_counts.get(&class).copied().unwrap_or(0)
    }

    pub fn len(&self) -> usize {
        self.labeled_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labeled_ids.is_empty()
    }

    pub fn contains(&self, id: &str) -> bool {
        self.labeled_ids.contains(id)
    }

    /// Functional update: returns the state with `ids` labeled by the oracle.
    pub fn acquire_labels<S: AsRef<str>>(&self, ids: &[S], pool: &DatasetHandle) -> Result<Self, DataError> {
        let mut next = self.clone();
        for id in ids {
            let id = id.as_ref();
            let sample = pool
                .train_sample(id)
                .ok_or_else(|| DataError::UnknownId(id.to_string()))?;
            if !next.labeled_ids.insert(id.to_string()) {
                return Err(DataError::AlreadyLabeled(id.to_string()));
            }
            *next.per_class_counts.entry(sample.oracle_label).or_insert(0) += 1;
        }
        Ok(next)
    }

    /// Labeled examples in train-pool order.
    pub fn labeled_examples<'a>(&self, pool: &'a DatasetHandle) -> Vec<LabeledExample<'a>> {
        pool.train_pool()
            .iter()
            .filter(|s| self.labeled_ids.contains(&s.id))
            .map(|s| LabeledExample {
                id: &s.id,
                features: &s.features,
                label: s.oracle_label,
            })
            .collect()
    }

    /// Unlabeled train-pool samples in pool order.
    pub fn unlabeled_examples<'a>(&self, pool: &'a DatasetHandle) -> Vec<UnlabeledExample<'a>> {
        pool.train_pool()
            .iter()
            .filter(|s| !self.labeled_ids.contains(&s.id))
            .map(Sample::unlabeled)
            .collect()
    }
}

/// Free-function form of [`LabeledState::acquire_labels`].
pub fn acquire_labels<S: AsRef<str>>(
    state: &LabeledState,
    ids: &[S],
    pool: &DatasetHandle,
) -> Result<LabeledState, DataError> {
    state.acquire_labels(ids, pool)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> DatasetHandle {
        let train = vec![
            Sample::new("a", vec![1.0, 0.0], 0),
            Sample::new("b", vec![0.9, 0.1], 0),
            Sample::new("c", vec![0.0, 1.0], 1),
        ];
        let test = vec![Sample::new("t", vec![1.0, 1.0], 1)];
        DatasetHandle::new("tiny", "x", 2, vec!["p".into(), "q".into()], train, test).unwrap()
    }

    #[test]
    fn acquire_counts_by_oracle_label() {
        let ds = tiny();
        let s = LabeledState::new().acquire_labels(&["a", "b", "c"], &ds).unwrap();
        assert_eq!(s.per_class_counts(), &BTreeMap::from([(0, 2), (1, 1)]));
        assert_eq!(s.len(), 3);
    }

    #[test]
    fn acquire_twice_rejected() {
        let ds = tiny();
        let s = LabeledState::new().acquire_labels(&["a"], &ds).unwrap();
        assert!(matches!(s.acquire_labels(&["a"], &ds), Err(DataError::AlreadyLabeled(_))));
        assert!(matches!(
            LabeledState::new().acquire_labels(&["b", "b"], &ds),
            Err(DataError::AlreadyLabeled(_))
        ));
    }

    #[test]
    fn acquire_empty_is_identity() {
        let ds = tiny();
        let s = LabeledState::new().acquire_labels(&["c"], &ds).unwrap();
        let none: [&str; 0] = [];
        assert_eq!(s.acquire_labels(&none, &ds).unwrap(), s);
    }

    #[test]
    fn test_ids_are_not_acquirable() {
        let ds = tiny();
        assert!(matches!(
            LabeledState::new().acquire_labels(&["t"], &ds),
            Err(DataError::UnknownId(_))
        ));
    }

    #[test]
    fn duplicate_ids_across_splits_rejected() {
        let train = vec![Sample::new("s1", vec![0.0], 0)];
        let test = vec![Sample::new("s1", vec![1.0], 0)];
        let err = DatasetHandle::new("d", "x", 1, vec!["a".into()], train, test).unwrap_err();
        assert!(matches!(err, DataError::DuplicateId(id) if id == "s1"));
    }

    #[test]
    fn non_finite_features_rejected() {
        let train = vec![Sample::new("s1", vec![f64::NAN], 0)];
        let err = DatasetHandle::new("d", "x", 1, vec!["a".into()], train, vec![]).unwrap_err();
        assert!(matches!(err, DataError::NonFinite(_)));
    }
}
