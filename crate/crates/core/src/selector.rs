//! Source-domain ranking by first/second-moment distance to the target.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::dataset::{DatasetHandle, DatasetRegistry};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SelectorError {
    #[error("need at least 2 samples for moments, got {0}")]
    TooFewSamples(usize),
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("no whitelisted source dataset is available")]
    EmptyWhitelist,
}

/// Mean and unbiased covariance of a feature set.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetMoments {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
    pub sample_count: usize,
}

pub fn dataset_moments<V: AsRef<[f64]>>(features: &[V]) -> Result<DatasetMoments, SelectorError> {
    let n = features.len();
    if n < 2 {
        return Err(SelectorError::TooFewSamples(n));
    }
    let d = features[0].as_ref().len();
    if let Some(bad) = features.iter().find(|f| f.as_ref().len() != d) {
        return Err(SelectorError::DimensionMismatch(d, bad.as_ref().len()));
    }
    let mut mean = DVector::zeros(d);
    for f in features {
        mean += DVector::from_column_slice(f.as_ref());
    }
    mean /= n as f64;
    let mut covariance = DMatrix::zeros(d, d);
    for f in features {
        let c = DVector::from_column_slice(f.as_ref()) - &mean;
        covariance.ger(1.0, &c, &c, 1.0);
    }
    covariance /= (n - 1) as f64;
    // Exact symmetry regardless of accumulation order.
    for i in 0..d {
        for j in 0..i {
            let v = 0.5 * (covariance[(i, j)] + covariance[(j, i)]);
            covariance[(i, j)] = v;
            covariance[(j, i)] = v;
        }
    }
    Ok(DatasetMoments {
        mean,
        covariance,
        sample_count: n,
    })
}

/// `‖μa − μb‖² + ‖Σa − Σb‖_F`.
pub fn domain_distance(a: &DatasetMoments, b: &DatasetMoments) -> Result<f64, SelectorError> {
    if a.mean.len() != b.mean.len() {
        return Err(SelectorError::DimensionMismatch(a.mean.len(), b.mean.len()));
    }
    let mean_gap = (&a.mean - &b.mean).norm_squared();
    let cov_gap = (&a.covariance - &b.covariance).norm();
    Ok(mean_gap + cov_gap)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityReport {
    /// Ascending by score, ties by name.
    pub ranked: Vec<(String, f64)>,
    pub chosen: String,
}

impl SimilarityReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("name,score\n");
        for (name, score) in &self.ranked {
            out.push_str(&format!("{name},{score}\n"));
        }
        out
    }
}

fn pool_moments(dataset: &DatasetHandle) -> Result<DatasetMoments, SelectorError> {
    let feats: Vec<&[f64]> = dataset.train_pool().iter().map(|s| s.features()).collect();
    dataset_moments(&feats)
}

/// Rank whitelisted candidates present in `registry` by distance to the
/// target's train pool. Test features are never used.
pub fn select_source<S: AsRef<str>>(
    target: &DatasetHandle,
    registry: &DatasetRegistry,
    whitelist: &[S],
) -> Result<SimilarityReport, SelectorError> {
    let target_moments = pool_moments(target)?;
    let mut names: Vec<&str> = whitelist
        .iter()
        .map(AsRef::as_ref)
        .filter(|n| registry.contains(n))
        .collect();
    names.sort_unstable();
    names.dedup();
    if names.is_empty() {
        return Err(SelectorError::EmptyWhitelist);
    }
    let mut ranked = names
        .into_iter()
        .map(|name| {
            let candidate = registry.get(name).expect("filtered above");
            let score = domain_distance(&target_moments, &pool_moments(candidate)?)?;
            Ok((name.to_string(), score))
        })
        .collect::<Result<Vec<_>, SelectorError>>()?;
    ranked.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
    let chosen = ranked[0].0.clone();
    Ok(SimilarityReport { ranked, chosen })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Sample;

    #[test]
    fn two_point_moments() {
        let m = dataset_moments(&[vec![0.0, 0.0], vec![2.0, 2.0]]).unwrap();
        assert_eq!(m.mean.as_slice(), &[1.0, 1.0]);
        assert_eq!(m.covariance, DMatrix::from_row_slice(2, 2, &[2.0, 2.0, 2.0, 2.0]));
    }

    #[test]
    fn identical_vectors_have_zero_covariance() {
        let v = vec![1.5, -2.0, 3.0];
        let m = dataset_moments(&vec![v.clone(); 7]).unwrap();
        assert_eq!(m.mean.as_slice(), v.as_slice());
        assert!(m.covariance.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn single_vector_rejected() {
        assert_eq!(dataset_moments(&[vec![1.0]]), Err(SelectorError::TooFewSamples(1)));
        assert_eq!(
            dataset_moments(&[vec![1.0], vec![1.0, 2.0]]),
            Err(SelectorError::DimensionMismatch(1, 2))
        );
    }

    #[test]
    fn mean_shift_distance() {
        let a = dataset_moments(&[vec![0.0, 0.0], vec![2.0, 2.0]]).unwrap();
        let b = dataset_moments(&[vec![3.0, 4.0], vec![5.0, 6.0]]).unwrap();
        assert_eq!(domain_distance(&a, &a).unwrap(), 0.0);
        assert_eq!(domain_distance(&a, &b).unwrap(), 25.0);
    }

    fn shifted(name: &str, shift: f64) -> DatasetHandle {
        let train = (0..6)
            .map(|i| Sample::new(format!("{name}{i}"), vec![i as f64 + shift, (i % 3) as f64], 0))
            .collect();
        DatasetHandle::new(name, name, 2, vec!["k".into()], train, vec![]).unwrap()
    }

    #[test]
    fn ties_break_by_name_and_self_wins() {
        let mut reg = DatasetRegistry::new();
        reg.insert(shifted("zeta", 1.0)).unwrap();
        reg.insert(shifted("alpha", 1.0)).unwrap();
        reg.insert(shifted("tgt", 0.0)).unwrap();
        let target = shifted("tgt", 0.0);
        let r = select_source(&target, &reg, &["zeta", "alpha", "missing"]).unwrap();
        assert_eq!(r.chosen, "alpha");
        assert_eq!(r.ranked[0].1, r.ranked[1].1);
        let r = select_source(&target, &reg, &["zeta", "tgt", "alpha"]).unwrap();
        assert_eq!(r.chosen, "tgt");
        assert_eq!(r.ranked[0].1, 0.0);
        assert_eq!(
            select_source(&target, &reg, &["missing"]),
            Err(SelectorError::EmptyWhitelist)
        );
    }
}
