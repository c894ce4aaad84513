use std::f64::consts::FRAC_PI_4;
use std::fs;

use nalgebra::DMatrix;
use shotbench::dataset::{load_feature_dataset, write_feature_dataset, DataError, DatasetRegistry};
use shotbench::selector::{dataset_moments, domain_distance, select_source};
use shotbench::synth::{generate_synthetic_domains, DomainTransform, SynthSpec, SyntheticGenerator};

fn spec(per_class_train: usize, domains: Vec<DomainTransform>) -> SynthSpec {
    SynthSpec {
        classes: 3,
        dim: 6,
        per_class_train,
        per_class_test: 5,
        domains,
        separation: 4.0,
        seed: 17,
    }
}

fn class_mean(ds: &shotbench::DatasetHandle, class: usize) -> Vec<f64> {
    let members: Vec<&[f64]> = ds
        .train_pool()
        .iter()
        .filter(|s| s.oracle_label() == class)
        .map(|s| s.features())
        .collect();
    (0..ds.dim())
        .map(|k| members.iter().map(|f| f[k]).sum::<f64>() / members.len() as f64)
        .collect()
}

#[test]
fn class_means_converge_to_transformed_base_means() {
    let noise = 0.5;
    let m = 2000;
    let s = spec(m, vec![DomainTransform::identity("a", noise), DomainTransform::with_severity("b", 1.5, 6, noise, 0)]);
    let generator = SyntheticGenerator::new(s).unwrap();
    let bound = 5.0 * noise / (m as f64).sqrt();
    for d in 0..2 {
        let ds = generator.domain(d).unwrap();
        for c in 0..3 {
            let expected = generator.transform_point(d, &generator.base_train_mean(c));
            let got = class_mean(&ds, c);
            let worst = got.iter().zip(&expected).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(worst < bound, "domain {d} class {c}: {worst} >= {bound}");
        }
    }
}

#[test]
fn rotated_domain_is_a_45_degree_plane_rotation() {
    let rotated = DomainTransform {
        name: "b".into(),
        rotation_angles: vec![FRAC_PI_4],
        translation: Vec::new(),
        noise: 0.0,
    };
    let generator = SyntheticGenerator::new(spec(50, vec![DomainTransform::identity("a", 0.0), rotated])).unwrap();
    let (a, b) = (generator.domain(0).unwrap(), generator.domain(1).unwrap());

    // Class means move with the rotation and keep their Gram matrix.
    let means_a: Vec<Vec<f64>> = (0..3).map(|c| class_mean(&a, c)).collect();
    let means_b: Vec<Vec<f64>> = (0..3).map(|c| class_mean(&b, c)).collect();
    let dot = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| p * q).sum::<f64>();
    for i in 0..3 {
        let moved = generator.transform_point(1, &means_a[i]);
        assert!(moved.iter().zip(&means_b[i]).all(|(p, q)| (p - q).abs() < 1e-9));
        for j in 0..3 {
            assert!((dot(&means_a[i], &means_a[j]) - dot(&means_b[i], &means_b[j])).abs() < 1e-9);
        }
    }

    // Displacements span one plane; each has length 2 sin(22.5°) |P x|.
    let n = a.train_pool().len();
    let disp = DMatrix::from_fn(n, 6, |r, k| b.train_pool()[r].features()[k] - a.train_pool()[r].features()[k]);
    let svd = disp.clone().svd(false, true);
    let mut sv: Vec<(f64, usize)> = svd.singular_values.iter().copied().zip(0..).collect();
    sv.sort_by(|x, y| y.0.total_cmp(&x.0));
    assert!(sv[2].0 < 1e-9 * sv[0].0);
    let vt = svd.v_t.unwrap();
    let basis: Vec<Vec<f64>> = sv[..2].iter().map(|&(_, i)| vt.row(i).iter().copied().collect()).collect();
    let chord = 2.0 * (FRAC_PI_4 / 2.0).sin();
    for r in 0..n {
        let x = a.train_pool()[r].features();
        let proj = basis.iter().map(|u| dot(x, u).powi(2)).sum::<f64>().sqrt();
        let len = disp.row(r).norm();
        assert!((len - chord * proj).abs() < 1e-9, "row {r}");
    }
}

#[test]
fn identity_transforms_match_up_to_tag() {
    let s = spec(20, vec![DomainTransform::identity("a", 0.3), DomainTransform::identity("b", 0.3)]);
    let ds = generate_synthetic_domains(&s).unwrap();
    assert_eq!(ds[0].domain_tag(), "a");
    assert_eq!(ds[1].domain_tag(), "b");
    for (x, y) in ds[0].train_pool().iter().zip(ds[1].train_pool()) {
        assert_eq!(x, y);
    }
}

/// Direct moment computation, no linear-algebra library.
fn naive_distance(a: &[&[f64]], b: &[&[f64]]) -> f64 {
    let d = a[0].len();
    let moments = |x: &[&[f64]]| {
        let n = x.len() as f64;
        let mu: Vec<f64> = (0..d).map(|k| x.iter().map(|v| v[k]).sum::<f64>() / n).collect();
        let mut cov = vec![0.0; d * d];
        for v in x {
            for i in 0..d {
                for j in 0..d {
                    cov[i * d + j] += (v[i] - mu[i]) * (v[j] - mu[j]) / (n - 1.0);
                }
            }
        }
        (mu, cov)
    };
    let (ma, ca) = moments(a);
    let (mb, cb) = moments(b);
    let mean_gap: f64 = ma.iter().zip(&mb).map(|(p, q)| (p - q).powi(2)).sum();
    let frob: f64 = ca.iter().zip(&cb).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
    mean_gap + frob
}

#[test]
fn low_severity_source_is_chosen() {
    let s = SynthSpec {
        dim: 8,
        ..spec(
            60,
            vec![
                DomainTransform::identity("target", 0.3),
                DomainTransform::with_severity("low", 0.3, 8, 0.3, 0),
                DomainTransform::with_severity("high", 2.0, 8, 0.3, 1),
            ],
        )
    };
    let mut reg = DatasetRegistry::new();
    for ds in generate_synthetic_domains(&s).unwrap() {
        reg.insert(ds).unwrap();
    }
    let target = reg.get("target").unwrap();
    let report = select_source(target, &reg, &["high", "low"]).unwrap();
    assert_eq!(report.chosen, "low");

    let feats = |name: &str| reg.get(name).unwrap().train_pool().iter().map(|s| s.features()).collect::<Vec<_>>();
    let (t, lo, hi) = (feats("target"), feats("low"), feats("high"));
    let (d_lo, d_hi) = (naive_distance(&t, &lo), naive_distance(&t, &hi));
    assert!(d_lo < d_hi);
    let scores: std::collections::BTreeMap<_, _> = report.ranked.iter().cloned().collect();
    assert!((scores["low"] - d_lo).abs() < 1e-9 * d_lo.max(1.0));
    assert!((scores["high"] - d_hi).abs() < 1e-9 * d_hi.max(1.0));

    let a = dataset_moments(&t).unwrap();
    let b = dataset_moments(&hi).unwrap();
    assert_eq!(domain_distance(&a, &b).unwrap(), domain_distance(&b, &a).unwrap());
}

#[test]
fn feature_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let ds = generate_synthetic_domains(&spec(10, vec![DomainTransform::identity("rt", 0.2)])).unwrap().remove(0);
    let manifest = write_feature_dataset(&ds, dir.path()).unwrap();
    let back = load_feature_dataset(&manifest).unwrap();
    assert_eq!(back.train_pool(), ds.train_pool());
    assert_eq!(back.test_set(), ds.test_set());
    assert_eq!(back.class_names(), ds.class_names());
    let reg = DatasetRegistry::load_dir(dir.path()).unwrap();
    assert_eq!(reg.names().collect::<Vec<_>>(), vec!["rt"]);
}

fn write_manifest(dir: &std::path::Path, train: &str) -> std::path::PathBuf {
    fs::write(
        dir.join("m.manifest.json"),
        r#"{"name": "m", "domain_tag": "m", "dim": 3, "classes": ["a", "b"], "train_csv": "m.train.csv", "test_csv": "m.test.csv"}"#,
    )
    .unwrap();
    fs::write(dir.join("m.train.csv"), train).unwrap();
    fs::write(dir.join("m.test.csv"), "id,label,f0,f1,f2\nt1,a,1,2,3\n").unwrap();
    dir.join("m.manifest.json")
}

#[test]
fn loader_errors() {
    let dir = tempfile::tempdir().unwrap();
    let ok = write_manifest(dir.path(), "id,label,f0,f1,f2\ns1,a,1,0,0\ns2,b,0,1,0\n");
    assert_eq!(load_feature_dataset(&ok).unwrap().train_pool().len(), 2);

    let short = write_manifest(dir.path(), "id,label,f0,f1,f2\ns1,a,1,0\n");
    assert!(matches!(load_feature_dataset(&short), Err(DataError::DimensionMismatch { .. })));

    let dup = write_manifest(dir.path(), "id,label,f0,f1,f2\ns1,a,1,0,0\ns1,b,0,1,0\n");
    assert!(matches!(load_feature_dataset(&dup), Err(DataError::DuplicateId(_))));

    let label = write_manifest(dir.path(), "id,label,f0,f1,f2\ns1,zebra,1,0,0\n");
    assert!(matches!(load_feature_dataset(&label), Err(DataError::UnknownLabel { .. })));

    let ok = write_manifest(dir.path(), "id,label,f0,f1,f2\ns1,a,1,0,0\n");
    fs::remove_file(dir.path().join("m.test.csv")).unwrap();
    assert!(matches!(load_feature_dataset(&ok), Err(DataError::MissingFile(p)) if p.ends_with("m.test.csv")));
}
