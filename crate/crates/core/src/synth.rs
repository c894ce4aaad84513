//! Synthetic Gaussian-cluster datasets under controllable covariate shift.
//!
//! All domains share one set of base draws. A domain applies a rotation (one
//! random 2-plane per angle, shared across domains), a translation, and
//! isotropic Gaussian noise to those base points.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataset::{DataError, DatasetHandle, Sample};
use crate::stream::{derive_stream, fnv1a64, RngStream};

/// Affine shift plus noise applied to the shared base clusters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainTransform {
    pub name: String,
    /// Rotation angles in radians; angle `k` acts in the `k`-th random plane.
    pub rotation_angles: Vec<f64>,
    /// Empty means no translation, otherwise length `dim`.
    pub translation: Vec<f64>,
    pub noise: f64,
}

impl DomainTransform {
    pub fn identity(name: impl Into<String>, noise: f64) -> Self {
        Self {
            name: name.into(),
            rotation_angles: Vec::new(),
            translation: Vec::new(),
            noise,
        }
    }

    /// Shift family indexed by a scalar severity; severity 0 is the identity.
    ///
    /// Each of `dim / 2` random planes is rotated by `severity * 30°` and
    /// the translation is `severity * 0.8` per coordinate with alternating
    /// sign. `variant` uses a disjoint set of plane indices and flips the
    /// translation so two domains at equal severity are distinct.
    pub fn with_severity(name: impl Into<String>, severity: f64, dim: usize, noise: f64, variant: usize) -> Self {
        let angle = severity * std::f64::consts::FRAC_PI_6;
        let planes = (dim / 2).max(1);
        let mut rotation_angles = vec![0.0; planes * (variant + 1)];
        if severity != 0.0 {
            rotation_angles[planes * variant..].fill(angle);
        } else {
            rotation_angles.clear();
        }
        let sign = if variant % 2 == 0 { 1.0 } else { -1.0 };
        let translation = if severity == 0.0 {
            Vec::new()
        } else {
            (0..dim)
                .map(|k| sign * severity * 0.8 * if k % 2 == 0 { 1.0 } else { -1.0 })
                .collect()
        };
        Self {
            name: name.into(),
            rotation_angles,
            translation,
            noise,
        }
    }

    fn fingerprint(&self) -> u64 {
        let mut bytes = Vec::new();
        for a in &self.rotation_angles {
            bytes.extend_from_slice(&a.to_bits().to_le_bytes());
        }
        bytes.push(0xff);
        for t in &self.translation {
            bytes.extend_from_slice(&t.to_bits().to_le_bytes());
        }
        bytes.push(0xff);
        bytes.extend_from_slice(&self.noise.to_bits().to_le_bytes());
        fnv1a64(&bytes)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub classes: usize,
    pub dim: usize,
    pub per_class_train: usize,
    pub per_class_test: usize,
    pub domains: Vec<DomainTransform>,
    pub separation: f64,
    pub seed: u64,
}

impl SynthSpec {
    pub fn validate(&self) -> Result<(), DataError> {
        let bad = |m: String| Err(DataError::InvalidSpec(m));
        if self.classes < 2 {
            return bad(format!("classes must be >= 2, got {}", self.classes));
        }
        if self.dim < 2 {
            return bad(format!("dim must be >= 2, got {}", self.dim));
        }
        if self.per_class_train < 1 || self.per_class_test < 1 {
            return bad("per-class train and test counts must be >= 1".into());
        }
        if !(self.separation.is_finite() && self.separation > 0.0) {
            return bad(format!("separation must be positive, got {}", self.separation));
        }
        if self.domains.is_empty() {
            return bad("at least one domain transform is required".into());
        }
        let mut names = std::collections::BTreeSet::new();
        for d in &self.domains {
            if d.name.is_empty() || !names.insert(d.name.as_str()) {
                return bad(format!("domain names must be non-empty and distinct ('{}')", d.name));
            }
            if !d.translation.is_empty() && d.translation.len() != self.dim {
                return bad(format!("{}: translation length {} != dim {}", d.name, d.translation.len(), self.dim));
            }
            if !(d.noise.is_finite() && d.noise >= 0.0) {
                return bad(format!("{}: noise must be finite and >= 0", d.name));
            }
            if d.rotation_angles.iter().chain(&d.translation).any(|v| !v.is_finite()) {
                return bad(format!("{}: non-finite transform parameter", d.name));
            }
        }
        Ok(())
    }
}

fn gaussian_vec(rng: &mut RngStream, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normalize(mut v: Vec<f64>) -> Vec<f64> {
    let n = dot(&v, &v).sqrt();
    v.iter_mut().for_each(|x| *x /= n);
    v
}

/// Holds the shared base draws and produces each domain from them.
#[derive(Debug, Clone)]
pub struct SyntheticGenerator {
    spec: SynthSpec,
    class_means: Vec<Vec<f64>>,
    planes: Vec<(Vec<f64>, Vec<f64>)>,
    base_train: Vec<(Vec<f64>, usize)>,
    base_test: Vec<(Vec<f64>, usize)>,
}

impl SyntheticGenerator {
    pub fn new(spec: SynthSpec) -> Result<Self, DataError> {
        spec.validate()?;
        let d = spec.dim;
        let mut rng = derive_stream(spec.seed, &["synth", "base"]);
        let radius = spec.separation / std::f64::consts::SQRT_2;
        let class_means: Vec<Vec<f64>> = (0..spec.classes)
            .map(|_| normalize(gaussian_vec(&mut rng, d)).into_iter().map(|x| x * radius).collect())
            .collect();

        let draw = |count: usize, rng: &mut RngStream| {
            let mut out = Vec::with_capacity(count * spec.classes);
            for _ in 0..count {
                for (c, mean) in class_means.iter().enumerate() {
                    let z = gaussian_vec(rng, d);
                    out.push((mean.iter().zip(z).map(|(m, e)| m + e).collect(), c));
                }
            }
            out
        };
        let base_train = draw(spec.per_class_train, &mut rng);
        let base_test = draw(spec.per_class_test, &mut rng);

        let plane_count = spec.domains.iter().map(|t| t.rotation_angles.len()).max().unwrap_or(0);
        let planes = (0..plane_count)
            .map(|k| {
                let mut prng = derive_stream(spec.seed, &["synth".to_string(), "plane".to_string(), k.to_string()]);
                let u = normalize(gaussian_vec(&mut prng, d));
                let mut v = gaussian_vec(&mut prng, d);
                let proj = dot(&u, &v);
                v.iter_mut().zip(&u).for_each(|(x, ui)| *x -= proj * ui);
                (u, normalize(v))
            })
            .collect();

        Ok(Self {
            spec,
            class_means,
            planes,
            base_train,
            base_test,
        })
    }

    pub fn spec(&self) -> &SynthSpec {
        &self.spec
    }

    pub fn class_means(&self) -> &[Vec<f64>] {
        &self.class_means
    }

    /// Base train draws `(point, class)` before any domain transform.
    pub fn base_train(&self) -> &[(Vec<f64>, usize)] {
        &self.base_train
    }

    pub fn base_test(&self) -> &[(Vec<f64>, usize)] {
        &self.base_test
    }

    /// Empirical mean of the base train draws of `class`.
    pub fn base_train_mean(&self, class: usize) -> Vec<f64> {
        let mut sum = vec![0.0; self.spec.dim];
        let mut n = 0usize;
        for (x, c) in &self.base_train {
            if *c == class {
                sum.iter_mut().zip(x).for_each(|(s, v)| *s += v);
                n += 1;
            }
        }
        sum.into_iter().map(|s| s / n as f64).collect()
    }

    /// Rotation then translation of `point` under domain `domain`, no noise.
    pub fn transform_point(&self, domain: usize, point: &[f64]) -> Vec<f64> {
        let t = &self.spec.domains[domain];
        let mut x = point.to_vec();
        for (angle, (u, v)) in t.rotation_angles.iter().zip(&self.planes) {
            if *angle == 0.0 {
                continue;
            }
            let (a, b) = (dot(&x, u), dot(&x, v));
            let (s, c) = angle.sin_cos();
            for k in 0..x.len() {
                x[k] += (c - 1.0) * (a * u[k] + b * v[k]) + s * (a * v[k] - b * u[k]);
            }
        }
        if !t.translation.is_empty() {
            x.iter_mut().zip(&t.translation).for_each(|(xi, ti)| *xi += ti);
        }
        x
    }

    pub fn domain(&self, index: usize) -> Result<DatasetHandle, DataError> {
        let t = &self.spec.domains[index];
        let fp = format!("{:016x}", t.fingerprint());
        let mut noise_rng = derive_stream(self.spec.seed, &["synth", "noise", fp.as_str()]);
        let mut build = |base: &[(Vec<f64>, usize)], prefix: &str| -> Vec<Sample> {
            base.iter()
                .enumerate()
                .map(|(i, (x, c))| {
                    let mut f = self.transform_point(index, x);
                    let eps = gaussian_vec(&mut noise_rng, self.spec.dim);
                    if t.noise > 0.0 {
                        f.iter_mut().zip(eps).for_each(|(fi, e)| *fi += t.noise * e);
                    }
                    Sample::new(format!("{prefix}{i:05}"), f, *c)
                })
                .collect()
        };
        let train = build(&self.base_train, "tr");
        let test = build(&self.base_test, "te");
        let class_names = (0..self.spec.classes).map(|c| format!("c{c}")).collect();
        DatasetHandle::new(t.name.clone(), t.name.clone(), self.spec.dim, class_names, train, test)
    }

    pub fn domains(&self) -> Result<Vec<DatasetHandle>, DataError> {
        (0..self.spec.domains.len()).map(|i| self.domain(i)).collect()
    }
}

/// One dataset per domain transform, deterministic in `spec.seed`.
pub fn generate_synthetic_domains(spec: &SynthSpec) -> Result<Vec<DatasetHandle>, DataError> {
    SyntheticGenerator::new(spec.clone())?.domains()
}

pub const BENCH_SOURCE: &str = "bench-src";
pub const BENCH_TARGET: &str = "bench-tgt";
pub const BENCH_ADAPT: &str = "bench-adapt";
pub const MID_SEVERITY: f64 = 1.0;

/// The standard desk-scale benchmark: C=5, d=16, 100 train and 40 test
/// samples per class, an unshifted source domain and two shifted targets.
pub fn standard_benchmark(seed: u64, severity: f64) -> SynthSpec {
    let dim = 16;
    let noise = 0.3;
    SynthSpec {
        classes: 5,
        dim,
        per_class_train: 100,
        per_class_test: 40,
        domains: vec![
            DomainTransform::identity(BENCH_SOURCE, noise),
            DomainTransform::with_severity(BENCH_TARGET, severity, dim, noise, 0),
            DomainTransform::with_severity(BENCH_ADAPT, severity, dim, noise, 1),
        ],
        separation: 5.0,
        seed,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_domain_spec(second: DomainTransform) -> SynthSpec {
        SynthSpec {
            classes: 3,
            dim: 4,
            per_class_train: 10,
            per_class_test: 5,
            domains: vec![DomainTransform::identity("a", 0.5), second],
            separation: 3.0,
            seed: 11,
        }
    }

    #[test]
    fn identical_transforms_give_identical_data() {
        let spec = two_domain_spec(DomainTransform::identity("b", 0.5));
        let ds = generate_synthetic_domains(&spec).unwrap();
        assert_eq!(ds[0].train_pool(), ds[1].train_pool());
        assert_eq!(ds[0].test_set(), ds[1].test_set());
        assert_ne!(ds[0].domain_tag(), ds[1].domain_tag());
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = two_domain_spec(DomainTransform::with_severity("b", 1.0, 4, 0.5, 0));
        let x = generate_synthetic_domains(&spec).unwrap();
        let y = generate_synthetic_domains(&spec).unwrap();
        for (a, b) in x.iter().zip(&y) {
            assert_eq!(a.train_pool(), b.train_pool());
            assert_eq!(a.test_set(), b.test_set());
        }
    }

    #[test]
    fn rotation_preserves_norm() {
        let mut t = DomainTransform::identity("b", 0.0);
        t.rotation_angles = vec![0.7, -1.3];
        let g = SyntheticGenerator::new(two_domain_spec(t)).unwrap();
        for (x, _) in g.base_train() {
            let y = g.transform_point(1, x);
            assert!((dot(x, x).sqrt() - dot(&y, &y).sqrt()).abs() < 1e-9);
        }
    }

    #[test]
    fn invalid_specs_rejected() {
        let mut spec = two_domain_spec(DomainTransform::identity("b", 0.1));
        spec.classes = 1;
        assert!(matches!(generate_synthetic_domains(&spec), Err(DataError::InvalidSpec(_))));
        let mut spec = two_domain_spec(DomainTransform::identity("a", 0.1));
        spec.seed = 1;
        assert!(generate_synthetic_domains(&spec).is_err());
        let mut bad = DomainTransform::identity("b", 0.1);
        bad.translation = vec![1.0; 3];
        assert!(generate_synthetic_domains(&two_domain_spec(bad)).is_err());
    }
}
