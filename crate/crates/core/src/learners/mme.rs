//! Minimax-entropy adaptation on a linear feature map.
//!
//! Features are `f = A x` (A is `d' x d`), class prototypes are the rows of
//! `W` (`C x d'`), and logits are `z_k = (w_k/|w_k|) . (f/|f|) / T`.
//! Cross-entropy is averaged over the labeled batch and prediction entropy
//! over the unlabeled batch. One step moves `W` down `CE - lambda H` (the
//! prototypes maximize target entropy) and then `A` down `CE + lambda H`
//! (the feature map minimizes it). Gradients are analytic and full-batch.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::{argmax_lowest, log_sum_exp, softmax, Classifier, LabeledExample, LearnerError, Prediction, UnlabeledExample};

const ZERO_NORM: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MmeHyper {
    pub temperature: f64,
    pub lambda: f64,
    pub learning_rate: f64,
    pub iterations: usize,
}

impl Default for MmeHyper {
    fn default() -> Self {
        Self {
            temperature: 0.05,
            lambda: 0.1,
            learning_rate: 0.01,
            iterations: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MmeModel {
    pub feature_map: DMatrix<f64>,
    pub prototypes: DMatrix<f64>,
    pub hyper: MmeHyper,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MmeGradients {
    pub feature_map: DMatrix<f64>,
    pub prototypes: DMatrix<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MmeLosses {
    pub cross_entropy: f64,
    pub entropy: f64,
}

pub struct MmeInit {
    pub model: MmeModel,
    pub warnings: Vec<String>,
}

impl MmeModel {
    pub fn new(feature_map: DMatrix<f64>, prototypes: DMatrix<f64>, hyper: MmeHyper) -> Self {
        assert_eq!(feature_map.nrows(), prototypes.ncols(), "feature map rows must match prototype width");
        Self {
            feature_map,
            prototypes,
            hyper,
        }
    }

    pub fn with_hyper(mut self, hyper: MmeHyper) -> Self {
        self.hyper = hyper;
        self
    }

    pub fn input_dim(&self) -> usize {
        self.feature_map.ncols()
    }

    pub fn class_count(&self) -> usize {
        self.prototypes.nrows()
    }

    fn normalized_prototypes(&self) -> (DMatrix<f64>, Vec<f64>) {
        let mut w_hat = self.prototypes.clone();
        let mut norms = Vec::with_capacity(w_hat.nrows());
        for k in 0..w_hat.nrows() {
            let n = w_hat.row(k).norm();
            norms.push(n);
            if n < ZERO_NORM {
                w_hat.row_mut(k).fill(0.0);
            } else {
                w_hat.row_mut(k).unscale_mut(n);
            }
        }
        (w_hat, norms)
    }

    fn is_finite(&self) -> bool {
        self.feature_map.iter().chain(self.prototypes.iter()).all(|v| v.is_finite())
    }
}

struct Forward {
    x: DVector<f64>,
    f_norm: f64,
    f_hat: DVector<f64>,
    logits: Vec<f64>,
    probs: Vec<f64>,
}

fn forward(model: &MmeModel, w_hat: &DMatrix<f64>, x: &[f64]) -> Result<Forward, LearnerError> {
    if x.len() != model.input_dim() {
        return Err(LearnerError::DimensionMismatch {
            expected: model.input_dim(),
            found: x.len(),
        });
    }
    let x = DVector::from_column_slice(x);
    let f = &model.feature_map * &x;
    let f_norm = f.norm();
    if f_norm < ZERO_NORM {
        return Err(LearnerError::ZeroVector);
    }
    let f_hat = f / f_norm;
    let logits: Vec<f64> = (w_hat * &f_hat).iter().map(|s| s / model.hyper.temperature).collect();
    let probs = softmax(&logits);
    Ok(Forward {
        x,
        f_norm,
        f_hat,
        logits,
        probs,
    })
}

#[derive(Clone, Copy)]
enum Objective {
    CrossEntropy,
    Entropy,
}

/// Mean loss over `batch` and, if requested, its gradient w.r.t. A and W.
fn loss_and_grad<'a, I>(model: &MmeModel, batch: I, objective: Objective, with_grad: bool) -> Result<(f64, Option<MmeGradients>), LearnerError>
where
    I: ExactSizeIterator<Item = (&'a [f64], Option<usize>)>,
{
    let n = batch.len();
    let (w_hat, w_norms) = model.normalized_prototypes();
    let t = model.hyper.temperature;
    let (c, dp, d) = (model.class_count(), model.feature_map.nrows(), model.input_dim());
    let mut total = 0.0;
    let mut grad_what = DMatrix::<f64>::zeros(c, dp);
    let mut grad_a = DMatrix::<f64>::zeros(dp, d);
    for (x, label) in batch {
        let fw = forward(model, &w_hat, x)?;
        let dz: Vec<f64> = match objective {
            Objective::CrossEntropy => {
                let y = label.expect("labeled batch");
                total += log_sum_exp(&fw.logits) - fw.logits[y];
                fw.probs
                    .iter()
                    .enumerate()
                    .map(|(k, &p)| p - if k == y { 1.0 } else { 0.0 })
                    .collect()
            }
            Objective::Entropy => {
                let logp: Vec<f64> = {
                    let lse = log_sum_exp(&fw.logits);
                    fw.logits.iter().map(|z| z - lse).collect()
                };
                let h: f64 = -fw.probs.iter().zip(&logp).map(|(p, lp)| p * lp).sum::<f64>();
                total += h;
                fw.probs.iter().zip(&logp).map(|(p, lp)| -p * (lp + h)).collect()
            }
        };
        if !with_grad {
            continue;
        }
        // dL/ds_k = dz_k / T with s_k = w_hat_k . f_hat
        let ds = DVector::from_iterator(c, dz.iter().map(|g| g / t));
        grad_what.ger(1.0, &ds, &fw.f_hat, 1.0);
        let d_fhat = w_hat.tr_mul(&ds);
        let d_f = (&d_fhat - &fw.f_hat * fw.f_hat.dot(&d_fhat)) / fw.f_norm;
        grad_a.ger(1.0, &d_f, &fw.x, 1.0);
    }
    if n == 0 {
        return Ok((0.0, None));
    }
    let scale = 1.0 / n as f64;
    if !with_grad {
        return Ok((total * scale, None));
    }
    let mut grad_w = DMatrix::<f64>::zeros(c, dp);
    for k in 0..c {
        if w_norms[k] < ZERO_NORM {
            continue;
        }
        let u = w_hat.row(k);
        let g = grad_what.row(k);
        let proj = g.dot(&u);
        let row = (g - u * proj) / w_norms[k];
        grad_w.row_mut(k).copy_from(&row);
    }
    Ok((
        total * scale,
        Some(MmeGradients {
            feature_map: grad_a * scale,
            prototypes: grad_w * scale,
        }),
    ))
}

fn labeled_iter<'a>(labeled: &'a [LabeledExample<'a>]) -> impl ExactSizeIterator<Item = (&'a [f64], Option<usize>)> + 'a {
    labeled.iter().map(|e| (e.features, Some(e.label)))
}

fn unlabeled_iter<'a>(unlabeled: &'a [UnlabeledExample<'a>]) -> impl ExactSizeIterator<Item = (&'a [f64], Option<usize>)> + 'a {
    unlabeled.iter().map(|e| (e.features, None))
}

pub fn cross_entropy(model: &MmeModel, labeled: &[LabeledExample<'_>]) -> Result<f64, LearnerError> {
    if labeled.is_empty() {
        return Err(LearnerError::EmptyBatch("labeled"));
    }
    Ok(loss_and_grad(model, labeled_iter(labeled), Objective::CrossEntropy, false)?.0)
}

pub fn entropy(model: &MmeModel, unlabeled: &[UnlabeledExample<'_>]) -> Result<f64, LearnerError> {
    if unlabeled.is_empty() {
        return Err(LearnerError::EmptyBatch("unlabeled"));
    }
    Ok(loss_and_grad(model, unlabeled_iter(unlabeled), Objective::Entropy, false)?.0)
}

pub fn mme_losses(
    model: &MmeModel,
    labeled: &[LabeledExample<'_>],
    unlabeled: &[UnlabeledExample<'_>],
) -> Result<MmeLosses, LearnerError> {
    Ok(MmeLosses {
        cross_entropy: cross_entropy(model, labeled)?,
        entropy: entropy(model, unlabeled)?,
    })
}

pub fn cross_entropy_gradients(model: &MmeModel, labeled: &[LabeledExample<'_>]) -> Result<(f64, MmeGradients), LearnerError> {
    if labeled.is_empty() {
        return Err(LearnerError::EmptyBatch("labeled"));
    }
    let (loss, grad) = loss_and_grad(model, labeled_iter(labeled), Objective::CrossEntropy, true)?;
    Ok((loss, grad.expect("gradient requested")))
}

pub fn entropy_gradients(model: &MmeModel, unlabeled: &[UnlabeledExample<'_>]) -> Result<(f64, MmeGradients), LearnerError> {
    if unlabeled.is_empty() {
        return Err(LearnerError::EmptyBatch("unlabeled"));
    }
    let (loss, grad) = loss_and_grad(model, unlabeled_iter(unlabeled), Objective::Entropy, true)?;
    Ok((loss, grad.expect("gradient requested")))
}

fn check_finite(m: &DMatrix<f64>, what: &str) -> Result<(), LearnerError> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(LearnerError::NonFiniteGradient(what.to_string()))
    }
}

/// Combined `CE + sign * lambda * H` gradient. CE is the mean of the
/// per-group mean losses over the non-empty labeled groups; absent batches
/// drop their term.
fn combined_gradient(
    model: &MmeModel,
    groups: &[&[LabeledExample<'_>]],
    unlabeled: &[UnlabeledExample<'_>],
    entropy_sign: f64,
) -> Result<MmeGradients, LearnerError> {
    let mut total = MmeGradients {
        feature_map: DMatrix::zeros(model.feature_map.nrows(), model.feature_map.ncols()),
        prototypes: DMatrix::zeros(model.prototypes.nrows(), model.prototypes.ncols()),
    };
    let present: Vec<_> = groups.iter().filter(|g| !g.is_empty()).collect();
    for labeled in &present {
        let (_, g) = cross_entropy_gradients(model, labeled)?;
        let w = 1.0 / present.len() as f64;
        total.feature_map += g.feature_map * w;
        total.prototypes += g.prototypes * w;
    }
    if !unlabeled.is_empty() && model.hyper.lambda != 0.0 {
        let (_, g) = entropy_gradients(model, unlabeled)?;
        let w = entropy_sign * model.hyper.lambda;
        total.feature_map += g.feature_map * w;
        total.prototypes += g.prototypes * w;
    }
    Ok(total)
}

fn prototype_update(
    model: &MmeModel,
    groups: &[&[LabeledExample<'_>]],
    unlabeled: &[UnlabeledExample<'_>],
) -> Result<MmeModel, LearnerError> {
    if model.hyper.learning_rate == 0.0 {
        return Ok(model.clone());
    }
    let g = combined_gradient(model, groups, unlabeled, -1.0)?;
    check_finite(&g.prototypes, "prototypes")?;
    let mut next = model.clone();
    next.prototypes -= g.prototypes * model.hyper.learning_rate;
    Ok(next)
}

fn feature_update(
    model: &MmeModel,
    groups: &[&[LabeledExample<'_>]],
    unlabeled: &[UnlabeledExample<'_>],
) -> Result<MmeModel, LearnerError> {
    if model.hyper.learning_rate == 0.0 {
        return Ok(model.clone());
    }
    let g = combined_gradient(model, groups, unlabeled, 1.0)?;
    check_finite(&g.feature_map, "feature map")?;
    let mut next = model.clone();
    next.feature_map -= g.feature_map * model.hyper.learning_rate;
    Ok(next)
}

/// Prototype update: `W <- W - eta * grad_W(CE - lambda H)`.
pub fn classifier_step(
    model: &MmeModel,
    labeled: &[LabeledExample<'_>],
    unlabeled: &[UnlabeledExample<'_>],
) -> Result<MmeModel, LearnerError> {
    prototype_update(model, &[labeled], unlabeled)
}

/// Feature-map update: `A <- A - eta * grad_A(CE + lambda H)`.
pub fn feature_step(
    model: &MmeModel,
    labeled: &[LabeledExample<'_>],
    unlabeled: &[UnlabeledExample<'_>],
) -> Result<MmeModel, LearnerError> {
    feature_update(model, &[labeled], unlabeled)
}

/// One alternating update over labeled groups of equal weight: prototypes
/// first, then the feature map against the updated prototypes.
pub fn mme_step_grouped(
    model: &MmeModel,
    groups: &[&[LabeledExample<'_>]],
    unlabeled: &[UnlabeledExample<'_>],
) -> Result<MmeModel, LearnerError> {
    let next = feature_update(&prototype_update(model, groups, unlabeled)?, groups, unlabeled)?;
    if !next.is_finite() {
        return Err(LearnerError::NonFiniteGradient("parameters diverged".into()));
    }
    Ok(next)
}

pub fn mme_step(
    model: &MmeModel,
    labeled: &[LabeledExample<'_>],
    unlabeled: &[UnlabeledExample<'_>],
) -> Result<MmeModel, LearnerError> {
    mme_step_grouped(model, &[labeled], unlabeled)
}

/// `hyper.iterations` full-batch steps.
pub fn mme_train(
    model: &MmeModel,
    labeled: &[LabeledExample<'_>],
    unlabeled: &[UnlabeledExample<'_>],
) -> Result<MmeModel, LearnerError> {
    mme_train_grouped(model, &[labeled], unlabeled)
}

/// Like [`mme_train`], but each non-empty labeled group's mean CE gets equal
/// weight regardless of group size.
pub fn mme_train_grouped(
    model: &MmeModel,
    groups: &[&[LabeledExample<'_>]],
    unlabeled: &[UnlabeledExample<'_>],
) -> Result<MmeModel, LearnerError> {
    let mut current = model.clone();
    for _ in 0..model.hyper.iterations {
        current = mme_step_grouped(&current, groups, unlabeled)?;
    }
    Ok(current)
}

pub fn mme_predict(model: &MmeModel, features: &[f64]) -> Result<Prediction, LearnerError> {
    let (w_hat, _) = model.normalized_prototypes();
    let fw = forward(model, &w_hat, features)?;
    let argmax = argmax_lowest(&fw.logits);
    Ok(Prediction {
        probabilities: fw.probs,
        argmax,
    })
}

impl Classifier for MmeModel {
    fn predict(&self, features: &[f64]) -> Result<Prediction, LearnerError> {
        mme_predict(self, features)
    }
}

/// Feature map from the top principal directions of the source features and
/// prototypes from normalized class means in mapped space. `feature_dim == 0`
/// keeps the input dimension. Directions with (near) zero variance are dropped
/// with a warning.
pub fn mme_init(
    source: &[LabeledExample<'_>],
    class_count: usize,
    feature_dim: usize,
    hyper: MmeHyper,
) -> Result<MmeInit, LearnerError> {
    let first = source.first().ok_or(LearnerError::NoLabels)?;
    let d = first.features.len();
    if let Some(bad) = source.iter().find(|e| e.features.len() != d) {
        return Err(LearnerError::DimensionMismatch {
            expected: d,
            found: bad.features.len(),
        });
    }
    let wanted = if feature_dim == 0 { d } else { feature_dim.min(d) };
    let mut warnings = Vec::new();
    if feature_dim > d {
        warnings.push(format!("feature_dim {feature_dim} exceeds input dim {d}; using {d}"));
    }

    let n = source.len();
    let mut mean = DVector::<f64>::zeros(d);
    for e in source {
        mean += DVector::from_column_slice(e.features);
    }
    mean /= n as f64;
    let mut cov = DMatrix::<f64>::zeros(d, d);
    for e in source {
        let c = DVector::from_column_slice(e.features) - &mean;
        cov.ger(1.0, &c, &c, 1.0);
    }
    if n > 1 {
        cov /= (n - 1) as f64;
    }
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then_with(|| a.cmp(&b)));
    let top = eig.eigenvalues[order[0]].max(0.0);
    let threshold = 1e-12 * top.max(1.0);
    let rank = order.iter().filter(|&&i| eig.eigenvalues[i] > threshold).count();
    if rank == 0 {
        return Err(LearnerError::RankDeficient);
    }
    let dp = if rank < wanted {
        warnings.push(format!("source features have rank {rank}; feature_dim reduced from {wanted}"));
        rank
    } else {
        wanted
    };

    let mut feature_map = DMatrix::<f64>::zeros(dp, d);
    for (r, &i) in order.iter().take(dp).enumerate() {
        let mut v = eig.eigenvectors.column(i).clone_owned();
        // Canonical sign: largest-magnitude entry positive.
        let pivot = v.iter().copied().fold(0.0f64, |acc, x| if x.abs() > acc.abs() { x } else { acc });
        if pivot < 0.0 {
            v.neg_mut();
        }
        feature_map.row_mut(r).copy_from(&v.transpose());
    }

    let mut prototypes = DMatrix::<f64>::zeros(class_count, dp);
    let mut counts = vec![0usize; class_count];
    for e in source {
        let f = &feature_map * DVector::from_column_slice(e.features);
        let mut row = prototypes.row_mut(e.label);
        row += f.transpose();
        counts[e.label] += 1;
    }
    for k in 0..class_count {
        let nrm = prototypes.row(k).norm();
        if counts[k] > 0 && nrm >= ZERO_NORM {
            prototypes.row_mut(k).unscale_mut(nrm);
        } else {
            prototypes.row_mut(k).fill(0.0);
        }
    }
    Ok(MmeInit {
        model: MmeModel::new(feature_map, prototypes, hyper),
        warnings,
    })
}
