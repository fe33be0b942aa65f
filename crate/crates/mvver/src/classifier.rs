//! Trainable classifiers: multinomial logistic regression and a
//! one-hidden-layer ReLU MLP, optimized with mini-batch Adam on the
//! cross-entropy loss.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{ClassLabel, LabeledDataset, Sample};
use crate::error::{Error, Result};
use crate::rng::{self, stage};

/// Floor applied to a probability before taking its log in the loss.
pub const PROB_FLOOR: f64 = 1e-12;

/// A class-probability distribution over C classes.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbVector {
    pub probs: Vec<f64>,
}

impl ProbVector {
    pub fn num_classes(&self) -> usize {
        self.probs.len()
    }

    /// Index of the maximal probability, lowest index on ties.
    pub fn argmax(&self) -> ClassLabel {
        let mut best = 0;
        for (i, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = i;
            }
        }
        best
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassifierKind {
    Softmax,
    Mlp,
}

/// Training hyperparameters. Defaults: 50 epochs of Adam at lr 0.001
/// on cross-entropy, batch size 32.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierConfig {
    pub kind: ClassifierKind,
    #[serde(default = "default_hidden")]
    pub hidden_units: usize,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default)]
    pub l2: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_hidden() -> usize {
    64
}
fn default_epochs() -> usize {
    50
}
fn default_lr() -> f64 {
    0.001
}
fn default_batch() -> usize {
    32
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            kind: ClassifierKind::Softmax,
            hidden_units: default_hidden(),
            epochs: default_epochs(),
            learning_rate: default_lr(),
            batch_size: default_batch(),
            l2: 0.0,
            seed: 0,
        }
    }
}

impl ClassifierConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs < 1 {
            return Err(Error::InvalidConfig("epochs must be >= 1".into()));
        }
        if !self.learning_rate.is_finite() || self.learning_rate <= 0.0 {
            return Err(Error::InvalidConfig("learning_rate must be > 0".into()));
        }
        if self.batch_size < 1 {
            return Err(Error::InvalidConfig("batch_size must be >= 1".into()));
        }
        if self.l2 < 0.0 {
            return Err(Error::InvalidConfig("l2 must be >= 0".into()));
        }
        if self.kind == ClassifierKind::Mlp && self.hidden_units < 1 {
            return Err(Error::InvalidConfig("hidden_units must be >= 1".into()));
        }
        Ok(())
    }

    /// Copy of this config with a different seed.
    pub fn with_seed(&self, seed: u64) -> Self {
        let mut c = self.clone();
        c.seed = seed;
        c
    }
}

/// A trained classifier. Parameters are stored flat:
/// softmax: `W (C*d) | b (C)`; mlp: `W1 (h*d) | b1 (h) | W2 (C*h) | b2 (C)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub kind: ClassifierKind,
    pub num_classes: usize,
    pub dim: usize,
    pub hidden: usize,
    pub params: Vec<f64>,
    /// Per-feature standardization fitted on the training set and applied
    /// before the linear layers.
    pub feat_mean: Vec<f64>,
    pub feat_std: Vec<f64>,
    pub epoch_loss: Vec<f64>,
}

const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ModelFile {
    version: u32,
    model: Model,
}

impl Model {
    fn param_len(kind: ClassifierKind, dim: usize, hidden: usize, c: usize) -> usize {
        match kind {
            ClassifierKind::Softmax => c * dim + c,
            ClassifierKind::Mlp => hidden * dim + hidden + c * hidden + c,
        }
    }

    /// Zero-initialized model (predicts the uniform distribution).
    pub fn zeros(kind: ClassifierKind, dim: usize, hidden: usize, num_classes: usize) -> Self {
        let hidden = match kind {
            ClassifierKind::Softmax => 0,
            ClassifierKind::Mlp => hidden,
        };
        Self {
            kind,
            num_classes,
            dim,
            hidden,
            params: vec![0.0; Self::param_len(kind, dim, hidden, num_classes)],
            feat_mean: vec![0.0; dim],
            feat_std: vec![1.0; dim],
            epoch_loss: Vec::new(),
        }
    }

    fn standardize(&self, features: &[f64]) -> Vec<f64> {
        features
            .iter()
            .zip(self.feat_mean.iter().zip(&self.feat_std))
            .map(|(&x, (&m, &s))| (x - m) / s)
            .collect()
    }

    fn logits(&self, raw_features: &[f64]) -> Vec<f64> {
        let features = &self.standardize(raw_features);
        let c = self.num_classes;
        let d = self.dim;
        match self.kind {
            ClassifierKind::Softmax => {
                let (w, b) = self.params.split_at(c * d);
                (0..c)
                    .map(|k| {
                        let row = &w[k * d..(k + 1) * d];
                        row.iter().zip(features).map(|(a, x)| a * x).sum::<f64>() + b[k]
                    })
                    .collect()
            }
            ClassifierKind::Mlp => {
                let h = self.hidden;
                let (w1, rest) = self.params.split_at(h * d);
                let (b1, rest) = rest.split_at(h);
                let (w2, b2) = rest.split_at(c * h);
                let hid: Vec<f64> = (0..h)
                    .map(|k| {
                        let row = &w1[k * d..(k + 1) * d];
                        let z =
                            row.iter().zip(features).map(|(a, x)| a * x).sum::<f64>() + b1[k];
                        z.max(0.0)
                    })
                    .collect();
                (0..c)
                    .map(|k| {
                        let row = &w2[k * h..(k + 1) * h];
                        row.iter().zip(&hid).map(|(a, x)| a * x).sum::<f64>() + b2[k]
                    })
                    .collect()
            }
        }
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        let file = ModelFile {
            version: MODEL_FORMAT_VERSION,
            model: self.clone(),
        };
        fs::write(path, serde_json::to_vec_pretty(&file)?)?;
        Ok(())
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let file: ModelFile = serde_json::from_slice(&fs::read(path)?)?;
        if file.version != MODEL_FORMAT_VERSION {
            return Err(Error::InvalidConfig(format!(
                "unsupported model format version {}",
                file.version
            )));
        }
        Ok(file.model)
    }
}

/// Numerically safe softmax: subtracts the max logit, clamps underflowed
/// entries away from zero so every probability stays in (0, 1].
pub fn softmax(logits: &[f64]) -> ProbVector {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    let probs = exps
        .iter()
        .map(|&e| (e / sum).max(f64::MIN_POSITIVE))
        .collect();
    ProbVector { probs }
}

/// Class-probability prediction for one feature vector.
pub fn predict_proba(model: &Model, features: &[f64]) -> Result<ProbVector> {
    if features.len() != model.dim {
        return Err(Error::DimMismatch {
            expected: model.dim,
            got: features.len(),
        });
    }
    Ok(softmax(&model.logits(features)))
}

/// Hard prediction: argmax of [`predict_proba`], lowest index on ties.
pub fn predict(model: &Model, features: &[f64]) -> Result<ClassLabel> {
    Ok(predict_proba(model, features)?.argmax())
}

/// Cross-entropy of a single prediction: `-ln(max(p[label], 1e-12))`.
pub fn cross_entropy(probs: &ProbVector, label: ClassLabel) -> f64 {
    -probs.probs[label].max(PROB_FLOOR).ln()
}

/// Mean cross-entropy plus L2 penalty on the weight matrices over a batch.
/// Shared by training and the finite-difference gradient check.
pub fn batch_loss(model: &Model, batch: &[&Sample], l2: f64) -> f64 {
    let mut loss = 0.0;
    for s in batch {
        let p = softmax(&model.logits(&s.features));
        loss += cross_entropy(&p, s.label);
    }
    loss /= batch.len() as f64;
    if l2 > 0.0 {
        loss += 0.5 * l2 * weight_sq_norm(model);
    }
    loss
}

fn weight_sq_norm(model: &Model) -> f64 {
    let mut acc = 0.0;
    for_weight_ranges(model, |range| {
        acc += model.params[range].iter().map(|w| w * w).sum::<f64>();
    });
    acc
}

/// Invoke `f` with the index range of each weight matrix (biases excluded).
fn for_weight_ranges(model: &Model, mut f: impl FnMut(std::ops::Range<usize>)) {
    let c = model.num_classes;
    let d = model.dim;
    match model.kind {
        ClassifierKind::Softmax => f(0..c * d),
        ClassifierKind::Mlp => {
            let h = model.hidden;
            f(0..h * d);
            f(h * d + h..h * d + h + c * h);
        }
    }
}

/// Analytic gradient of [`batch_loss`] with respect to all parameters.
pub fn batch_grad(model: &Model, batch: &[&Sample], l2: f64) -> Vec<f64> {
    let c = model.num_classes;
    let d = model.dim;
    let mut grad = vec![0.0; model.params.len()];
    let scale = 1.0 / batch.len() as f64;
    match model.kind {
        ClassifierKind::Softmax => {
            for s in batch {
                let x = model.standardize(&s.features);
                let p = softmax(&model.logits(&s.features));
                for k in 0..c {
                    let dz = (p.probs[k] - if k == s.label { 1.0 } else { 0.0 }) * scale;
                    for (j, &xj) in x.iter().enumerate() {
                        grad[k * d + j] += dz * xj;
                    }
                    grad[c * d + k] += dz;
                }
            }
        }
        ClassifierKind::Mlp => {
            let h = model.hidden;
            let (w1, rest) = model.params.split_at(h * d);
            let (b1, rest) = rest.split_at(h);
            let (w2, _b2) = rest.split_at(c * h);
            let off_b1 = h * d;
            let off_w2 = off_b1 + h;
            let off_b2 = off_w2 + c * h;
            for s in batch {
                let x = model.standardize(&s.features);
                let pre: Vec<f64> = (0..h)
                    .map(|k| {
                        let row = &w1[k * d..(k + 1) * d];
                        row.iter().zip(&x).map(|(a, x)| a * x).sum::<f64>() + b1[k]
                    })
                    .collect();
                let hid: Vec<f64> = pre.iter().map(|&z| z.max(0.0)).collect();
                let logits: Vec<f64> = (0..c)
                    .map(|k| {
                        let row = &w2[k * h..(k + 1) * h];
                        row.iter().zip(&hid).map(|(a, x)| a * x).sum::<f64>()
                            + model.params[off_b2 + k]
                    })
                    .collect();
                let p = softmax(&logits);
                let dz: Vec<f64> = (0..c)
                    .map(|k| (p.probs[k] - if k == s.label { 1.0 } else { 0.0 }) * scale)
                    .collect();
                for k in 0..c {
                    for (j, &hj) in hid.iter().enumerate() {
                        grad[off_w2 + k * h + j] += dz[k] * hj;
                    }
                    grad[off_b2 + k] += dz[k];
                }
                for j in 0..h {
                    if pre[j] <= 0.0 {
                        continue;
                    }
                    let dh: f64 = (0..c).map(|k| dz[k] * w2[k * h + j]).sum();
                    for (i, &xi) in x.iter().enumerate() {
                        grad[j * d + i] += dh * xi;
                    }
                    grad[off_b1 + j] += dh;
                }
            }
        }
    }
    if l2 > 0.0 {
        for_weight_ranges(model, |range| {
            for i in range {
                grad[i] += l2 * model.params[i];
            }
        });
    }
    grad
}

/// Adam state over a flat parameter vector. Canonical constants
/// (beta1 0.9, beta2 0.999, eps 1e-8) with bias correction.
struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    fn new(lr: f64, n: usize) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

/// Train a model on the dataset: seeded uniform init scaled by
/// 1/sqrt(fan-in), shuffled mini-batches, Adam on cross-entropy.
/// Deterministic under `(ds, config)`.
pub fn fit(ds: &LabeledDataset, config: &ClassifierConfig) -> Result<Model> {
    config.validate()?;
    if ds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if ds.num_classes < 2 {
        return Err(Error::SingleClass);
    }

    let c = ds.num_classes;
    let d = ds.dim;
    let mut model = Model::zeros(config.kind, d, config.hidden_units, c);

    let n = ds.len() as f64;
    for j in 0..d {
        let mean = ds.samples.iter().map(|s| s.features[j]).sum::<f64>() / n;
        let var = ds
            .samples
            .iter()
            .map(|s| (s.features[j] - mean) * (s.features[j] - mean))
            .sum::<f64>()
            / n;
        model.feat_mean[j] = mean;
        model.feat_std[j] = var.sqrt().max(1e-12);
    }

    let mut init_rng = rng::stream(config.seed, &[stage::INIT]);
    match config.kind {
        ClassifierKind::Softmax => {
            let s = 0.1 / (d as f64).sqrt();
            for w in model.params[..c * d].iter_mut() {
                *w = init_rng.gen_range(-s..s);
            }
        }
        ClassifierKind::Mlp => {
            let h = model.hidden;
            let s1 = 0.1 / (d as f64).sqrt();
            for w in model.params[..h * d].iter_mut() {
                *w = init_rng.gen_range(-s1..s1);
            }
            let s2 = 0.1 / (h as f64).sqrt();
            let off_w2 = h * d + h;
            for w in model.params[off_w2..off_w2 + c * h].iter_mut() {
                *w = init_rng.gen_range(-s2..s2);
            }
        }
    }

    let mut adam = Adam::new(config.learning_rate, model.params.len());
    let mut order: Vec<usize> = (0..ds.len()).collect();
    let mut shuffle_rng = rng::stream(config.seed, &[stage::SHUFFLE]);
    let mut epoch_loss = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<&Sample> = chunk.iter().map(|&i| &ds.samples[i]).collect();
            let loss = batch_loss(&model, &batch, config.l2);
            loss_sum += loss * batch.len() as f64;
            let grad = batch_grad(&model, &batch, config.l2);
            adam.step(&mut model.params, &grad);
        }
        let mean = loss_sum / ds.len() as f64;
        if !mean.is_finite() {
            return Err(Error::Divergence { epoch });
        }
        epoch_loss.push(mean);
    }
    model.epoch_loss = epoch_loss;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::make_blobs;
    use approx::assert_abs_diff_eq;

    #[test]
    fn zero_model_is_uniform() {
        let m = Model::zeros(ClassifierKind::Softmax, 3, 0, 4);
        let p = predict_proba(&m, &[1.0, -2.0, 0.5]).unwrap();
        for &q in &p.probs {
            assert_abs_diff_eq!(q, 0.25, epsilon = 1e-15);
        }
    }

    #[test]
    fn softmax_extreme_logits_do_not_overflow() {
        let p = softmax(&[1000.0, 0.0]);
        assert!(p.probs[0] > 0.999999);
        assert!(p.probs[1] > 0.0);
        let sum: f64 = p.probs.iter().sum();
        assert_abs_diff_eq!(sum, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn predict_tie_breaks_low() {
        let p = ProbVector {
            probs: vec![0.5, 0.5],
        };
        assert_eq!(p.argmax(), 0);
        let p = ProbVector {
            probs: vec![0.2, 0.5, 0.3],
        };
        assert_eq!(p.argmax(), 1);
    }

    #[test]
    fn cross_entropy_values() {
        let one_hot = ProbVector {
            probs: vec![1.0, f64::MIN_POSITIVE, f64::MIN_POSITIVE],
        };
        assert_abs_diff_eq!(cross_entropy(&one_hot, 0), 0.0, epsilon = 1e-12);
        let uniform = ProbVector {
            probs: vec![0.25; 4],
        };
        assert_abs_diff_eq!(cross_entropy(&uniform, 2), 4.0_f64.ln(), epsilon = 1e-12);
        let p = ProbVector {
            probs: vec![0.7, 0.2, 0.1],
        };
        assert_abs_diff_eq!(cross_entropy(&p, 2), std::f64::consts::LN_10, epsilon = 1e-12);
    }

    #[test]
    fn fit_separable_blobs_softmax() {
        let (ds, _) = make_blobs(3, 50, 5, 10.0, 1.0, 21).unwrap();
        let cfg = ClassifierConfig {
            batch_size: 16,
            seed: 1,
            ..Default::default()
        };
        let model = fit(&ds, &cfg).unwrap();
        let correct = ds
            .samples
            .iter()
            .filter(|s| predict(&model, &s.features).unwrap() == s.label)
            .count();
        assert!(correct as f64 / ds.len() as f64 >= 0.99);
    }

    #[test]
    fn fit_single_class_is_error() {
        let ds = LabeledDataset::new(
            vec![crate::dataset::Sample {
                id: 0,
                features: vec![1.0],
                label: 0,
            }],
            1,
        )
        .unwrap();
        assert!(matches!(
            fit(&ds, &ClassifierConfig::default()).unwrap_err(),
            Error::SingleClass
        ));
    }

    #[test]
    fn fit_is_deterministic() {
        let (ds, _) = make_blobs(3, 20, 2, 8.0, 1.0, 5).unwrap();
        let cfg = ClassifierConfig {
            kind: ClassifierKind::Mlp,
            hidden_units: 8,
            epochs: 5,
            seed: 9,
            ..Default::default()
        };
        let a = fit(&ds, &cfg).unwrap();
        let b = fit(&ds, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn predict_dim_mismatch() {
        let m = Model::zeros(ClassifierKind::Softmax, 3, 0, 2);
        assert!(matches!(
            predict_proba(&m, &[1.0]).unwrap_err(),
            Error::DimMismatch { .. }
        ));
    }

    #[test]
    fn predict_agrees_with_proba_argmax() {
        let (ds, _) = make_blobs(4, 10, 3, 6.0, 1.5, 13).unwrap();
        let cfg = ClassifierConfig {
            epochs: 3,
            seed: 2,
            ..Default::default()
        };
        let model = fit(&ds, &cfg).unwrap();
        let mut rng = crate::rng::stream(77, &[1]);
        for _ in 0..1000 {
            let x: Vec<f64> = (0..3).map(|_| rng.gen_range(-10.0..10.0)).collect();
            let p = predict_proba(&model, &x).unwrap();
            assert_eq!(predict(&model, &x).unwrap(), p.argmax());
        }
    }

    #[test]
    fn model_json_round_trip() {
        let (ds, _) = make_blobs(3, 10, 2, 8.0, 1.0, 4).unwrap();
        let cfg = ClassifierConfig {
            kind: ClassifierKind::Mlp,
            hidden_units: 4,
            epochs: 2,
            seed: 3,
            ..Default::default()
        };
        let model = fit(&ds, &cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        model.save_json(&path).unwrap();
        let back = Model::load_json(&path).unwrap();
        assert_eq!(model, back);
    }

    #[test]
    fn training_loss_decreases_on_blobs() {
        for seed in 0..10u64 {
            let (ds, _) = make_blobs(3, 30, 2, 8.0, 1.0, 100 + seed).unwrap();
            let cfg = ClassifierConfig {
                seed,
                ..Default::default()
            };
            let model = fit(&ds, &cfg).unwrap();
            assert!(
                model.epoch_loss[49] < model.epoch_loss[0],
                "seed {seed}: {} !< {}",
                model.epoch_loss[49],
                model.epoch_loss[0]
            );
        }
    }
}
