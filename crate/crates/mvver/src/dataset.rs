//! Dataset representation, CSV I/O, synthetic blob generation,
//! class-balanced noise injection, and stratified splitting.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, stage};

/// Class index in `[0, C)`.
pub type ClassLabel = usize;

/// One labeled feature vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub id: usize,
    pub features: Vec<f64>,
    pub label: ClassLabel,
}

/// An ordered, immutable collection of samples over a fixed label space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledDataset {
    pub samples: Vec<Sample>,
    pub num_classes: usize,
    pub dim: usize,
}

impl LabeledDataset {
    /// Build a dataset, checking id uniqueness, label range, feature
    /// dimension consistency, and finiteness.
    pub fn new(samples: Vec<Sample>, num_classes: usize) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let dim = samples[0].features.len();
        let mut seen = HashSet::with_capacity(samples.len());
        for (row, s) in samples.iter().enumerate() {
            if s.features.len() != dim {
                return Err(Error::ColumnCount {
                    row,
                    expected: dim,
                    got: s.features.len(),
                });
            }
            if s.features.iter().any(|v| !v.is_finite()) {
                return Err(Error::MalformedRow {
                    row,
                    reason: "non-finite feature value".into(),
                });
            }
            if s.label >= num_classes {
                return Err(Error::LabelOutOfRange {
                    row,
                    label: s.label as i64,
                    num_classes,
                });
            }
            if !seen.insert(s.id) {
                return Err(Error::MalformedRow {
                    row,
                    reason: format!("duplicate sample id {}", s.id),
                });
            }
        }
        Ok(Self {
            samples,
            num_classes,
            dim,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Number of samples currently labeled with each class.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.num_classes];
        for s in &self.samples {
            counts[s.label] += 1;
        }
        counts
    }

    /// Ids in dataset order.
    pub fn ids(&self) -> Vec<usize> {
        self.samples.iter().map(|s| s.id).collect()
    }

    /// Map sample id to its current label.
    pub fn label_map(&self) -> BTreeMap<usize, ClassLabel> {
        self.samples.iter().map(|s| (s.id, s.label)).collect()
    }
}

/// Noise-injection parameters.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub ratio: f64,
    pub seed: u64,
}

/// One corrupted label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub id: usize,
    pub original: ClassLabel,
    pub corrupted: ClassLabel,
}

/// Ground-truth record of every label flip. Consumed only by evaluation
/// metrics; the curation algorithm never reads it.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NoiseLedger {
    pub entries: Vec<LedgerEntry>,
}

impl NoiseLedger {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Ids whose labels were corrupted.
    pub fn corrupted_ids(&self) -> HashSet<usize> {
        self.entries.iter().map(|e| e.id).collect()
    }

    /// Undo every recorded flip, reproducing the clean dataset.
    pub fn apply_inverse(&self, ds: &LabeledDataset) -> LabeledDataset {
        let by_id: BTreeMap<usize, &LedgerEntry> =
            self.entries.iter().map(|e| (e.id, e)).collect();
        let mut out = ds.clone();
        for s in &mut out.samples {
            if let Some(e) = by_id.get(&s.id) {
                debug_assert_eq!(s.label, e.corrupted);
                s.label = e.original;
            }
        }
        out
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        let bytes = serde_json::to_vec_pretty(self)?;
        fs::write(path, bytes)?;
        Ok(())
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let bytes = fs::read(path)?;
        Ok(serde_json::from_slice(&bytes)?)
    }
}

/// Load a dataset from CSV with header `f0,...,f{d-1},label` and an
/// optional leading `# classes=C` metadata comment.
pub fn load_csv(path: &Path) -> Result<LabeledDataset> {
    let text = fs::read_to_string(path)?;
    parse_csv(&text)
}

pub(crate) fn parse_csv(text: &str) -> Result<LabeledDataset> {
    let mut declared_classes: Option<usize> = None;
    let mut body = text;
    if let Some(first) = text.lines().next() {
        let trimmed = first.trim();
        if let Some(rest) = trimmed.strip_prefix('#') {
            let rest = rest.trim();
            if let Some(v) = rest.strip_prefix("classes=") {
                declared_classes = Some(v.trim().parse().map_err(|_| Error::MalformedRow {
                    row: 0,
                    reason: format!("bad classes metadata: {rest}"),
                })?);
            }
            body = &text[first.len()..];
            body = body.strip_prefix('\n').unwrap_or(body);
        }
    }

    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(body.as_bytes());
    let headers = reader.headers()?.clone();
    if headers.len() < 2 {
        return Err(Error::MalformedRow {
            row: 0,
            reason: "header must contain at least one feature column and a label".into(),
        });
    }
    let dim = headers.len() - 1;

    let mut samples = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record?;
        if record.len() != dim + 1 {
            return Err(Error::ColumnCount {
                row,
                expected: dim + 1,
                got: record.len(),
            });
        }
        let mut features = Vec::with_capacity(dim);
        for j in 0..dim {
            let v: f64 = record[j].trim().parse().map_err(|_| Error::MalformedRow {
                row,
                reason: format!("bad feature value '{}'", &record[j]),
            })?;
            if !v.is_finite() {
                return Err(Error::MalformedRow {
                    row,
                    reason: format!("non-finite feature value '{}'", &record[j]),
                });
            }
            features.push(v);
        }
        let label: i64 = record[dim].trim().parse().map_err(|_| Error::MalformedRow {
            row,
            reason: format!("non-integer label '{}'", &record[dim]),
        })?;
        if label < 0 {
            return Err(Error::MalformedRow {
                row,
                reason: format!("negative label {label}"),
            });
        }
        samples.push(Sample {
            id: i,
            features,
            label: label as usize,
        });
    }
    if samples.is_empty() {
        return Err(Error::EmptyDataset);
    }

    let max_label = samples.iter().map(|s| s.label).max().unwrap();
    let num_classes = declared_classes.unwrap_or(max_label + 1);
    if max_label >= num_classes {
        return Err(Error::LabelOutOfRange {
            row: samples.iter().position(|s| s.label == max_label).unwrap() + 1,
            label: max_label as i64,
            num_classes,
        });
    }
    LabeledDataset::new(samples, num_classes)
}

/// Write a dataset as CSV with the `# classes=C` metadata line.
/// Feature values round-trip exactly through [`load_csv`].
pub fn save_csv(ds: &LabeledDataset, path: &Path) -> Result<()> {
    let mut out = String::new();
    out.push_str(&format!("# classes={}\n", ds.num_classes));
    let header: Vec<String> = (0..ds.dim)
        .map(|j| format!("f{j}"))
        .chain(std::iter::once("label".to_string()))
        .collect();
    out.push_str(&header.join(","));
    out.push('\n');
    for s in &ds.samples {
        for v in &s.features {
            out.push_str(&format!("{v},"));
        }
        out.push_str(&format!("{}\n", s.label));
    }
    let mut f = fs::File::create(path)?;
    f.write_all(out.as_bytes())?;
    Ok(())
}

/// Generate `C` isotropic Gaussian clusters with mutual mean distance
/// at least `separation` and standard deviation `spread`.
pub fn make_blobs(
    num_classes: usize,
    per_class: usize,
    dim: usize,
    separation: f64,
    spread: f64,
    seed: u64,
) -> Result<(LabeledDataset, NoiseLedger)> {
    if num_classes == 0 || per_class == 0 || dim == 0 {
        return Err(Error::InvalidConfig(
            "num_classes, per_class and dim must be positive".into(),
        ));
    }
    if !(separation.is_finite() && separation > 0.0 && spread.is_finite() && spread > 0.0) {
        return Err(Error::InvalidConfig(
            "separation and spread must be positive".into(),
        ));
    }

    let mut rng = rng::stream(seed, &[stage::DATA]);

    // Rejection-sample cluster means from a box that grows until all
    // pairwise distances clear the separation requirement.
    let mut half_width = separation * (num_classes as f64).powf(1.0 / dim as f64).max(1.0);
    let mut means: Vec<Vec<f64>> = Vec::with_capacity(num_classes);
    let mut attempts = 0usize;
    while means.len() < num_classes {
        let candidate: Vec<f64> = (0..dim)
            .map(|_| rng.gen_range(-half_width..half_width))
            .collect();
        let ok = means.iter().all(|m| {
            let d2: f64 = m
                .iter()
                .zip(&candidate)
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            d2.sqrt() >= separation
        });
        if ok {
            means.push(candidate);
        } else {
            attempts += 1;
            if attempts > num_classes * 50 {
                half_width *= 1.5;
                attempts = 0;
            }
        }
    }

    let normal = StandardNormal;
    let mut samples = Vec::with_capacity(num_classes * per_class);
    let mut id = 0usize;
    for (c, mean) in means.iter().enumerate() {
        for _ in 0..per_class {
            let features: Vec<f64> = mean
                .iter()
                .map(|&m| {
                    let z: f64 = normal.sample(&mut rng);
                    m + spread * z
                })
                .collect();
            samples.push(Sample {
                id,
                features,
                label: c,
            });
            id += 1;
        }
    }
    let ds = LabeledDataset::new(samples, num_classes)?;
    Ok((ds, NoiseLedger::default()))
}

/// Per-class flip count: round(ratio * n) with half-up ties.
fn flip_count(ratio: f64, n: usize) -> usize {
    (ratio * n as f64 + 0.5).floor() as usize
}

/// Corrupt labels so that within each class exactly `round(ratio*N_c)`
/// samples receive a uniformly random different label. The input is not
/// modified; every flip is recorded in the returned ledger.
pub fn inject_noise(ds: &LabeledDataset, spec: &NoiseSpec) -> Result<(LabeledDataset, NoiseLedger)> {
    if ds.num_classes < 2 {
        return Err(Error::SingleClass);
    }
    if !(0.0..1.0).contains(&spec.ratio) {
        return Err(Error::InvalidConfig(format!(
            "noise ratio must be in [0,1), got {}",
            spec.ratio
        )));
    }
    let c = ds.num_classes;
    let mut out = ds.clone();
    let mut entries = Vec::new();
    for class in 0..c {
        let mut idx: Vec<usize> = ds
            .samples
            .iter()
            .enumerate()
            .filter(|(_, s)| s.label == class)
            .map(|(i, _)| i)
            .collect();
        let k = flip_count(spec.ratio, idx.len());
        let mut rng = rng::stream(spec.seed, &[stage::NOISE, class as u64]);
        idx.shuffle(&mut rng);
        for &i in idx.iter().take(k) {
            // uniform over the C-1 wrong classes
            let mut target = rng.gen_range(0..c - 1);
            if target >= class {
                target += 1;
            }
            entries.push(LedgerEntry {
                id: ds.samples[i].id,
                original: class,
                corrupted: target,
            });
            out.samples[i].label = target;
        }
    }
    entries.sort_by_key(|e| e.id);
    Ok((out, NoiseLedger { entries }))
}

/// Split into `n` disjoint subsets with per-class counts differing by at
/// most one across subsets.
pub fn stratified_split(ds: &LabeledDataset, n: usize, seed: u64) -> Result<Vec<LabeledDataset>> {
    if n < 2 {
        return Err(Error::TooFewViews(n));
    }
    let mut buckets: Vec<Vec<Sample>> = vec![Vec::new(); n];
    for class in 0..ds.num_classes {
        let mut members: Vec<&Sample> = ds.samples.iter().filter(|s| s.label == class).collect();
        if members.len() < n {
            return Err(Error::ClassTooSmall {
                class,
                count: members.len(),
                needed: n,
            });
        }
        let mut rng = rng::stream(seed, &[stage::SPLIT, class as u64]);
        members.shuffle(&mut rng);
        // rotate the dealing start by class so remainders spread evenly
        for (i, s) in members.into_iter().enumerate() {
            buckets[(i + class) % n].push(s.clone());
        }
    }
    buckets
        .into_iter()
        .map(|mut b| {
            b.sort_by_key(|s| s.id);
            LabeledDataset::new(b, ds.num_classes)
        })
        .collect()
}

/// Stratified holdout split: roughly `test_fraction` of each class goes
/// to the test set, the rest to the training set.
pub fn stratified_holdout(
    ds: &LabeledDataset,
    test_fraction: f64,
    seed: u64,
) -> Result<(LabeledDataset, LabeledDataset)> {
    if !(0.0 < test_fraction && test_fraction < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "test_fraction must be in (0,1), got {test_fraction}"
        )));
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    for class in 0..ds.num_classes {
        let mut members: Vec<&Sample> = ds.samples.iter().filter(|s| s.label == class).collect();
        if members.len() < 2 {
            return Err(Error::ClassTooSmall {
                class,
                count: members.len(),
                needed: 2,
            });
        }
        let mut rng = rng::stream(seed, &[stage::HOLDOUT, class as u64]);
        members.shuffle(&mut rng);
        let k = flip_count(test_fraction, members.len()).clamp(1, members.len() - 1);
        for (i, s) in members.into_iter().enumerate() {
            if i < k {
                test.push(s.clone());
            } else {
                train.push(s.clone());
            }
        }
    }
    train.sort_by_key(|s| s.id);
    test.sort_by_key(|s| s.id);
    Ok((
        LabeledDataset::new(train, ds.num_classes)?,
        LabeledDataset::new(test, ds.num_classes)?,
    ))
}
