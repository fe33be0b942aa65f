//! Multi-view training and unanimity voting: train one model per
//! disjoint view, predict every sample with all models, and partition
//! into a strong set (unanimous votes) and a weak set (conflicting
//! votes, labels stripped).

use std::collections::HashSet;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::classifier::{fit, predict, ClassifierConfig, Model};
use crate::dataset::{ClassLabel, LabeledDataset, Sample};
use crate::error::{Error, Result};
use crate::rng::{self, stage};

/// Per-sample votes from the n view models.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VoteRow {
    pub id: usize,
    pub predictions: Vec<ClassLabel>,
    pub unanimous: bool,
    pub voted_label: Option<ClassLabel>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VoteTable {
    pub rows: Vec<VoteRow>,
}

impl VoteTable {
    pub fn unanimous_count(&self) -> usize {
        self.rows.iter().filter(|r| r.unanimous).count()
    }

    /// Export as CSV: `id,z1..zn,unanimous,voted_label`.
    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let n = self.rows.first().map_or(0, |r| r.predictions.len());
        let mut out = String::new();
        let mut header = vec!["id".to_string()];
        header.extend((1..=n).map(|j| format!("z{j}")));
        header.push("unanimous".into());
        header.push("voted_label".into());
        out.push_str(&header.join(","));
        out.push('\n');
        for r in &self.rows {
            out.push_str(&r.id.to_string());
            for p in &r.predictions {
                out.push_str(&format!(",{p}"));
            }
            out.push_str(&format!(",{}", r.unanimous));
            match r.voted_label {
                Some(l) => out.push_str(&format!(",{l}\n")),
                None => out.push_str(",\n"),
            }
        }
        let mut f = fs::File::create(path)?;
        f.write_all(out.as_bytes())?;
        Ok(())
    }
}

/// A sample demoted to the weak set: label stripped, last-known label
/// kept only for evaluation metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeakSample {
    pub id: usize,
    pub features: Vec<f64>,
    /// Label the sample carried when demoted. Never read by the algorithm.
    pub audit_label: ClassLabel,
}

/// Which label a unanimous sample keeps in the strong set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StrongLabel {
    /// The unanimous voted label (default): voting can silently correct labels.
    #[default]
    Voted,
    /// The incoming (possibly noisy) label.
    Original,
}

/// The evolving strong/weak partition. `|strong| + |weak| = n_total`
/// at every iteration boundary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurationState {
    pub strong: LabeledDataset,
    pub weak: Vec<WeakSample>,
    pub n_total: usize,
}

impl CurationState {
    pub fn weak_ids(&self) -> Vec<usize> {
        self.weak.iter().map(|w| w.id).collect()
    }
}

/// Split `ds` into `n` disjoint stratified views and train one model on
/// each. Per-view seeds are derived from `(seed, view index)`.
pub fn train_views(
    ds: &LabeledDataset,
    n: usize,
    config: &ClassifierConfig,
    seed: u64,
) -> Result<Vec<Model>> {
    if n < 2 {
        return Err(Error::TooFewViews(n));
    }
    let views = crate::dataset::stratified_split(ds, n, rng::mix(seed, &[stage::SPLIT]))?;
    views
        .iter()
        .enumerate()
        .map(|(j, view)| {
            let cfg = config.with_seed(rng::mix(seed, &[stage::VIEW, j as u64]));
            fit(view, &cfg)
        })
        .collect()
}

/// Predict every sample of `ds` with every model and record unanimity.
pub fn vote(models: &[Model], ds: &LabeledDataset) -> Result<VoteTable> {
    if models.len() < 2 {
        return Err(Error::TooFewViews(models.len()));
    }
    let (c, d) = (models[0].num_classes, models[0].dim);
    if models.iter().any(|m| m.num_classes != c || m.dim != d) {
        return Err(Error::ModelMismatch);
    }
    if ds.dim != d {
        return Err(Error::DimMismatch {
            expected: d,
            got: ds.dim,
        });
    }
    let mut rows = Vec::with_capacity(ds.len());
    for s in &ds.samples {
        let predictions: Vec<ClassLabel> = models
            .iter()
            .map(|m| predict(m, &s.features))
            .collect::<Result<_>>()?;
        let unanimous = predictions.iter().all(|&p| p == predictions[0]);
        rows.push(VoteRow {
            id: s.id,
            voted_label: unanimous.then(|| predictions[0]),
            predictions,
            unanimous,
        });
    }
    Ok(VoteTable { rows })
}

/// Split `ds` by vote unanimity. Unanimous samples enter the strong set
/// with the label chosen by `strong_label`; the rest are stripped of
/// their labels and appended to `carried_weak`.
pub fn partition(
    ds: &LabeledDataset,
    table: &VoteTable,
    carried_weak: Vec<WeakSample>,
    strong_label: StrongLabel,
) -> Result<CurationState> {
    if table.rows.len() != ds.len()
        || !table
            .rows
            .iter()
            .zip(&ds.samples)
            .all(|(r, s)| r.id == s.id)
    {
        return Err(Error::VoteCoverage);
    }
    let ds_ids: HashSet<usize> = ds.ids().into_iter().collect();
    if carried_weak.iter().any(|w| ds_ids.contains(&w.id)) {
        return Err(Error::IdMismatch(
            "carried weak ids overlap the input dataset".into(),
        ));
    }

    let n_total = ds.len() + carried_weak.len();
    let mut strong = Vec::new();
    let mut weak = carried_weak;
    for (row, s) in table.rows.iter().zip(&ds.samples) {
        if row.unanimous {
            let label = match strong_label {
                StrongLabel::Voted => row.voted_label.unwrap(),
                StrongLabel::Original => s.label,
            };
            strong.push(Sample {
                id: s.id,
                features: s.features.clone(),
                label,
            });
        } else {
            weak.push(WeakSample {
                id: s.id,
                features: s.features.clone(),
                audit_label: s.label,
            });
        }
    }
    if strong.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let strong = LabeledDataset::new(strong, ds.num_classes)?;
    debug_assert_eq!(strong.len() + weak.len(), n_total);
    Ok(CurationState {
        strong,
        weak,
        n_total,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::ClassifierKind;
    use crate::dataset::make_blobs;
    use std::collections::HashSet;

    fn fast_cfg() -> ClassifierConfig {
        ClassifierConfig {
            kind: ClassifierKind::Softmax,
            epochs: 20,
            ..Default::default()
        }
    }

    fn make_table(ids_preds: &[(usize, Vec<usize>)]) -> VoteTable {
        VoteTable {
            rows: ids_preds
                .iter()
                .map(|(id, preds)| {
                    let unanimous = preds.iter().all(|&p| p == preds[0]);
                    VoteRow {
                        id: *id,
                        predictions: preds.clone(),
                        unanimous,
                        voted_label: unanimous.then(|| preds[0]),
                    }
                })
                .collect(),
        }
    }

    #[test]
    fn train_views_sizes() {
        let (ds, _) = make_blobs(3, 100, 2, 10.0, 1.0, 17).unwrap();
        let models = train_views(&ds, 3, &fast_cfg(), 1).unwrap();
        assert_eq!(models.len(), 3);
        let views = crate::dataset::stratified_split(&ds, 3, rng::mix(1, &[stage::SPLIT])).unwrap();
        for v in &views {
            assert_eq!(v.len(), 100);
        }
    }

    #[test]
    fn train_views_n1_rejected() {
        let (ds, _) = make_blobs(2, 10, 2, 10.0, 1.0, 2).unwrap();
        assert!(matches!(
            train_views(&ds, 1, &fast_cfg(), 0).unwrap_err(),
            Error::TooFewViews(1)
        ));
    }

    #[test]
    fn identical_models_vote_unanimously() {
        let (ds, _) = make_blobs(2, 20, 2, 10.0, 1.0, 6).unwrap();
        let m = fit(&ds, &fast_cfg()).unwrap();
        let table = vote(&[m.clone(), m.clone(), m], &ds).unwrap();
        assert_eq!(table.unanimous_count(), ds.len());
        for r in &table.rows {
            assert_eq!(r.predictions.len(), 3);
            assert!(r.voted_label.is_some());
        }
    }

    #[test]
    fn unanimity_rule() {
        let t = make_table(&[(0, vec![3, 3]), (1, vec![3, 5])]);
        assert!(t.rows[0].unanimous);
        assert_eq!(t.rows[0].voted_label, Some(3));
        assert!(!t.rows[1].unanimous);
        assert_eq!(t.rows[1].voted_label, None);
    }

    #[test]
    fn unanimity_symmetric_in_model_order() {
        let (ds, _) = make_blobs(3, 30, 2, 6.0, 2.0, 8).unwrap();
        let models = train_views(&ds, 2, &fast_cfg(), 5).unwrap();
        let fwd = vote(&models, &ds).unwrap();
        let rev_models: Vec<Model> = models.iter().rev().cloned().collect();
        let rev = vote(&rev_models, &ds).unwrap();
        for (a, b) in fwd.rows.iter().zip(&rev.rows) {
            assert_eq!(a.unanimous, b.unanimous);
            assert_eq!(a.voted_label, b.voted_label);
        }
    }

    #[test]
    fn partition_counts_and_labels() {
        let (ds, _) = make_blobs(2, 2, 2, 10.0, 1.0, 12).unwrap();
        // flags T, T, F, T
        let t = make_table(&[
            (0, vec![0, 0]),
            (1, vec![0, 0]),
            (2, vec![1, 0]),
            (3, vec![1, 1]),
        ]);
        let state = partition(&ds, &t, Vec::new(), StrongLabel::Voted).unwrap();
        assert_eq!(state.strong.len(), 3);
        assert_eq!(state.weak.len(), 1);
        assert_eq!(state.n_total, 4);
        assert_eq!(state.weak[0].id, 2);
        // strong labels come from the unanimous vote
        assert_eq!(state.strong.samples[2].label, 1);
    }

    #[test]
    fn partition_all_unanimous_keeps_carried_weak() {
        let (ds, _) = make_blobs(2, 2, 2, 10.0, 1.0, 12).unwrap();
        let t = make_table(&[
            (0, vec![0, 0]),
            (1, vec![0, 0]),
            (2, vec![1, 1]),
            (3, vec![1, 1]),
        ]);
        let carried = vec![WeakSample {
            id: 99,
            features: vec![0.0, 0.0],
            audit_label: 0,
        }];
        let state = partition(&ds, &t, carried.clone(), StrongLabel::Voted).unwrap();
        assert_eq!(state.weak, carried);
        assert_eq!(state.strong.len(), 4);
    }

    #[test]
    fn partition_conserves_ids() {
        let (ds, _) = make_blobs(3, 10, 2, 4.0, 2.0, 14).unwrap();
        let models = train_views(&ds, 2, &fast_cfg(), 3).unwrap();
        let table = vote(&models, &ds).unwrap();
        let carried = vec![WeakSample {
            id: 1000,
            features: vec![0.0, 0.0],
            audit_label: 1,
        }];
        let state = partition(&ds, &table, carried, StrongLabel::Voted).unwrap();
        let mut got: HashSet<usize> = state.strong.ids().into_iter().collect();
        got.extend(state.weak_ids());
        let mut want: HashSet<usize> = ds.ids().into_iter().collect();
        want.insert(1000);
        assert_eq!(got, want);
        assert_eq!(state.strong.len() + state.weak.len(), state.n_total);
    }

    #[test]
    fn partition_rejects_bad_coverage() {
        let (ds, _) = make_blobs(2, 2, 2, 10.0, 1.0, 12).unwrap();
        let t = make_table(&[(0, vec![0, 0])]);
        assert!(matches!(
            partition(&ds, &t, Vec::new(), StrongLabel::Voted).unwrap_err(),
            Error::VoteCoverage
        ));
    }

    #[test]
    fn vote_table_csv_export() {
        let t = make_table(&[(0, vec![1, 1]), (1, vec![0, 2])]);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("votes.csv");
        t.save_csv(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(
            text,
            "id,z1,z2,unanimous,voted_label\n0,1,1,true,1\n1,0,2,false,\n"
        );
    }
}
