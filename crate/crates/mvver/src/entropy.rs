//! Prediction entropy, ranking of weak samples under the strong model,
//! and threshold-based recovery with MAP relabeling.

use std::collections::HashSet;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::classifier::{predict_proba, Model, ProbVector};
use crate::dataset::{ClassLabel, LabeledDataset, Sample};
use crate::error::{Error, Result};
use crate::voting::{CurationState, WeakSample};

/// Probabilities at or below this contribute zero entropy.
const ENTROPY_TERM_FLOOR: f64 = 1e-15;

/// Entropy and MAP prediction of the strong model for one weak sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyRecord {
    pub sample_id: usize,
    /// Shannon entropy in nats.
    pub entropy: f64,
    pub map_label: ClassLabel,
    pub map_prob: f64,
}

/// Recovery threshold. Samples with entropy <= alpha (inclusive) move
/// back to the strong set. A negative alpha disables recovery.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RecoveryConfig {
    pub alpha: f64,
}

/// Shannon entropy of a probability vector, in nats.
pub fn prediction_entropy(p: &ProbVector) -> f64 {
    p.probs
        .iter()
        .filter(|&&q| q > ENTROPY_TERM_FLOOR)
        .map(|&q| -q * q.ln())
        .sum()
}

/// Score every weak sample with the strong model and sort ascending by
/// entropy, sample id as the tiebreaker.
pub fn rank_weak(strong_model: &Model, weak: &[WeakSample]) -> Result<Vec<EntropyRecord>> {
    let mut records = Vec::with_capacity(weak.len());
    for w in weak {
        let p = predict_proba(strong_model, &w.features)?;
        let map_label = p.argmax();
        records.push(EntropyRecord {
            sample_id: w.id,
            entropy: prediction_entropy(&p),
            map_label,
            map_prob: p.probs[map_label],
        });
    }
    records.sort_by(|a, b| {
        a.entropy
            .partial_cmp(&b.entropy)
            .unwrap()
            .then(a.sample_id.cmp(&b.sample_id))
    });
    Ok(records)
}

/// Move every weak sample with entropy <= alpha into the strong set,
/// labeled with the strong model's MAP prediction. The original noisy
/// label is never consulted.
pub fn recover(
    state: CurationState,
    records: &[EntropyRecord],
    cfg: &RecoveryConfig,
) -> Result<CurationState> {
    let weak_ids: HashSet<usize> = state.weak.iter().map(|w| w.id).collect();
    if records.len() != weak_ids.len()
        || !records.iter().all(|r| weak_ids.contains(&r.sample_id))
    {
        return Err(Error::RecordCoverage);
    }

    let recovered: std::collections::HashMap<usize, ClassLabel> = records
        .iter()
        .filter(|r| r.entropy <= cfg.alpha)
        .map(|r| (r.sample_id, r.map_label))
        .collect();
    if recovered.is_empty() {
        return Ok(state);
    }

    let CurationState {
        strong,
        weak,
        n_total,
    } = state;
    let num_classes = strong.num_classes;
    let mut strong_samples = strong.samples;
    let mut remaining = Vec::with_capacity(weak.len() - recovered.len());
    for w in weak {
        match recovered.get(&w.id) {
            Some(&label) => strong_samples.push(Sample {
                id: w.id,
                features: w.features,
                label,
            }),
            None => remaining.push(w),
        }
    }
    let strong = LabeledDataset::new(strong_samples, num_classes)?;
    debug_assert_eq!(strong.len() + remaining.len(), n_total);
    Ok(CurationState {
        strong,
        weak: remaining,
        n_total,
    })
}

/// Equal-width histogram over `[0, ln C]`; the last bin is right-inclusive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

impl Histogram {
    pub fn save_json(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_vec_pretty(self)?)?;
        Ok(())
    }
}

/// Histogram of weak-set entropies, the per-iteration diagnostic used to
/// pick alpha by eye.
pub fn entropy_histogram(records: &[EntropyRecord], bins: usize, num_classes: usize) -> Histogram {
    assert!(bins >= 1, "bins must be >= 1");
    let max = (num_classes as f64).ln();
    let width = max / bins as f64;
    let edges: Vec<f64> = (0..=bins).map(|i| i as f64 * width).collect();
    let mut counts = vec![0usize; bins];
    for r in records {
        let idx = if width > 0.0 {
            ((r.entropy / width) as usize).min(bins - 1)
        } else {
            0
        };
        counts[idx] += 1;
    }
    Histogram { edges, counts }
}

/// Export ranked records as CSV: `id,entropy,map_label,map_prob`.
pub fn save_records_csv(records: &[EntropyRecord], path: &Path) -> Result<()> {
    let mut out = String::from("id,entropy,map_label,map_prob\n");
    for r in records {
        out.push_str(&format!(
            "{},{},{},{}\n",
            r.sample_id, r.entropy, r.map_label, r.map_prob
        ));
    }
    let mut f = fs::File::create(path)?;
    f.write_all(out.as_bytes())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::{fit, ClassifierConfig, ClassifierKind};
    use crate::dataset::make_blobs;
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    fn pv(probs: Vec<f64>) -> ProbVector {
        ProbVector { probs }
    }

    #[test]
    fn entropy_one_hot_zero() {
        let p = pv(vec![1.0, 1e-300, 1e-300]);
        assert_eq!(prediction_entropy(&p), 0.0);
    }

    #[test]
    fn entropy_uniform_max() {
        let p = pv(vec![0.25; 4]);
        assert_abs_diff_eq!(prediction_entropy(&p), 4.0_f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn entropy_hand_value() {
        let p = pv(vec![0.7, 0.2, 0.1]);
        assert_abs_diff_eq!(prediction_entropy(&p), 0.801819, epsilon = 1e-6);
    }

    #[test]
    fn rank_weak_empty() {
        let m = Model::zeros(ClassifierKind::Softmax, 2, 0, 3);
        assert!(rank_weak(&m, &[]).unwrap().is_empty());
    }

    #[test]
    fn rank_weak_sorted_permutation() {
        let (ds, _) = make_blobs(3, 40, 2, 5.0, 2.0, 31).unwrap();
        let cfg = ClassifierConfig {
            epochs: 10,
            ..Default::default()
        };
        let model = fit(&ds, &cfg).unwrap();
        let mut rng = crate::rng::stream(9, &[2]);
        let weak: Vec<WeakSample> = (0..100)
            .map(|i| WeakSample {
                id: i,
                features: (0..2).map(|_| rng.gen_range(-8.0..8.0)).collect(),
                audit_label: 0,
            })
            .collect();
        let records = rank_weak(&model, &weak).unwrap();
        assert_eq!(records.len(), 100);
        let mut ids: Vec<usize> = records.iter().map(|r| r.sample_id).collect();
        ids.sort();
        assert_eq!(ids, (0..100).collect::<Vec<_>>());
        for pair in records.windows(2) {
            assert!(pair[0].entropy <= pair[1].entropy);
        }
    }

    fn state_with_weak(weak: Vec<WeakSample>) -> CurationState {
        let (strong, _) = make_blobs(2, 3, 2, 10.0, 1.0, 40).unwrap();
        let n_total = strong.len() + weak.len();
        CurationState {
            strong,
            weak,
            n_total,
        }
    }

    fn record(id: usize, entropy: f64, map_label: usize) -> EntropyRecord {
        EntropyRecord {
            sample_id: id,
            entropy,
            map_label,
            map_prob: 0.9,
        }
    }

    #[test]
    fn recover_moves_below_threshold() {
        let weak = vec![
            WeakSample {
                id: 100,
                features: vec![0.0, 0.0],
                audit_label: 0,
            },
            WeakSample {
                id: 101,
                features: vec![1.0, 1.0],
                audit_label: 1,
            },
        ];
        let state = state_with_weak(weak);
        let records = vec![record(100, 1.2, 1), record(101, 1.6, 0)];
        let out = recover(state, &records, &RecoveryConfig { alpha: 1.5 }).unwrap();
        assert_eq!(out.weak.len(), 1);
        assert_eq!(out.weak[0].id, 101);
        let moved = out.strong.samples.iter().find(|s| s.id == 100).unwrap();
        assert_eq!(moved.label, 1); // MAP label, not the audit label
        assert_eq!(out.strong.len() + out.weak.len(), out.n_total);
    }

    #[test]
    fn recover_alpha_zero_no_match_is_identity() {
        let weak = vec![WeakSample {
            id: 100,
            features: vec![0.0, 0.0],
            audit_label: 0,
        }];
        let state = state_with_weak(weak);
        let records = vec![record(100, 0.4, 1)];
        let out = recover(state.clone(), &records, &RecoveryConfig { alpha: 0.0 }).unwrap();
        assert_eq!(out, state);
    }

    #[test]
    fn recover_boundary_inclusive() {
        let weak = vec![WeakSample {
            id: 100,
            features: vec![0.0, 0.0],
            audit_label: 0,
        }];
        let state = state_with_weak(weak);
        let records = vec![record(100, 1.5, 1)];
        let out = recover(state, &records, &RecoveryConfig { alpha: 1.5 }).unwrap();
        assert!(out.weak.is_empty());
    }

    #[test]
    fn recover_empty_weak_noop() {
        let state = state_with_weak(Vec::new());
        let out = recover(state.clone(), &[], &RecoveryConfig { alpha: 1.5 }).unwrap();
        assert_eq!(out, state);
    }

    #[test]
    fn recover_rejects_id_mismatch() {
        let weak = vec![WeakSample {
            id: 100,
            features: vec![0.0, 0.0],
            audit_label: 0,
        }];
        let state = state_with_weak(weak);
        let records = vec![record(999, 0.1, 0)];
        assert!(matches!(
            recover(state, &records, &RecoveryConfig { alpha: 1.5 }).unwrap_err(),
            Error::RecordCoverage
        ));
    }

    #[test]
    fn histogram_counts() {
        let h = entropy_histogram(&[], 5, 4);
        assert_eq!(h.counts, vec![0; 5]);
        assert_eq!(h.edges.len(), 6);

        // entropy exactly ln C lands in the last bin
        let rec = vec![record(0, 4.0_f64.ln(), 0)];
        let h = entropy_histogram(&rec, 5, 4);
        assert_eq!(h.counts, vec![0, 0, 0, 0, 1]);

        let many: Vec<EntropyRecord> = (0..1000)
            .map(|i| record(i, (i as f64 / 1000.0) * 4.0_f64.ln(), 0))
            .collect();
        let h = entropy_histogram(&many, 7, 4);
        assert_eq!(h.counts.iter().sum::<usize>(), 1000);
    }
}
