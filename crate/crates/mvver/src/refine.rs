//! Iterative refinement: M rounds of vote-partition-recover, each round
//! consuming the previous strong set, with the weak set persisting and
//! re-scanned for recovery every round.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::classifier::{fit, ClassifierConfig, Model};
use crate::dataset::LabeledDataset;
use crate::error::{Error, Result};
use crate::rng::{self, stage};
use crate::voting::{partition, train_views, vote, StrongLabel, WeakSample};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefineConfig {
    /// Number of refinement iterations (M).
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    /// Number of disjoint views (n).
    #[serde(default = "default_views")]
    pub views: usize,
    /// Entropy recovery threshold in nats; negative disables recovery.
    pub alpha: f64,
    #[serde(default)]
    pub strong_label: StrongLabel,
    pub view_classifier: ClassifierConfig,
    pub strong_classifier: ClassifierConfig,
    pub final_classifier: ClassifierConfig,
    #[serde(default)]
    pub seed: u64,
}

fn default_iterations() -> usize {
    3
}
fn default_views() -> usize {
    2
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self {
            iterations: default_iterations(),
            views: default_views(),
            alpha: 1.5,
            strong_label: StrongLabel::Voted,
            view_classifier: ClassifierConfig::default(),
            strong_classifier: ClassifierConfig::default(),
            final_classifier: ClassifierConfig::default(),
            seed: 0,
        }
    }
}

impl RefineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations < 1 {
            return Err(Error::InvalidConfig("iterations must be >= 1".into()));
        }
        if self.views < 2 {
            return Err(Error::TooFewViews(self.views));
        }
        self.view_classifier.validate()?;
        self.strong_classifier.validate()?;
        self.final_classifier.validate()?;
        Ok(())
    }
}

/// Size bookkeeping and optional audit metrics for one iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationReport {
    pub iteration: usize,
    pub input_size: usize,
    pub strong_pre_recovery: usize,
    pub recovered: usize,
    pub strong_size: usize,
    pub weak_size: usize,
    /// Fraction of strong-set labels matching ground truth (audit only).
    pub strong_purity: Option<f64>,
    /// Strong-model accuracy on the supplied clean test set (audit only).
    pub holdout_accuracy: Option<f64>,
}

/// Ground-truth context for per-iteration audit metrics. Never consulted
/// by the algorithm itself.
pub struct AuditContext<'a> {
    /// Dataset with clean labels, covering at least all refined ids.
    pub truth: &'a LabeledDataset,
    /// Clean holdout for per-iteration strong-model accuracy.
    pub test: Option<&'a LabeledDataset>,
}

#[derive(Debug, Clone)]
pub struct RefinementOutcome {
    /// The curated strong set after M iterations.
    pub curated: LabeledDataset,
    /// Samples still in the weak set at the end.
    pub weak: Vec<WeakSample>,
    pub reports: Vec<IterationReport>,
    /// Ids that entered the final curated set via entropy recovery.
    pub recovered_ids: BTreeSet<usize>,
    /// Ids that ever sat in the weak set during the run.
    pub ever_weak_ids: BTreeSet<usize>,
}

fn purity_against(truth: &LabeledDataset, curated: &LabeledDataset) -> Option<f64> {
    let truth_labels = truth.label_map();
    let mut hit = 0usize;
    for s in &curated.samples {
        match truth_labels.get(&s.id) {
            Some(&l) if l == s.label => hit += 1,
            Some(_) => {}
            None => return None,
        }
    }
    Some(hit as f64 / curated.len() as f64)
}

fn holdout_accuracy(model: &Model, test: &LabeledDataset) -> Result<f64> {
    crate::harness::evaluate(model, test)
}

/// Run M iterations of split/train/vote/partition followed by entropy
/// recovery over the full accumulated weak set. Fully deterministic
/// under `cfg.seed`.
pub fn run_refinement(
    ds: &LabeledDataset,
    cfg: &RefineConfig,
    audit: Option<&AuditContext>,
) -> Result<RefinementOutcome> {
    cfg.validate()?;

    let mut current = ds.clone();
    let mut carried_weak: Vec<WeakSample> = Vec::new();
    let mut reports = Vec::with_capacity(cfg.iterations);
    let mut recovered_ids: BTreeSet<usize> = BTreeSet::new();
    let mut ever_weak_ids: BTreeSet<usize> = BTreeSet::new();

    for m in 1..=cfg.iterations {
        let input_size = current.len();

        let view_seed = rng::mix(cfg.seed, &[m as u64, stage::VIEW]);
        let models = train_views(&current, cfg.views, &cfg.view_classifier, view_seed)
            .map_err(|e| e.at_iteration(m))?;
        let table = vote(&models, &current).map_err(|e| e.at_iteration(m))?;
        let state = partition(&current, &table, carried_weak, cfg.strong_label)
            .map_err(|e| e.at_iteration(m))?;

        let min_strong = cfg.views * current.num_classes;
        if state.strong.len() < min_strong {
            return Err(Error::StrongSetTooSmall {
                iteration: m,
                size: state.strong.len(),
                min: min_strong,
            });
        }
        for w in &state.weak {
            ever_weak_ids.insert(w.id);
        }
        let strong_pre_recovery = state.strong.len();

        let strong_seed = rng::mix(cfg.seed, &[m as u64, stage::STRONG]);
        let strong_model = fit(&state.strong, &cfg.strong_classifier.with_seed(strong_seed))
            .map_err(|e| e.at_iteration(m))?;

        let records = crate::entropy::rank_weak(&strong_model, &state.weak)
            .map_err(|e| e.at_iteration(m))?;
        let state = crate::entropy::recover(
            state,
            &records,
            &crate::entropy::RecoveryConfig { alpha: cfg.alpha },
        )
        .map_err(|e| e.at_iteration(m))?;
        let recovered = state.strong.len() - strong_pre_recovery;
        for r in records.iter().filter(|r| r.entropy <= cfg.alpha) {
            recovered_ids.insert(r.sample_id);
        }

        let strong_purity = audit.and_then(|a| purity_against(a.truth, &state.strong));
        let holdout = match audit.and_then(|a| a.test) {
            Some(test) => Some(holdout_accuracy(&strong_model, test).map_err(|e| e.at_iteration(m))?),
            None => None,
        };

        reports.push(IterationReport {
            iteration: m,
            input_size,
            strong_pre_recovery,
            recovered,
            strong_size: state.strong.len(),
            weak_size: state.weak.len(),
            strong_purity,
            holdout_accuracy: holdout,
        });

        carried_weak = state.weak;
        current = state.strong;
    }

    // an id counts as recovered only if recovery was its final route in
    let final_ids: BTreeSet<usize> = current.ids().into_iter().collect();
    recovered_ids.retain(|id| final_ids.contains(id));

    Ok(RefinementOutcome {
        curated: current,
        weak: carried_weak,
        reports,
        recovered_ids,
        ever_weak_ids,
    })
}

/// Train the pipeline's final model on the curated dataset.
pub fn train_final(curated: &LabeledDataset, cfg: &ClassifierConfig) -> Result<Model> {
    if curated.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let counts = curated.class_counts();
    if let Some(missing) = counts.iter().position(|&c| c == 0) {
        return Err(Error::MissingClass(missing));
    }
    fit(curated, cfg)
}
