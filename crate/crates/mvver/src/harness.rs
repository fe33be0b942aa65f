//! Experiment harness: evaluation metrics, repeated-trial aggregation
//! with Student-t confidence intervals, and machine-readable reports.

use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::classifier::{fit, predict, Model};
use crate::dataset::{
    inject_noise, load_csv, make_blobs, stratified_holdout, LabeledDataset, NoiseLedger, NoiseSpec,
};
use crate::error::{Error, Result};
use crate::refine::{run_refinement, train_final, AuditContext, IterationReport, RefineConfig};
use crate::rng::{self, stage};

/// Where the clean data comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    Csv {
        path: String,
    },
    Blobs {
        classes: usize,
        per_class: usize,
        dim: usize,
        separation: f64,
        spread: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Baselines {
    #[serde(default = "default_true")]
    pub naive: bool,
    #[serde(default = "default_true")]
    pub voting_only: bool,
}

fn default_true() -> bool {
    true
}

impl Default for Baselines {
    fn default() -> Self {
        Self {
            naive: true,
            voting_only: true,
        }
    }
}

const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default = "default_version")]
    pub version: u32,
    pub data: DataSource,
    #[serde(default = "default_ratios")]
    pub noise_ratios: Vec<f64>,
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    pub refine: RefineConfig,
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
    #[serde(default)]
    pub baselines: Baselines,
    #[serde(default)]
    pub seed: u64,
}

fn default_version() -> u32 {
    CONFIG_VERSION
}
fn default_ratios() -> Vec<f64> {
    vec![0.1, 0.2, 0.3, 0.4, 0.5]
}
fn default_repeats() -> usize {
    10
}
fn default_test_fraction() -> f64 {
    0.5
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(Error::InvalidConfig(format!(
                "unsupported config version {}",
                self.version
            )));
        }
        if self.repeats < 1 {
            return Err(Error::InvalidConfig("repeats must be >= 1".into()));
        }
        if !(0.0 < self.test_fraction && self.test_fraction < 1.0) {
            return Err(Error::InvalidConfig(
                "test_fraction must be in (0,1)".into(),
            ));
        }
        for &r in &self.noise_ratios {
            if !(0.0..1.0).contains(&r) {
                return Err(Error::InvalidConfig(format!(
                    "noise ratio must be in [0,1), got {r}"
                )));
            }
        }
        self.refine.validate()
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let cfg: Self = serde_json::from_slice(&fs::read(path)?)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Overall accuracy: fraction of test samples predicted correctly.
pub fn evaluate(model: &Model, test: &LabeledDataset) -> Result<f64> {
    if test.is_empty() {
        return Err(Error::EmptyTestSet);
    }
    let mut hit = 0usize;
    for s in &test.samples {
        if predict(model, &s.features)? == s.label {
            hit += 1;
        }
    }
    Ok(hit as f64 / test.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurationMetrics {
    /// Fraction of curated labels matching ground truth.
    pub purity: f64,
    /// Among entropy-recovered samples in the curated set, fraction with
    /// the correct label.
    pub recovery_precision: f64,
    /// Among samples that ever entered the weak set, fraction recovered
    /// with the correct label.
    pub recovery_recall: f64,
}

/// Quantify how well curation cleaned the labels, against the noise
/// ledger and the clean ground truth.
pub fn curation_metrics(
    _ledger: &NoiseLedger,
    clean_truth: &LabeledDataset,
    curated: &LabeledDataset,
    recovered_ids: &BTreeSet<usize>,
    ever_weak_ids: &BTreeSet<usize>,
) -> Result<CurationMetrics> {
    let truth = clean_truth.label_map();
    let mut hit = 0usize;
    let mut recovered_hit = 0usize;
    let mut recovered_seen = 0usize;
    for s in &curated.samples {
        let Some(&t) = truth.get(&s.id) else {
            return Err(Error::IdMismatch(format!(
                "curated id {} not present in ground truth",
                s.id
            )));
        };
        let correct = s.label == t;
        if correct {
            hit += 1;
        }
        if recovered_ids.contains(&s.id) {
            recovered_seen += 1;
            if correct {
                recovered_hit += 1;
            }
        }
    }
    let purity = hit as f64 / curated.len() as f64;
    let recovery_precision = if recovered_seen == 0 {
        1.0
    } else {
        recovered_hit as f64 / recovered_seen as f64
    };
    let recovery_recall = if ever_weak_ids.is_empty() {
        1.0
    } else {
        recovered_hit as f64 / ever_weak_ids.len() as f64
    };
    Ok(CurationMetrics {
        purity,
        recovery_precision,
        recovery_recall,
    })
}

/// Sample mean and Student-t 95% CI half-width (k-1 degrees of freedom).
pub fn aggregate(values: &[f64]) -> Result<(f64, f64)> {
    if values.len() < 2 {
        return Err(Error::TooFewValues);
    }
    let k = values.len() as f64;
    let mean = values.iter().sum::<f64>() / k;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (k - 1.0);
    let t = StudentsT::new(0.0, 1.0, k - 1.0)
        .expect("valid t distribution")
        .inverse_cdf(0.975);
    Ok((mean, t * var.sqrt() / k.sqrt()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub ratio: f64,
    pub repeat: usize,
    pub full_accuracy: f64,
    pub naive_accuracy: Option<f64>,
    pub voting_only_accuracy: Option<f64>,
    pub curation: CurationMetrics,
    pub iterations: Vec<IterationReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodStats {
    pub mean: f64,
    pub ci95_halfwidth: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioAggregate {
    pub ratio: f64,
    pub full: MethodStats,
    pub naive: Option<MethodStats>,
    pub voting_only: Option<MethodStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: ExperimentConfig,
    /// CI method used for the aggregates.
    pub ci_method: String,
    pub cells: Vec<CellReport>,
    pub aggregates: Vec<RatioAggregate>,
}

fn stats_for(values: &[f64]) -> MethodStats {
    if values.len() >= 2 {
        let (mean, hw) = aggregate(values).expect("len checked");
        MethodStats {
            mean,
            ci95_halfwidth: Some(hw),
        }
    } else {
        MethodStats {
            mean: values[0],
            ci95_halfwidth: None,
        }
    }
}

impl RunReport {
    /// Canonical JSON bytes; byte-identical for identical configs.
    pub fn to_json_bytes(&self) -> Result<Vec<u8>> {
        let mut bytes = serde_json::to_vec_pretty(self)?;
        bytes.push(b'\n');
        Ok(bytes)
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json_bytes()?)?;
        Ok(())
    }

    /// CSV table mirroring the per-ratio aggregate columns.
    pub fn save_csv_table(&self, path: &Path) -> Result<()> {
        let mut out = String::from(
            "ratio,naive_mean,naive_ci95,voting_only_mean,voting_only_ci95,full_mean,full_ci95\n",
        );
        let fmt = |s: &Option<MethodStats>| -> (String, String) {
            match s {
                Some(st) => (
                    format!("{:.6}", st.mean),
                    st.ci95_halfwidth
                        .map(|h| format!("{h:.6}"))
                        .unwrap_or_default(),
                ),
                None => (String::new(), String::new()),
            }
        };
        for agg in &self.aggregates {
            let (nm, nc) = fmt(&agg.naive);
            let (vm, vc) = fmt(&agg.voting_only);
            let full_ci = agg
                .full
                .ci95_halfwidth
                .map(|h| format!("{h:.6}"))
                .unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{},{:.6},{}\n",
                agg.ratio, nm, nc, vm, vc, agg.full.mean, full_ci
            ));
        }
        let mut f = fs::File::create(path)?;
        f.write_all(out.as_bytes())?;
        Ok(())
    }
}

fn load_clean_data(cfg: &ExperimentConfig) -> Result<LabeledDataset> {
    match &cfg.data {
        DataSource::Csv { path } => load_csv(Path::new(path)),
        DataSource::Blobs {
            classes,
            per_class,
            dim,
            separation,
            spread,
        } => {
            let (ds, _) = make_blobs(
                *classes,
                *per_class,
                *dim,
                *separation,
                *spread,
                rng::mix(cfg.seed, &[stage::DATA]),
            )?;
            Ok(ds)
        }
    }
}

/// Run the full protocol: for each (noise ratio, repeat), split the
/// clean data into train/test, inject noise into the training half only,
/// run refinement plus baselines, and evaluate on the clean test half.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunReport> {
    cfg.validate()?;
    let clean = load_clean_data(cfg)?;

    let mut cells = Vec::new();
    let mut aggregates = Vec::new();
    for (ri, &ratio) in cfg.noise_ratios.iter().enumerate() {
        let mut full_accs = Vec::with_capacity(cfg.repeats);
        let mut naive_accs = Vec::new();
        let mut voting_only_accs = Vec::new();
        for rep in 0..cfg.repeats {
            let cell = run_cell(cfg, &clean, ri, ratio, rep)
                .map_err(|e| Error::InvalidConfig(format!("ratio {ratio} repeat {rep}: {e}")))?;
            full_accs.push(cell.full_accuracy);
            if let Some(a) = cell.naive_accuracy {
                naive_accs.push(a);
            }
            if let Some(a) = cell.voting_only_accuracy {
                voting_only_accs.push(a);
            }
            cells.push(cell);
        }
        aggregates.push(RatioAggregate {
            ratio,
            full: stats_for(&full_accs),
            naive: (!naive_accs.is_empty()).then(|| stats_for(&naive_accs)),
            voting_only: (!voting_only_accs.is_empty()).then(|| stats_for(&voting_only_accs)),
        });
    }

    Ok(RunReport {
        config: cfg.clone(),
        ci_method: "student-t".to_string(),
        cells,
        aggregates,
    })
}

fn run_cell(
    cfg: &ExperimentConfig,
    clean: &LabeledDataset,
    ratio_index: usize,
    ratio: f64,
    repeat: usize,
) -> Result<CellReport> {
    let cell_tag = [ratio_index as u64, repeat as u64];

    let split_seed = rng::mix(cfg.seed, &[stage::SPLIT, cell_tag[0], cell_tag[1]]);
    let (train_clean, test) = stratified_holdout(clean, cfg.test_fraction, split_seed)?;

    let noise_seed = rng::mix(cfg.seed, &[stage::NOISE, cell_tag[0], cell_tag[1]]);
    let (train_noisy, ledger) = inject_noise(
        &train_clean,
        &NoiseSpec {
            ratio,
            seed: noise_seed,
        },
    )?;

    let mut refine_cfg = cfg.refine.clone();
    refine_cfg.seed = rng::mix(cfg.seed, &[stage::VIEW, cell_tag[0], cell_tag[1]]);

    let audit = AuditContext {
        truth: &train_clean,
        test: Some(&test),
    };
    let outcome = run_refinement(&train_noisy, &refine_cfg, Some(&audit))?;

    let final_seed = rng::mix(cfg.seed, &[stage::FINAL, cell_tag[0], cell_tag[1]]);
    let final_model = train_final(
        &outcome.curated,
        &refine_cfg.final_classifier.with_seed(final_seed),
    )?;
    let full_accuracy = evaluate(&final_model, &test)?;

    let naive_accuracy = if cfg.baselines.naive {
        let naive_seed = rng::mix(cfg.seed, &[stage::NAIVE, cell_tag[0], cell_tag[1]]);
        let naive_model = fit(&train_noisy, &refine_cfg.final_classifier.with_seed(naive_seed))?;
        Some(evaluate(&naive_model, &test)?)
    } else {
        None
    };

    let voting_only_accuracy = if cfg.baselines.voting_only {
        // same seeds as the full run, recovery disabled
        let mut vo_cfg = refine_cfg.clone();
        vo_cfg.alpha = -1.0;
        let vo_outcome = run_refinement(&train_noisy, &vo_cfg, None)?;
        let vo_model = train_final(
            &vo_outcome.curated,
            &vo_cfg.final_classifier.with_seed(final_seed),
        )?;
        Some(evaluate(&vo_model, &test)?)
    } else {
        None
    };

    let curation = curation_metrics(
        &ledger,
        &train_clean,
        &outcome.curated,
        &outcome.recovered_ids,
        &outcome.ever_weak_ids,
    )?;

    Ok(CellReport {
        ratio,
        repeat,
        full_accuracy,
        naive_accuracy,
        voting_only_accuracy,
        curation,
        iterations: outcome.reports,
    })
}

/// Alpha sweep: run the refinement at each candidate threshold and
/// report final-model accuracy on the supplied clean validation set.
pub fn sweep_alpha(
    noisy_train: &LabeledDataset,
    base: &RefineConfig,
    alphas: &[f64],
    validation: &LabeledDataset,
) -> Result<Vec<(f64, f64)>> {
    let mut out = Vec::with_capacity(alphas.len());
    for &alpha in alphas {
        let mut cfg = base.clone();
        cfg.alpha = alpha;
        let outcome = run_refinement(noisy_train, &cfg, None)?;
        let model = train_final(&outcome.curated, &cfg.final_classifier)?;
        out.push((alpha, evaluate(&model, validation)?));
    }
    Ok(out)
}
