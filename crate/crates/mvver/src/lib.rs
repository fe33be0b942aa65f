//! Classifier-agnostic cleaning of training datasets with incorrect
//! labels, by iterative multi-view voting and entropy ranking.
//!
//! Each refinement iteration splits the current dataset into disjoint
//! views, trains one classifier per view, and keeps only samples whose
//! predicted labels are unanimous across views (the strong set). A model
//! trained on the strong set then scores the rejected samples by
//! prediction entropy; low-entropy samples are recovered into the strong
//! set under the model's most likely label. After M iterations the
//! curated strong set trains the final model.
//!
//! The crate ships two built-in classifiers (multinomial logistic
//! regression and a one-hidden-layer MLP, both trained with mini-batch
//! Adam on cross-entropy), synthetic blob generation, class-balanced
//! noise injection with an audit ledger, and an experiment harness that
//! reports mean accuracy with 95% confidence intervals over repeated
//! noise draws.

pub mod classifier;
pub mod dataset;
pub mod entropy;
pub mod error;
pub mod harness;
pub mod refine;
pub mod rng;
pub mod voting;

pub use classifier::{
    batch_grad, batch_loss, cross_entropy, fit, predict, predict_proba, softmax,
    ClassifierConfig, ClassifierKind, Model, ProbVector,
};
pub use dataset::{
    inject_noise, load_csv, make_blobs, save_csv, stratified_holdout, stratified_split,
    ClassLabel, LabeledDataset, NoiseLedger, NoiseSpec, Sample,
};
pub use entropy::{
    entropy_histogram, prediction_entropy, rank_weak, recover, EntropyRecord, Histogram,
    RecoveryConfig,
};
pub use error::{Error, Result};
pub use harness::{
    aggregate, curation_metrics, evaluate, run_experiment, sweep_alpha, Baselines, CellReport,
    CurationMetrics, DataSource, ExperimentConfig, MethodStats, RatioAggregate, RunReport,
};
pub use refine::{
    run_refinement, train_final, AuditContext, IterationReport, RefineConfig, RefinementOutcome,
};
pub use voting::{
    partition, train_views, vote, CurationState, StrongLabel, VoteRow, VoteTable, WeakSample,
};
