//! Experiment driver: configuration, the train loop, evaluation,
//! ablations and run export.

mod ablation;
mod config;
mod export;
mod metrics;
mod oracle;
mod train;

use thiserror::Error;

pub use ablation::{
    ablation_explore, ablation_gen_vs_disc, write_gen_disc_csv, ExploreComparison, GenDiscRow,
    EXPERT_NOISE, GEN_DISC_FIT_STEPS,
};
pub use config::{ExperimentConfig, ExplorerKind, ModelKind, OUTPUT_DIR_VAR, SEED_VAR};
pub use export::{export_graph, export_run, ExportedFiles};
pub use metrics::{
    read_metrics_csv, write_metrics_csv, write_timing_csv, MetricsRecord, METRICS_VERSION_LINE,
};
pub use oracle::{env_goal, exhaustive_dataset, expert_dataset, oracle_plan, true_abstract_graph};
pub use train::{ci_half_width, evaluate, train, train_seed, Evaluation, Learner, SeedRun};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Env(#[from] crate::craft::ConfigError),
    #[error(transparent)]
    Model(#[from] crate::worldmodel::ModelError),
    #[error(transparent)]
    Domain(#[from] crate::domain::DomainError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}
