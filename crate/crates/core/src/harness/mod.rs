//! Experiment orchestration: configs, offline and offline-to-online runs,
//! evaluation and report aggregation.

mod agent;
pub mod config;
mod eval;
pub mod report;
mod run;

pub use agent::{Agent, StepMetrics};
pub use config::{AgentKind, RunConfig};
pub use eval::{eval_episode_seed, evaluate, EvalResult, EVAL_SEED_OFFSET};
pub use report::{aggregate_dir, MetricsRow, Report, ReportRow};
pub use run::{
    batch_split, eta, finetune_seed, load_or_generate, run_offline, run_offline_to_online,
    train_offline_seed, Evaluation, RunOutput, SeedRun, CHECKPOINT_FILE, ONLINE_SEED_OFFSET,
};
