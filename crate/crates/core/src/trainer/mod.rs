//! Training loops for the multi-action actor-critic method and the
//! single-action PPO and GRPO baselines, all charged to one simulated clock.

mod actor;
mod checkpoint;
mod compare;
mod config;
mod eval;
mod iteration;
mod metrics;
mod state;

pub use actor::{actor_update, clipped_objective, ActorSample, ActorStats};
pub use checkpoint::{load_checkpoint, save_checkpoint, TrainerCheckpoint, POLICY_FILE, PRM_FILE};
pub use compare::{
    compare_methods, run_to_budget, time_to_target, ComparisonReport, EfficiencyRatio, MethodRun,
    MethodSummary, RunCurve,
};
pub use config::{Method, PrmConfig, TrainConfig};
pub use eval::evaluate;
pub use iteration::{
    run_iteration, run_iteration_android_coach, run_iteration_grpo, run_iteration_ppo,
    select_batch, BufferEntry, IterationBatch, IterationReport, Phase,
};
pub use metrics::{
    read_metrics_csv, write_metrics_csv, write_metrics_header, write_metrics_row,
    TrainerMetricsRow, METRICS_COLUMNS, METRICS_SCHEMA_VERSION,
};
pub use state::{fit_prm, prior_policy, split_by_family, PrmSummary, TrainerState};
