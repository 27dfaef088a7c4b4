//! Synthetic menu-navigation environment with a simulated latency clock.

mod clock;
mod episode;
mod rollout;
mod task;

pub use clock::{LatencyModel, SimClock};
pub use episode::{reset, step, success_probability, EnvState};
pub use rollout::{
    outcome_verify, pool_rollout, read_jsonl, write_jsonl, RolloutContext, StepRecord, Trajectory,
};
pub use task::{generate_task_pool, ActionIndex, PoolParams, ScreenGraph, ScreenId, TaskSpec};
