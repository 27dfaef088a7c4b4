use crate::env::{reset, step, LatencyModel, SimClock, TaskSpec};
use crate::error::Result;
use crate::model::{FeatureMap, PolicyParams};

/// Greedy success rate on `tasks`. Runs on a private clock, so nothing is
/// charged to training time. Greedy episodes are deterministic, so repeated
/// episodes only matter for API symmetry with sampled evaluation. A policy
/// with non-finite weights is a numeric failure.
pub fn evaluate(
    policy: &PolicyParams,
    tasks: &[TaskSpec],
    features: &FeatureMap,
    episodes_per_task: usize,
) -> Result<f64> {
    policy.validate()?;
    if tasks.is_empty() || episodes_per_task == 0 {
        return Ok(0.0);
    }
    let latency = LatencyModel::default();
    let mut clock = SimClock::new();
    let mut successes = 0usize;
    for task in tasks {
        let mut state = reset(task, &latency, &mut clock);
        while !state.done {
            let f = features.encode(task.task_id, state.current_screen)?;
            step(
                task,
                &mut state,
                policy.greedy_action(f.view()),
                &latency,
                &mut clock,
            )?;
        }
        if state.succeeded {
            successes += episodes_per_task;
        }
    }
    Ok(successes as f64 / (tasks.len() * episodes_per_task) as f64)
}
