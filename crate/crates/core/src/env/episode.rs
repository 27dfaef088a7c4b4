use serde::{Deserialize, Serialize};

use super::clock::{LatencyModel, SimClock};
use super::task::{ActionIndex, ScreenId, TaskSpec};
use crate::error::{Error, Result};

/// State of one running episode.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnvState {
    pub task_id: u64,
    pub current_screen: ScreenId,
    pub step_index: usize,
    pub history: Vec<ActionIndex>,
    pub done: bool,
    pub succeeded: bool,
}

/// Starts an episode at the task's start screen, charging `init_cost`.
pub fn reset(task: &TaskSpec, latency: &LatencyModel, clock: &mut SimClock) -> EnvState {
    clock.charge_env(latency.init_cost);
    EnvState {
        task_id: task.task_id,
        current_screen: task.start_screen,
        step_index: 0,
        history: Vec::new(),
        done: false,
        succeeded: false,
    }
}

/// Executes `action`, charging `step_cost` (and `recovery_cost` when the
/// episode ends unsuccessfully).
pub fn step(
    task: &TaskSpec,
    state: &mut EnvState,
    action: ActionIndex,
    latency: &LatencyModel,
    clock: &mut SimClock,
) -> Result<()> {
    if state.done {
        return Err(Error::EpisodeFinished);
    }
    let actions = task.actions();
    if action >= actions {
        return Err(Error::InvalidAction { action, actions });
    }
    if action == task.graph.terminal_action() {
        state.done = true;
        state.succeeded = state.current_screen == task.goal_screen;
    } else if let Some(next) = task.graph.successor(state.current_screen, action) {
        state.current_screen = next;
    }
    state.history.push(action);
    state.step_index += 1;
    if state.step_index >= task.max_steps {
        state.done = true;
    }
    clock.charge_interaction(latency.step_cost);
    if state.done && !state.succeeded {
        clock.charge_env(latency.recovery_cost);
    }
    Ok(())
}

/// Exact probability that a Markov policy succeeds on `task`, by dynamic
/// programming over (step, screen). `probs(screen)` gives the action
/// distribution on each screen.
pub fn success_probability<F>(task: &TaskSpec, mut probs: F) -> f64
where
    F: FnMut(ScreenId) -> Vec<f64>,
{
    let n = task.graph.screens();
    let terminal = task.graph.terminal_action();
    let table: Vec<Vec<f64>> = (0..n).map(&mut probs).collect();
    let mut mass = vec![0.0; n];
    mass[task.start_screen] = 1.0;
    let mut success = 0.0;
    for _ in 0..task.max_steps {
        success += mass[task.goal_screen] * table[task.goal_screen][terminal];
        let mut next = vec![0.0; n];
        for (s, &m) in mass.iter().enumerate() {
            if m == 0.0 {
                continue;
            }
            for (a, &p) in table[s].iter().enumerate() {
                if let Some(t) = task.graph.successor(s, a) {
                    next[t] += m * p;
                }
            }
        }
        mass = next;
    }
    success
}
