//! Trajectories, the rule-based outcome verifier, and parallel rollouts.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::clock::{LatencyModel, SimClock};
use super::episode::{reset, step};
use super::task::{ActionIndex, ScreenId, TaskSpec};
use crate::error::{Error, Result};
use crate::model::{sample_index, FeatureMap, PolicyParams};
use crate::par::Workers;
use crate::rng::{self, domain};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    /// Screen on which the action was taken.
    pub screen: ScreenId,
    pub action: ActionIndex,
    /// Log-probability under the sampling policy.
    pub old_logprob: f64,
    /// Process reward, filled in after the rollout.
    pub r_p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub task_id: u64,
    pub steps: Vec<StepRecord>,
    /// Outcome reward, filled in after the rollout.
    pub r_o: f64,
    /// Simulated time charged while producing this trajectory.
    pub sim_times: SimClock,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

/// Rule-based outcome reward: 1 iff the terminal action was executed on the
/// goal screen within the step budget.
///
/// The trajectory is replayed against the task graph, so a record whose
/// screens disagree with the graph cannot earn a reward.
pub fn outcome_verify(trajectory: &Trajectory, task: &TaskSpec) -> Result<f64> {
    let terminal = task.graph.terminal_action();
    let ended_by_terminal = trajectory
        .steps
        .last()
        .is_some_and(|s| s.action == terminal);
    let complete = ended_by_terminal || trajectory.steps.len() >= task.max_steps;
    if trajectory.task_id != task.task_id || !complete || trajectory.steps.is_empty() {
        return Err(Error::IncompleteTrajectory {
            task_id: trajectory.task_id,
        });
    }
    if trajectory.steps.len() > task.max_steps {
        return Ok(0.0);
    }
    let mut screen = task.start_screen;
    for (i, s) in trajectory.steps.iter().enumerate() {
        if s.action == terminal {
            let last = i + 1 == trajectory.steps.len();
            return Ok(if last && screen == task.goal_screen {
                1.0
            } else {
                0.0
            });
        }
        screen = task
            .graph
            .successor(screen, s.action)
            .ok_or(Error::InvalidAction {
                action: s.action,
                actions: task.actions(),
            })?;
    }
    Ok(0.0)
}

/// Shared read-only inputs of a rollout phase.
#[derive(Debug, Clone, Copy)]
pub struct RolloutContext<'a> {
    pub features: &'a FeatureMap,
    pub latency: &'a LatencyModel,
    pub temperature: f64,
    pub workers: &'a Workers,
}

/// Runs one episode per task with the policy.
///
/// Trajectory `i` draws from its own stream `(rollout_seed, i)` and charges
/// its own clock shard; shards are merged into `clock` in task order, so the
/// output is identical for any worker count.
pub fn pool_rollout(
    tasks: &[TaskSpec],
    policy: &PolicyParams,
    ctx: RolloutContext<'_>,
    clock: &mut SimClock,
    rollout_seed: u64,
) -> Result<Vec<Trajectory>> {
    if tasks.is_empty() {
        return Err(Error::config(
            "rollout batch must contain at least one task",
        ));
    }
    policy.validate()?;
    let results = ctx.workers.map_indexed(tasks.len(), |i| {
        run_episode(&tasks[i], policy, ctx, rollout_seed, i as u64)
    });
    let trajectories = results.into_iter().collect::<Result<Vec<_>>>()?;
    for t in &trajectories {
        clock.absorb(&t.sim_times);
    }
    Ok(trajectories)
}

fn run_episode(
    task: &TaskSpec,
    policy: &PolicyParams,
    ctx: RolloutContext<'_>,
    rollout_seed: u64,
    index: u64,
) -> Result<Trajectory> {
    let mut rng = rng::stream(rollout_seed, &[domain::ROLLOUT, index]);
    let mut shard = SimClock::new();
    let mut state = reset(task, ctx.latency, &mut shard);
    let mut steps = Vec::with_capacity(task.max_steps);
    while !state.done {
        let features = ctx.features.encode(task.task_id, state.current_screen)?;
        let probs = policy.action_distribution(features.view(), ctx.temperature)?;
        let action = sample_index(&probs, &mut rng)?;
        shard.charge_samples(1, ctx.latency.inference_cost);
        steps.push(StepRecord {
            screen: state.current_screen,
            action,
            old_logprob: probs[action].ln(),
            r_p: 0.0,
        });
        step(task, &mut state, action, ctx.latency, &mut shard)?;
    }
    Ok(Trajectory {
        task_id: task.task_id,
        steps,
        r_o: if state.succeeded { 1.0 } else { 0.0 },
        sim_times: shard,
    })
}

/// Writes one JSON object per trajectory per line.
pub fn write_jsonl<W: Write>(mut out: W, trajectories: &[Trajectory]) -> std::io::Result<()> {
    for t in trajectories {
        serde_json::to_writer(&mut out, t)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_jsonl<R: BufRead>(input: R) -> std::io::Result<Vec<Trajectory>> {
    input
        .lines()
        .filter(|l| l.as_ref().map_or(true, |s| !s.trim().is_empty()))
        .map(|l| l.and_then(|s| serde_json::from_str(&s).map_err(std::io::Error::from)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::task::ScreenGraph;
    use crate::env::{generate_task_pool, success_probability, PoolParams};

    fn line_task() -> TaskSpec {
        let next = vec![1, 0, 0, 0, 2, 0, 1, 1, 2, 0, 2, 2];
        TaskSpec {
            task_id: 0,
            family: 0,
            graph: ScreenGraph::from_successors(3, 4, 3, next).unwrap(),
            start_screen: 0,
            goal_screen: 2,
            max_steps: 5,
            seed: 0,
        }
    }

    fn traj(task_id: u64, screens_actions: &[(usize, usize)]) -> Trajectory {
        Trajectory {
            task_id,
            steps: screens_actions
                .iter()
                .map(|&(screen, action)| StepRecord {
                    screen,
                    action,
                    old_logprob: 0.0,
                    r_p: 0.0,
                })
                .collect(),
            r_o: 0.0,
            sim_times: SimClock::new(),
        }
    }

    #[test]
    fn verifier_rules() {
        let task = line_task();
        assert_eq!(
            outcome_verify(&traj(0, &[(0, 0), (1, 0), (2, 3)]), &task).unwrap(),
            1.0
        );
        // budget exhausted without terminal
        assert_eq!(outcome_verify(&traj(0, &[(0, 2); 5]), &task).unwrap(), 0.0);
        // terminal on the wrong screen
        assert_eq!(
            outcome_verify(&traj(0, &[(0, 0), (1, 3)]), &task).unwrap(),
            0.0
        );
        // still running
        assert!(matches!(
            outcome_verify(&traj(0, &[(0, 0)]), &task),
            Err(Error::IncompleteTrajectory { .. })
        ));
    }

    #[test]
    fn rollout_completes_every_task_and_is_worker_independent() {
        let pool = generate_task_pool(3, 8, &PoolParams::default()).unwrap();
        let features = FeatureMap::one_hot(&pool);
        let policy = PolicyParams::zeros(6, features.dim());
        let latency = LatencyModel::default();
        let run = |workers: Workers| {
            let mut clock = SimClock::new();
            let ctx = RolloutContext {
                features: &features,
                latency: &latency,
                temperature: 1.0,
                workers: &workers,
            };
            let t = pool_rollout(&pool, &policy, ctx, &mut clock, 42).unwrap();
            (t, clock)
        };
        let (seq, c1) = run(Workers::sequential());
        let (par, c8) = run(Workers::new(8));
        assert_eq!(seq.len(), 8);
        assert_eq!(
            serde_json::to_string(&seq).unwrap(),
            serde_json::to_string(&par).unwrap()
        );
        assert_eq!(c1, c8);
        assert!(c1.is_conserved());
        let steps: usize = seq.iter().map(Trajectory::len).sum();
        assert_eq!(c1.interaction_count as usize, steps);
        assert_eq!(c1.sampled_action_count as usize, steps);
        for (t, task) in seq.iter().zip(&pool) {
            assert!(!t.is_empty() && t.len() <= task.max_steps);
            assert_eq!(outcome_verify(t, task).unwrap(), t.r_o);
        }
    }

    #[test]
    fn non_finite_policy_rejected() {
        let pool = generate_task_pool(3, 2, &PoolParams::default()).unwrap();
        let features = FeatureMap::one_hot(&pool);
        let mut policy = PolicyParams::zeros(6, features.dim());
        policy.weights[[0, 0]] = f64::INFINITY;
        let workers = Workers::sequential();
        let latency = LatencyModel::default();
        let ctx = RolloutContext {
            features: &features,
            latency: &latency,
            temperature: 1.0,
            workers: &workers,
        };
        assert!(pool_rollout(&pool, &policy, ctx, &mut SimClock::new(), 1).is_err());
    }

    #[test]
    fn uniform_policy_on_trivial_task_matches_geometric_series() {
        // every navigation action self-loops and the start is the goal
        let (screens, actions, max_steps) = (2, 6, 25);
        let next = vec![0, 0, 0, 0, 0, 0, 1, 1, 1, 1, 1, 1];
        let task = TaskSpec {
            task_id: 0,
            family: 0,
            graph: ScreenGraph::from_successors(screens, actions, 5, next).unwrap(),
            start_screen: 0,
            goal_screen: 0,
            max_steps,
            seed: 0,
        };
        let exact = 1.0 - (5.0f64 / 6.0).powi(max_steps as i32);
        let dp = success_probability(&task, |_| vec![1.0 / 6.0; 6]);
        assert!((dp - exact).abs() < 1e-12);

        let tasks = vec![task; 1000];
        let features = FeatureMap::one_hot(&tasks);
        let policy = PolicyParams::zeros(actions, features.dim());
        let workers = Workers::sequential();
        let latency = LatencyModel::default();
        let ctx = RolloutContext {
            features: &features,
            latency: &latency,
            temperature: 1.0,
            workers: &workers,
        };
        let out = pool_rollout(&tasks, &policy, ctx, &mut SimClock::new(), 5).unwrap();
        let rate = out.iter().map(|t| t.r_o).sum::<f64>() / 1000.0;
        let se = (exact * (1.0 - exact) / 1000.0).sqrt();
        assert!(
            (rate - exact).abs() < 4.0 * se,
            "rate {rate} vs exact {exact}"
        );
    }

    #[test]
    fn jsonl_has_the_documented_fields() {
        let t = traj(3, &[(0, 1)]);
        let mut buf = Vec::new();
        write_jsonl(&mut buf, &[t.clone(), t.clone()]).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().count(), 2);
        let v: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        for key in ["task_id", "steps", "r_o", "sim_times"] {
            assert!(v.get(key).is_some(), "{key}");
        }
        for key in ["screen", "action", "old_logprob", "r_p"] {
            assert!(v["steps"][0].get(key).is_some(), "{key}");
        }
        assert_eq!(read_jsonl(buf.as_slice()).unwrap(), vec![t.clone(), t]);
    }
}
