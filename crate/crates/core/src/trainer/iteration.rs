//! One training iteration per method.

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::actor::{actor_update, ActorSample, ActorStats};
use super::config::{Method, TrainConfig};
use super::eval::evaluate;
use super::metrics::TrainerMetricsRow;
use super::state::TrainerState;
use crate::advantage::{
    acloo, grpo_normalize, mc_value_advantage, AdvantageRecord, EstimatorTag, QGroup,
};
use crate::env::{outcome_verify, pool_rollout, RolloutContext, SimClock, TaskSpec, Trajectory};
use crate::error::{Error, Result};
use crate::model::{apply_update, sample_index, CriticParams, OptimizerState};
use crate::rewards::{compute_returns, prm_score, RewardWeights};
use crate::rng::{self, domain};

/// One executed step with its return target.
#[derive(Debug, Clone, PartialEq)]
pub struct BufferEntry {
    pub task_id: u64,
    pub screen: usize,
    pub features: Array1<f64>,
    pub action: usize,
    pub old_logprob: f64,
    pub target: f64,
}

/// Everything one iteration produced, kept for inspection and tests.
#[derive(Debug, Clone, Default)]
pub struct IterationBatch {
    pub trajectories: Vec<Trajectory>,
    /// Return targets per trajectory step.
    pub returns: Vec<Vec<f64>>,
    pub groups: Vec<QGroup>,
    pub records: Vec<AdvantageRecord>,
    /// Critic version at the end of the critic phase.
    pub critic_version_updated: u64,
    /// Critic version that scored the resampled actions.
    pub critic_version_scored: u64,
    /// Clock after each phase, in order.
    pub phase_clocks: Vec<(Phase, SimClock)>,
    pub actor: ActorStats,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Rollout,
    Returns,
    Critic,
    Actor,
}

#[derive(Debug, Clone)]
pub struct IterationReport {
    pub row: TrainerMetricsRow,
    pub batch: IterationBatch,
}

/// Draws `n` tasks: a seeded permutation of the pool, repeated when `n`
/// exceeds the pool size.
pub fn select_batch(tasks: &[TaskSpec], n: usize, seed: u64) -> Vec<TaskSpec> {
    let mut rng = rng::stream(seed, &[domain::BATCH]);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let mut idx: Vec<usize> = (0..tasks.len()).collect();
        idx.shuffle(&mut rng);
        out.extend(
            idx.into_iter()
                .take(n - out.len())
                .map(|i| tasks[i].clone()),
        );
    }
    out
}

/// Phases 1 and 2: roll out `batch`, then attach process rewards, outcome
/// rewards and return targets.
pub(crate) fn rollout_and_score(
    state: &TrainerState,
    batch: &[TaskSpec],
    weights: &RewardWeights,
    clock: &mut SimClock,
    seed: u64,
) -> Result<(Vec<Trajectory>, Vec<Vec<BufferEntry>>)> {
    let ctx = RolloutContext {
        features: &state.features,
        latency: &state.latency,
        temperature: state.config.temperature,
        workers: &state.workers,
    };
    let mut trajectories = pool_rollout(
        batch,
        &state.policy,
        ctx,
        clock,
        rng::derive_seed(seed, &[domain::ROLLOUT]),
    )?;
    let prm = state.prm.as_ref().filter(|_| weights.omega_p > 0.0);
    let mut buffers = Vec::with_capacity(trajectories.len());
    for (i, (traj, task)) in trajectories.iter_mut().zip(batch).enumerate() {
        traj.r_o = outcome_verify(traj, task)?;
        let mut feats = Vec::with_capacity(traj.len());
        for (t, step) in traj.steps.iter_mut().enumerate() {
            let f = state.features.encode(task.task_id, step.screen)?;
            if let Some(prm) = prm {
                let noise = rng::derive_seed(seed, &[domain::PRM_NOISE, i as u64, t as u64]);
                step.r_p = prm_score(prm, f.view(), step.action, weights, noise)?;
            }
            feats.push(f);
        }
        let r_p: Vec<f64> = traj.steps.iter().map(|s| s.r_p).collect();
        let returns = compute_returns(&r_p, traj.r_o, weights);
        buffers.push(
            traj.steps
                .iter()
                .zip(feats)
                .zip(returns)
                .map(|((s, features), target)| BufferEntry {
                    task_id: task.task_id,
                    screen: s.screen,
                    features,
                    action: s.action,
                    old_logprob: s.old_logprob,
                    target,
                })
                .collect(),
        );
    }
    Ok((trajectories, buffers))
}

fn minibatches(n: usize, batch_size: usize, seed: u64, epoch: usize) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    if batch_size == 0 || batch_size >= n {
        return vec![order];
    }
    order.shuffle(&mut rng::stream(seed, &[domain::BATCH, 1, epoch as u64]));
    order.chunks(batch_size).map(<[usize]>::to_vec).collect()
}

/// Clipped-loss critic passes over the buffer. Returns the mean loss seen in
/// the first epoch, each minibatch evaluated before its own step.
pub(crate) fn critic_pass(
    critic: &mut CriticParams,
    buffer: &[BufferEntry],
    cfg: &TrainConfig,
    opt: &mut OptimizerState,
    clock: &mut SimClock,
    update_cost: f64,
    seed: u64,
) -> Result<f64> {
    let q_old = buffer
        .iter()
        .map(|e| critic.q_value(e.features.view(), e.action))
        .collect::<Result<Vec<_>>>()?;
    let mut first_loss = 0.0;
    for epoch in 0..cfg.critic_epochs {
        for mb in minibatches(buffer.len(), cfg.critic_batch_size, seed, epoch) {
            let mut grad = Array2::zeros(critic.weights.raw_dim());
            let mut loss = 0.0;
            for &i in &mb {
                let e = &buffer[i];
                let l = critic.loss_and_grad(e.features.view(), e.action, e.target, q_old[i])?;
                loss += l.loss;
                grad += &l.gradient;
            }
            if !loss.is_finite() {
                return Err(Error::numeric("non-finite critic loss"));
            }
            if epoch == 0 {
                first_loss += loss;
            }
            grad /= mb.len() as f64;
            apply_update(&mut critic.weights, &grad, opt)?;
            critic.version += 1;
            clock.charge_update(update_cost);
        }
    }
    Ok(if buffer.is_empty() {
        0.0
    } else {
        first_loss / buffer.len() as f64
    })
}

/// Squared-error passes of the linear state-value baseline.
pub(crate) fn value_pass(
    value: &mut Array1<f64>,
    buffer: &[BufferEntry],
    cfg: &TrainConfig,
    opt: &mut OptimizerState,
    clock: &mut SimClock,
    update_cost: f64,
    seed: u64,
) -> Result<f64> {
    let mut first_loss = 0.0;
    for epoch in 0..cfg.critic_epochs {
        for mb in minibatches(buffer.len(), cfg.critic_batch_size, seed, epoch) {
            let mut grad = Array1::zeros(value.raw_dim());
            let mut loss = 0.0;
            for &i in &mb {
                let e = &buffer[i];
                let err = value.dot(&e.features) - e.target;
                loss += 0.5 * err * err;
                grad.scaled_add(err, &e.features);
            }
            if !loss.is_finite() {
                return Err(Error::numeric("non-finite value loss"));
            }
            if epoch == 0 {
                first_loss += loss;
            }
            grad /= mb.len() as f64;
            apply_update(value, &grad, opt)?;
            clock.charge_update(update_cost);
        }
    }
    Ok(if buffer.is_empty() {
        0.0
    } else {
        first_loss / buffer.len() as f64
    })
}

fn whiten(samples: &mut [ActorSample]) {
    let n = samples.len() as f64;
    if n < 2.0 {
        return;
    }
    let mean = samples.iter().map(|s| s.record.advantage).sum::<f64>() / n;
    let var = samples
        .iter()
        .map(|s| (s.record.advantage - mean).powi(2))
        .sum::<f64>()
        / n;
    let std = var.sqrt().max(1e-8);
    for s in samples {
        s.record.advantage = (s.record.advantage - mean) / std;
    }
}

fn iteration_seed(state: &TrainerState) -> u64 {
    rng::derive_seed(state.config.seed, &[domain::BATCH, state.iteration])
}

fn finish(
    state: &mut TrainerState,
    batch: IterationBatch,
    critic_loss: Option<f64>,
) -> Result<IterationReport> {
    state.iteration += 1;
    let c = &state.config;
    let eval = if c.eval_every > 0 && state.iteration.is_multiple_of(c.eval_every as u64) {
        Some(evaluate(
            &state.policy,
            &state.eval_tasks,
            &state.features,
            1,
        )?)
    } else {
        None
    };
    let n = batch.trajectories.len().max(1) as f64;
    let row = TrainerMetricsRow::new(
        state.iteration,
        &state.clock,
        batch.trajectories.iter().map(|t| t.r_o).sum::<f64>() / n,
        eval,
        critic_loss,
        batch.actor.mean_loss,
    );
    Ok(IterationReport { row, batch })
}

/// Rollout, return assignment, critic update, then the multi-action actor
/// update scored by the just-updated critic. All parameter and clock changes
/// are committed only if every phase succeeds.
pub fn run_iteration_android_coach(state: &mut TrainerState) -> Result<IterationReport> {
    if state.config.method != Method::AndroidCoach {
        return Err(Error::config(
            "run_iteration_android_coach needs method = android_coach",
        ));
    }
    let cfg = state.config.clone();
    let seed = iteration_seed(state);
    let mut clock = state.clock;
    let mut batch = IterationBatch::default();

    let tasks = select_batch(&state.tasks, cfg.batch_size, seed);
    let weights = state.return_weights();
    let (trajectories, buffers) = rollout_and_score(state, &tasks, &weights, &mut clock, seed)?;
    batch.phase_clocks.push((Phase::Rollout, clock));
    batch.phase_clocks.push((Phase::Returns, clock));
    batch.returns = buffers
        .iter()
        .map(|b| b.iter().map(|e| e.target).collect())
        .collect();
    batch.trajectories = trajectories;
    let buffer: Vec<BufferEntry> = buffers.into_iter().flatten().collect();

    let mut critic = state.critic.clone();
    let mut critic_opt = state.critic_opt.clone();
    let critic_loss = critic_pass(
        &mut critic,
        &buffer,
        &cfg,
        &mut critic_opt,
        &mut clock,
        state.latency.update_cost,
        seed,
    )?;
    batch.critic_version_updated = critic.version;
    batch.phase_clocks.push((Phase::Critic, clock));

    let mut policy = state.policy.clone();
    policy.snapshot();
    let k = cfg.k;
    let groups = state
        .workers
        .map_indexed(buffer.len(), |j| -> Result<QGroup> {
            let e = &buffer[j];
            let probs = policy.snapshot_distribution(e.features.view(), cfg.temperature)?;
            let mut rng = rng::stream(seed, &[domain::RESAMPLE, j as u64]);
            let mut actions = Vec::with_capacity(k);
            for i in 0..k {
                let a = if i == 0 && cfg.include_executed {
                    e.action
                } else {
                    sample_index(&probs, &mut rng)?
                };
                actions.push(a);
            }
            let q_values = actions
                .iter()
                .map(|&a| critic.q_value(e.features.view(), a))
                .collect::<Result<Vec<_>>>()?;
            Ok(QGroup {
                features: e.features.clone(),
                old_logprobs: actions.iter().map(|&a| probs[a].ln()).collect(),
                actions,
                q_values,
            })
        });
    let groups = groups.into_iter().collect::<Result<Vec<_>>>()?;
    batch.critic_version_scored = critic.version;
    let inference = if cfg.charge_resample_inference {
        state.latency.inference_cost
    } else {
        0.0
    };
    // a reused executed action was already charged during the rollout
    let fresh = k - usize::from(cfg.include_executed);
    clock.charge_samples((fresh * buffer.len()) as u64, inference);

    let mut samples = Vec::with_capacity(k * groups.len());
    for g in &groups {
        for record in acloo(g)? {
            batch.records.push(record);
            samples.push(ActorSample {
                features: g.features.clone(),
                record,
            });
        }
    }
    if cfg.normalize_advantages {
        whiten(&mut samples);
    }
    let mut actor_opt = state.actor_opt.clone();
    batch.actor = actor_update(
        &mut policy,
        &samples,
        cfg.clip_ratio,
        cfg.temperature,
        cfg.actor_epochs,
        &mut actor_opt,
        &mut clock,
        state.latency.update_cost,
    )?;
    batch.phase_clocks.push((Phase::Actor, clock));
    batch.groups = groups;

    state.policy = policy;
    state.critic = critic;
    state.critic_opt = critic_opt;
    state.actor_opt = actor_opt;
    state.clock = clock;
    finish(state, batch, Some(critic_loss))
}

/// Single-action PPO: Monte-Carlo returns minus a linear state value, one
/// clipped update on the executed actions.
pub fn run_iteration_ppo(state: &mut TrainerState) -> Result<IterationReport> {
    if state.config.method != Method::Ppo {
        return Err(Error::config("run_iteration_ppo needs method = ppo"));
    }
    let cfg = state.config.clone();
    let seed = iteration_seed(state);
    let mut clock = state.clock;
    let mut batch = IterationBatch::default();

    let tasks = select_batch(&state.tasks, cfg.batch_size, seed);
    let weights = state.return_weights();
    let (trajectories, buffers) = rollout_and_score(state, &tasks, &weights, &mut clock, seed)?;
    batch.phase_clocks.push((Phase::Rollout, clock));
    batch.phase_clocks.push((Phase::Returns, clock));
    batch.returns = buffers
        .iter()
        .map(|b| b.iter().map(|e| e.target).collect())
        .collect();
    batch.trajectories = trajectories;
    let buffer: Vec<BufferEntry> = buffers.into_iter().flatten().collect();

    let targets: Vec<f64> = buffer.iter().map(|e| e.target).collect();
    let baseline: Vec<f64> = buffer
        .iter()
        .map(|e| state.value.dot(&e.features))
        .collect();
    let advantages = mc_value_advantage(&targets, &baseline)?;

    let mut value = state.value.clone();
    let mut critic_opt = state.critic_opt.clone();
    let value_loss = value_pass(
        &mut value,
        &buffer,
        &cfg,
        &mut critic_opt,
        &mut clock,
        state.latency.update_cost,
        seed,
    )?;
    batch.phase_clocks.push((Phase::Critic, clock));

    let mut samples: Vec<ActorSample> = buffer
        .iter()
        .zip(advantages)
        .map(|(e, advantage)| ActorSample {
            features: e.features.clone(),
            record: AdvantageRecord {
                action: e.action,
                advantage,
                old_logprob: e.old_logprob,
                estimator: EstimatorTag::McValue,
            },
        })
        .collect();
    if cfg.normalize_advantages {
        whiten(&mut samples);
    }
    batch.records = samples.iter().map(|s| s.record).collect();
    let mut policy = state.policy.clone();
    policy.snapshot();
    let mut actor_opt = state.actor_opt.clone();
    batch.actor = actor_update(
        &mut policy,
        &samples,
        cfg.clip_ratio,
        cfg.temperature,
        cfg.actor_epochs,
        &mut actor_opt,
        &mut clock,
        state.latency.update_cost,
    )?;
    batch.phase_clocks.push((Phase::Actor, clock));

    state.policy = policy;
    state.value = value;
    state.critic_opt = critic_opt;
    state.actor_opt = actor_opt;
    state.clock = clock;
    finish(state, batch, Some(value_loss))
}

/// Group-normalized outcome rewards: `batch_size / G` tasks, each rolled out
/// `G` times, with every step of a trajectory sharing its group advantage.
pub fn run_iteration_grpo(state: &mut TrainerState) -> Result<IterationReport> {
    if state.config.method != Method::Grpo {
        return Err(Error::config("run_iteration_grpo needs method = grpo"));
    }
    let cfg = state.config.clone();
    let g = cfg.grpo_group_size;
    let seed = iteration_seed(state);
    let mut clock = state.clock;
    let mut batch = IterationBatch::default();

    let groups = (cfg.batch_size / g).max(1);
    let tasks: Vec<TaskSpec> = select_batch(&state.tasks, groups, seed)
        .into_iter()
        .flat_map(|t| std::iter::repeat_n(t, g))
        .collect();
    let weights = state.return_weights();
    let (trajectories, buffers) = rollout_and_score(state, &tasks, &weights, &mut clock, seed)?;
    batch.phase_clocks.push((Phase::Rollout, clock));

    let mut samples = Vec::new();
    for (group_trajs, group_bufs) in trajectories.chunks(g).zip(buffers.chunks(g)) {
        let rewards: Vec<f64> = group_trajs.iter().map(|t| t.r_o).collect();
        let adv = grpo_normalize(&rewards, cfg.grpo_std_floor)?;
        for (buf, &a) in group_bufs.iter().zip(&adv) {
            for e in buf {
                samples.push(ActorSample {
                    features: e.features.clone(),
                    record: AdvantageRecord {
                        action: e.action,
                        advantage: a,
                        old_logprob: e.old_logprob,
                        estimator: EstimatorTag::Grpo,
                    },
                });
            }
        }
    }
    batch.phase_clocks.push((Phase::Returns, clock));
    batch.returns = buffers
        .iter()
        .map(|b| b.iter().map(|e| e.target).collect())
        .collect();
    batch.trajectories = trajectories;
    if cfg.normalize_advantages {
        whiten(&mut samples);
    }
    batch.records = samples.iter().map(|s| s.record).collect();
    let mut policy = state.policy.clone();
    policy.snapshot();
    let mut actor_opt = state.actor_opt.clone();
    batch.actor = actor_update(
        &mut policy,
        &samples,
        cfg.clip_ratio,
        cfg.temperature,
        cfg.actor_epochs,
        &mut actor_opt,
        &mut clock,
        state.latency.update_cost,
    )?;
    batch.phase_clocks.push((Phase::Actor, clock));

    state.policy = policy;
    state.actor_opt = actor_opt;
    state.clock = clock;
    finish(state, batch, None)
}

/// Runs one iteration of the configured method.
pub fn run_iteration(state: &mut TrainerState) -> Result<IterationReport> {
    match state.config.method {
        Method::AndroidCoach => run_iteration_android_coach(state),
        Method::Ppo => run_iteration_ppo(state),
        Method::Grpo => run_iteration_grpo(state),
    }
}
