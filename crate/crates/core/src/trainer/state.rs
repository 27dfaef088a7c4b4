//! Trainer state: task split, models, optimizers and the clock.

use std::collections::BTreeMap;

use ndarray::Array1;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::config::{Method, TrainConfig};
use super::iteration::{critic_pass, rollout_and_score, select_batch, value_pass, BufferEntry};
use crate::env::{LatencyModel, SimClock, TaskSpec};
use crate::error::{Error, Result};
use crate::model::{CriticParams, FeatureMap, OptimizerState, PolicyParams};
use crate::par::Workers;
use crate::rewards::{
    build_prm_dataset, pretrain_critic, split_holdout, train_prm, CriticInit, PretrainConfig,
    PrmDataset, PrmParams, PrmReport, PrmTrainConfig, RewardWeights, StepLabelRecord,
};
use crate::rng::{self, domain};

/// Splits a pool into training and held-out tasks: within each family with
/// at least two tasks, the last one is held out.
pub fn split_by_family(pool: &[TaskSpec]) -> (Vec<TaskSpec>, Vec<TaskSpec>) {
    let mut families: BTreeMap<u32, Vec<&TaskSpec>> = BTreeMap::new();
    for t in pool {
        families.entry(t.family).or_default().push(t);
    }
    let held: Vec<u64> = families
        .values()
        .filter(|ts| ts.len() >= 2)
        .map(|ts| ts[ts.len() - 1].task_id)
        .collect();
    pool.iter()
        .cloned()
        .partition(|t| !held.contains(&t.task_id))
}

/// An imperfect starting policy: on every `(family, screen)` feature one
/// action gets a logit bonus, the correct one with probability `skill`.
pub fn prior_policy(
    tasks: &[TaskSpec],
    features: &FeatureMap,
    actions: usize,
    skill: f64,
    bonus: f64,
    seed: u64,
) -> Result<PolicyParams> {
    let mut policy = PolicyParams::zeros(actions, features.dim());
    if bonus == 0.0 || actions < 2 {
        return Ok(policy);
    }
    let mut done = vec![false; features.dim()];
    for task in tasks {
        let oracle = task.oracle_actions();
        for (screen, best) in oracle.iter().enumerate() {
            let col = features.index(task.task_id, screen)?;
            if done[col] {
                continue;
            }
            done[col] = true;
            let Some(best) = *best else { continue };
            let mut rng = rng::stream(seed, &[domain::POLICY_INIT, col as u64]);
            let favoured = if rng.random::<f64>() < skill {
                best
            } else {
                let wrong = rng.random_range(0..actions - 1);
                if wrong >= best {
                    wrong + 1
                } else {
                    wrong
                }
            };
            policy.weights[[favoured, col]] = bonus;
        }
    }
    Ok(policy)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrmSummary {
    pub records: usize,
    pub raw_positives: usize,
    pub raw_negatives: usize,
    pub train_accuracy: f64,
    pub held_out_accuracy: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainerState {
    pub config: TrainConfig,
    pub latency: LatencyModel,
    pub tasks: Vec<TaskSpec>,
    pub eval_tasks: Vec<TaskSpec>,
    pub features: FeatureMap,
    pub policy: PolicyParams,
    /// Q critic of the SSMA method.
    pub critic: CriticParams,
    /// Linear state-value baseline of the PPO method.
    pub value: Array1<f64>,
    pub prm: Option<PrmParams>,
    pub prm_summary: Option<PrmSummary>,
    pub actor_opt: OptimizerState,
    pub critic_opt: OptimizerState,
    pub clock: SimClock,
    pub iteration: u64,
    pub workers: Workers,
}

/// Builds the step-label dataset from `policy` on `tasks`, holds out a
/// fraction, and trains the PRM on the rest.
pub fn fit_prm(
    config: &TrainConfig,
    tasks: &[TaskSpec],
    policy: &PolicyParams,
    features: &FeatureMap,
) -> Result<(PrmDataset, PrmReport)> {
    let c = config;
    let data = build_prm_dataset(
        tasks,
        policy,
        features,
        c.prm.samples_per_state,
        c.temperature,
        rng::derive_seed(c.seed, &[domain::PRM_DATA]),
    )?;
    if data.degenerate {
        return Err(Error::DegenerateDataset(format!(
            "{} positive and {} negative step labels",
            data.raw_positives, data.raw_negatives
        )));
    }
    let (train, held) = split_holdout(&data.records, c.prm.holdout_fraction, c.seed);
    let report = train_prm(
        &train,
        &held,
        policy.actions(),
        features.dim(),
        &PrmTrainConfig {
            epochs: c.prm.epochs,
            batch_size: c.prm.batch_size,
            optimizer: OptimizerState::new(c.prm.optimizer, c.prm.learning_rate, c.grad_clip),
            seed: rng::derive_seed(c.seed, &[domain::PRM_DATA, 1]),
        },
    )?;
    Ok((data, report))
}

impl TrainerState {
    /// Builds the initial models: prior policy, PRM when the method needs one,
    /// and the critic or value baseline per the configured warm start. Every
    /// task's step budget is set to `max_turns`. None of the preparation is
    /// charged to the clock.
    pub fn new(
        config: TrainConfig,
        latency: LatencyModel,
        mut tasks: Vec<TaskSpec>,
        mut eval_tasks: Vec<TaskSpec>,
        workers: Workers,
    ) -> Result<Self> {
        config.validate()?;
        for t in tasks.iter_mut().chain(eval_tasks.iter_mut()) {
            t.max_steps = config.max_turns;
        }
        latency.validate()?;
        if tasks.is_empty() {
            return Err(Error::config("training pool is empty"));
        }
        let actions = tasks[0].actions();
        if tasks
            .iter()
            .chain(&eval_tasks)
            .any(|t| t.actions() != actions)
        {
            return Err(Error::config("all tasks must share one action count"));
        }
        let all: Vec<TaskSpec> = tasks.iter().chain(&eval_tasks).cloned().collect();
        let features = FeatureMap::one_hot(&all);
        let policy = prior_policy(
            &all,
            &features,
            actions,
            config.prior_skill,
            config.prior_logit,
            config.seed,
        )?;

        let mut state = Self {
            latency,
            critic: CriticParams::zeros(actions, features.dim(), config.value_clip),
            value: Array1::zeros(features.dim()),
            prm: None,
            prm_summary: None,
            actor_opt: OptimizerState::new(config.optimizer, config.actor_lr(), config.grad_clip),
            critic_opt: OptimizerState::new(
                config.critic_optimizer,
                config.critic_lr,
                config.grad_clip,
            ),
            clock: SimClock::new(),
            iteration: 0,
            policy,
            features,
            tasks,
            eval_tasks,
            workers,
            config,
        };
        let dataset = if state.config.needs_prm() {
            Some(state.train_prm()?)
        } else {
            None
        };
        match state.config.method {
            Method::AndroidCoach => match state.config.critic_init {
                CriticInit::None => {}
                CriticInit::PrmPretrain => {
                    let cfg = PretrainConfig {
                        epochs: state.config.pretrain_epochs,
                        batch_size: state.config.prm.batch_size,
                        optimizer: OptimizerState::new(
                            state.config.critic_optimizer,
                            state.config.critic_lr,
                            state.config.grad_clip,
                        ),
                        seed: rng::derive_seed(state.config.seed, &[domain::WARMUP, 1]),
                    };
                    let data = dataset
                        .as_deref()
                        .expect("PRM dataset built for pretraining");
                    state.critic =
                        pretrain_critic(&state.critic, data, CriticInit::PrmPretrain, &cfg)?;
                }
                CriticInit::OnlineWarmup => state.online_warmup()?,
            },
            Method::Ppo if state.config.ppo_value_warmup => state.online_warmup()?,
            _ => {}
        }
        Ok(state)
    }

    pub fn actions(&self) -> usize {
        self.policy.actions()
    }

    /// Reward weights used for return targets under the current method.
    pub fn return_weights(&self) -> RewardWeights {
        let w = self.config.reward;
        let outcome_only = match self.config.method {
            Method::AndroidCoach => self.prm.is_none(),
            Method::Ppo => !self.config.ppo_use_prm || self.prm.is_none(),
            Method::Grpo => true,
        };
        if outcome_only {
            RewardWeights { omega_p: 0.0, ..w }
        } else {
            w
        }
    }

    fn train_prm(&mut self) -> Result<Vec<StepLabelRecord>> {
        let (data, report) = fit_prm(&self.config, &self.tasks, &self.policy, &self.features)?;
        self.prm_summary = Some(PrmSummary {
            records: data.records.len(),
            raw_positives: data.raw_positives,
            raw_negatives: data.raw_negatives,
            train_accuracy: report.train_accuracy,
            held_out_accuracy: report.held_out_accuracy,
        });
        self.prm = Some(report.params);
        Ok(data.records)
    }

    /// Critic (or value-baseline) updates on rollouts of the initial policy,
    /// run on a scratch clock.
    fn online_warmup(&mut self) -> Result<()> {
        let mut scratch = SimClock::new();
        let weights = self.return_weights();
        for w in 0..self.config.warmup_iterations {
            let seed = rng::derive_seed(self.config.seed, &[domain::WARMUP, 2, w as u64]);
            let batch = select_batch(&self.tasks, self.config.batch_size, seed);
            let (_, buffer) = rollout_and_score(self, &batch, &weights, &mut scratch, seed)?;
            let buffer: Vec<BufferEntry> = buffer.into_iter().flatten().collect();
            match self.config.method {
                Method::Ppo => {
                    let mut opt = self.critic_opt.clone();
                    let mut value = self.value.clone();
                    value_pass(
                        &mut value,
                        &buffer,
                        &self.config,
                        &mut opt,
                        &mut scratch,
                        0.0,
                        seed,
                    )?;
                    self.value = value;
                }
                _ => {
                    let mut opt = self.critic_opt.clone();
                    let mut critic = self.critic.clone();
                    critic_pass(
                        &mut critic,
                        &buffer,
                        &self.config,
                        &mut opt,
                        &mut scratch,
                        0.0,
                        seed,
                    )?;
                    self.critic = critic;
                }
            }
        }
        Ok(())
    }
}
