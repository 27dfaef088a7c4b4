use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::OptimizerKind;
use crate::rewards::{CriticInit, RewardWeights};

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default,
)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    #[default]
    AndroidCoach,
    Ppo,
    Grpo,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::AndroidCoach => "android_coach",
            Method::Ppo => "ppo",
            Method::Grpo => "grpo",
        }
    }
}

impl Method {
    /// Actor learning rate used when the config leaves it unset.
    pub fn default_actor_lr(self) -> f64 {
        match self {
            Method::AndroidCoach => 1.0,
            Method::Ppo => 0.3,
            Method::Grpo => 0.2,
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// PRM dataset and classifier settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PrmConfig {
    pub samples_per_state: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    pub holdout_fraction: f64,
}

impl Default for PrmConfig {
    fn default() -> Self {
        Self {
            samples_per_state: 8,
            epochs: 2,
            batch_size: 32,
            learning_rate: 0.5,
            optimizer: OptimizerKind::Adam,
            holdout_fraction: 0.2,
        }
    }
}

impl PrmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.samples_per_state == 0 || self.batch_size == 0 {
            return Err(Error::config(
                "prm.samples_per_state and prm.batch_size must be >= 1",
            ));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::config("prm.learning_rate must be positive"));
        }
        if !(0.0..1.0).contains(&self.holdout_fraction) {
            return Err(Error::config("prm.holdout_fraction must lie in [0, 1)"));
        }
        Ok(())
    }
}

/// Everything one training run needs besides the task pool and latency model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub method: Method,
    pub batch_size: usize,
    /// Actions resampled per state in the SSMA actor phase.
    pub k: usize,
    pub grpo_group_size: usize,
    pub grpo_std_floor: f64,
    pub clip_ratio: f64,
    pub value_clip: f64,
    pub reward: RewardWeights,
    /// Falls back to the method's tuned rate when unset.
    pub actor_lr: Option<f64>,
    pub critic_lr: f64,
    /// Actor optimizer.
    pub optimizer: OptimizerKind,
    /// Optimizer of the critic and of the PPO value baseline.
    pub critic_optimizer: OptimizerKind,
    pub grad_clip: f64,
    pub actor_epochs: usize,
    pub critic_epochs: usize,
    /// Minibatch size for critic and value-baseline passes; 0 means full batch.
    pub critic_batch_size: usize,
    pub critic_init: CriticInit,
    /// Critic pretraining epochs over the PRM dataset.
    pub pretrain_epochs: usize,
    /// Rollout batches used by the online warm-up.
    pub warmup_iterations: usize,
    pub max_turns: usize,
    pub temperature: f64,
    /// Put the executed action first in each resampled group.
    pub include_executed: bool,
    /// Whiten advantages over the batch before the actor step.
    pub normalize_advantages: bool,
    /// Charge resampling inference to the clock.
    pub charge_resample_inference: bool,
    /// Use PRM-augmented returns for the PPO baseline.
    pub ppo_use_prm: bool,
    /// Pretrain the PPO value baseline on rollouts of the initial policy.
    pub ppo_value_warmup: bool,
    /// Probability that the initial policy favours the correct action on a screen.
    pub prior_skill: f64,
    /// Logit bonus of the favoured action in the initial policy.
    pub prior_logit: f64,
    pub max_iterations: usize,
    /// Simulated-seconds budget; training stops once the clock reaches it.
    pub time_budget: Option<f64>,
    /// Greedy evaluation every this many iterations; 0 disables it.
    pub eval_every: usize,
    pub prm: PrmConfig,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            method: Method::AndroidCoach,
            batch_size: 8,
            k: 4,
            grpo_group_size: 4,
            grpo_std_floor: 1e-4,
            clip_ratio: 0.2,
            value_clip: 0.5,
            reward: RewardWeights::default(),
            actor_lr: None,
            critic_lr: 0.1,
            optimizer: OptimizerKind::Adam,
            critic_optimizer: OptimizerKind::Adam,
            grad_clip: 1.0,
            actor_epochs: 1,
            critic_epochs: 1,
            critic_batch_size: 0,
            critic_init: CriticInit::PrmPretrain,
            pretrain_epochs: 20,
            warmup_iterations: 4,
            max_turns: 25,
            temperature: 1.0,
            include_executed: false,
            normalize_advantages: false,
            charge_resample_inference: true,
            ppo_use_prm: false,
            ppo_value_warmup: false,
            prior_skill: 0.7,
            prior_logit: 1.5,
            max_iterations: 200,
            time_budget: None,
            eval_every: 1,
            prm: PrmConfig::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::config("train.batch_size must be >= 1"));
        }
        if self.method == Method::AndroidCoach && self.k < 2 {
            return Err(Error::config(format!(
                "train.k must be >= 2 for android_coach, got {}",
                self.k
            )));
        }
        if self.method == Method::Grpo && self.grpo_group_size < 2 {
            return Err(Error::config("train.grpo_group_size must be >= 2"));
        }
        if !(self.clip_ratio > 0.0 && self.clip_ratio < 1.0) {
            return Err(Error::config(format!(
                "train.clip_ratio must lie in (0, 1), got {}",
                self.clip_ratio
            )));
        }
        if !(self.value_clip > 0.0) {
            return Err(Error::config("train.value_clip must be positive"));
        }
        if !(self.actor_lr() >= 0.0
            && self.actor_lr().is_finite()
            && self.critic_lr >= 0.0
            && self.grad_clip > 0.0)
        {
            return Err(Error::config(
                "learning rates must be non-negative and grad_clip positive",
            ));
        }
        if !(self.temperature > 0.0) {
            return Err(Error::config("train.temperature must be positive"));
        }
        if !(self.grpo_std_floor >= 0.0) {
            return Err(Error::config("train.grpo_std_floor must be non-negative"));
        }
        if !(0.0..=1.0).contains(&self.prior_skill) || !self.prior_logit.is_finite() {
            return Err(Error::config(
                "train.prior_skill must lie in [0, 1] and prior_logit be finite",
            ));
        }
        if self.max_turns < 2 {
            return Err(Error::config("train.max_turns must be >= 2"));
        }
        if let Some(b) = self.time_budget {
            if !(b >= 0.0) {
                return Err(Error::config("train.time_budget must be non-negative"));
            }
        }
        self.reward.validate()?;
        self.prm.validate()
    }

    pub fn actor_lr(&self) -> f64 {
        self.actor_lr
            .unwrap_or_else(|| self.method.default_actor_lr())
    }

    /// Whether this run needs a trained PRM.
    pub fn needs_prm(&self) -> bool {
        match self.method {
            Method::AndroidCoach => {
                self.reward.omega_p > 0.0 || self.critic_init == CriticInit::PrmPretrain
            }
            Method::Ppo => self.ppo_use_prm && self.reward.omega_p > 0.0,
            Method::Grpo => false,
        }
    }
}
