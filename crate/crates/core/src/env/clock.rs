//! Simulated emulator latency.
//!
//! Nothing here reads a wall clock. Every environment operation, policy sample
//! and parameter update charges a fixed number of notional seconds, so a
//! training run's "duration" is a pure function of what it did.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-operation costs in simulated seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LatencyModel {
    /// Charged by every `reset`.
    pub init_cost: f64,
    /// Charged by every executed environment step.
    pub step_cost: f64,
    /// Charged when an episode ends without success.
    pub recovery_cost: f64,
    /// Charged per sampled action, executed or resampled.
    pub inference_cost: f64,
    /// Charged per parameter update (one optimizer step).
    pub update_cost: f64,
}

impl Default for LatencyModel {
    fn default() -> Self {
        Self {
            init_cost: 20.0,
            step_cost: 2.5,
            recovery_cost: 10.0,
            inference_cost: 4.5,
            update_cost: 2.0,
        }
    }
}

impl LatencyModel {
    pub fn validate(&self) -> Result<()> {
        let costs = [
            ("init_cost", self.init_cost),
            ("step_cost", self.step_cost),
            ("recovery_cost", self.recovery_cost),
            ("inference_cost", self.inference_cost),
        ];
        for (name, v) in costs {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(format!(
                    "latency.{name} must be positive, got {v}"
                )));
            }
        }
        if !(self.update_cost.is_finite() && self.update_cost >= 0.0) {
            return Err(Error::config(format!(
                "latency.update_cost must be non-negative, got {}",
                self.update_cost
            )));
        }
        Ok(())
    }

    /// Environment-to-inference time ratio of one rollout with
    /// `expected_steps` steps that fails with probability `failure_rate`.
    pub fn env_inference_ratio(&self, expected_steps: f64, failure_rate: f64) -> f64 {
        (self.init_cost + expected_steps * self.step_cost + failure_rate * self.recovery_cost)
            / (expected_steps * self.inference_cost)
    }
}

/// Accumulated simulated time and work counters.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SimClock {
    pub total_time: f64,
    pub env_time: f64,
    pub inference_time: f64,
    pub update_time: f64,
    pub interaction_count: u64,
    pub sampled_action_count: u64,
}

impl SimClock {
    pub fn new() -> Self {
        Self::default()
    }

    fn retotal(&mut self) {
        self.total_time = self.env_time + self.inference_time + self.update_time;
    }

    pub fn charge_env(&mut self, seconds: f64) {
        self.env_time += seconds;
        self.retotal();
    }

    /// One executed environment step.
    pub fn charge_interaction(&mut self, seconds: f64) {
        self.interaction_count += 1;
        self.charge_env(seconds);
    }

    /// `count` policy samples at `seconds_each`.
    pub fn charge_samples(&mut self, count: u64, seconds_each: f64) {
        self.sampled_action_count += count;
        self.inference_time += count as f64 * seconds_each;
        self.retotal();
    }

    pub fn charge_update(&mut self, seconds: f64) {
        self.update_time += seconds;
        self.retotal();
    }

    /// Adds a shard's charges. Callers merge shards in a fixed order so the
    /// floating-point sums are reproducible.
    pub fn absorb(&mut self, shard: &SimClock) {
        self.env_time += shard.env_time;
        self.inference_time += shard.inference_time;
        self.update_time += shard.update_time;
        self.interaction_count += shard.interaction_count;
        self.sampled_action_count += shard.sampled_action_count;
        self.retotal();
    }

    /// Whether `total = env + inference + update` holds exactly.
    pub fn is_conserved(&self) -> bool {
        self.total_time == self.env_time + self.inference_time + self.update_time
    }
}
