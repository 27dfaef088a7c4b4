use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Direction of the discount exponent in the return target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum DiscountMode {
    /// `γ^(T−τ)`: later process rewards are discounted less.
    #[default]
    AsWritten,
    /// `γ^(τ−t)`: conventional reward-to-go discounting.
    Standard,
}

/// Weights and thresholds for process and outcome rewards.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RewardWeights {
    pub omega_p: f64,
    pub omega_o: f64,
    pub gamma: f64,
    pub prm_threshold: f64,
    pub prm_noise_rate: f64,
    pub discount_mode: DiscountMode,
}

impl Default for RewardWeights {
    fn default() -> Self {
        Self {
            omega_p: 0.2,
            omega_o: 1.0,
            gamma: 0.95,
            prm_threshold: 0.5,
            prm_noise_rate: 0.05,
            discount_mode: DiscountMode::AsWritten,
        }
    }
}

impl RewardWeights {
    pub fn validate(&self) -> Result<()> {
        if !(self.omega_p >= 0.0 && self.omega_o >= 0.0 && self.omega_p + self.omega_o > 0.0) {
            return Err(Error::config(
                "reward weights must be non-negative with a positive sum",
            ));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::config(format!(
                "reward.gamma must lie in (0, 1], got {}",
                self.gamma
            )));
        }
        if !(self.prm_threshold > 0.0 && self.prm_threshold < 1.0) {
            return Err(Error::config("reward.prm_threshold must lie in (0, 1)"));
        }
        if !(self.prm_noise_rate >= 0.0 && self.prm_noise_rate < 0.5) {
            return Err(Error::config("reward.prm_noise_rate must lie in [0, 0.5)"));
        }
        Ok(())
    }
}

/// Weighted Monte-Carlo return targets for every step of one trajectory:
/// `R_t = ω_p Σ_{τ=t}^{T} γ^e r_p^τ + ω_o r_o`, with `e = T − τ` or `τ − t`
/// depending on the discount mode.
pub fn compute_returns(process_rewards: &[f64], outcome: f64, weights: &RewardWeights) -> Vec<f64> {
    let n = process_rewards.len();
    let g = weights.gamma;
    let mut out = vec![0.0; n];
    match weights.discount_mode {
        // suffix sum of r_p^τ γ^(T−τ); the weight of each term is independent of t
        DiscountMode::AsWritten => {
            let mut acc = 0.0;
            for tau in (0..n).rev() {
                acc += g.powi((n - 1 - tau) as i32) * process_rewards[tau];
                out[tau] = acc;
            }
        }
        DiscountMode::Standard => {
            let mut acc = 0.0;
            for tau in (0..n).rev() {
                acc = process_rewards[tau] + g * acc;
                out[tau] = acc;
            }
        }
    }
    for r in &mut out {
        *r = weights.omega_p * *r + weights.omega_o * outcome;
    }
    out
}
