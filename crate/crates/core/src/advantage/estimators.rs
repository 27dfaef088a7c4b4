//! Group advantage estimators.

use ndarray::Array1;
use serde::{Deserialize, Serialize};

use crate::env::ActionIndex;
use crate::error::{Error, Result};

/// `k` actions sampled i.i.d. on one state, with their critic values.
#[derive(Debug, Clone, PartialEq)]
pub struct QGroup {
    pub features: Array1<f64>,
    pub actions: Vec<ActionIndex>,
    pub q_values: Vec<f64>,
    pub old_logprobs: Vec<f64>,
}

impl QGroup {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorTag {
    Acloo,
    Grpo,
    Rloo,
    NoBaseline,
    McValue,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdvantageRecord {
    pub action: ActionIndex,
    pub advantage: f64,
    pub old_logprob: f64,
    pub estimator: EstimatorTag,
}

/// Leave-one-out centering: `x_i − mean(x_j, j ≠ i)`.
///
/// Evaluated as `Σ_{j≠i} (x_i − x_j) / (k − 1)`, which only sees pairwise
/// differences, so adding a constant that is exactly representable alongside
/// the inputs leaves the result bit-identical.
pub fn leave_one_out(values: &[f64]) -> Result<Vec<f64>> {
    let k = values.len();
    if k < 2 {
        return Err(Error::InsufficientGroup { size: k, min: 2 });
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::numeric("non-finite value in advantage group"));
    }
    let denom = (k - 1) as f64;
    Ok(values
        .iter()
        .map(|&xi| values.iter().map(|&xj| xi - xj).sum::<f64>() / denom)
        .collect())
}

/// Leave-one-out advantages over critic values of one group.
pub fn acloo(group: &QGroup) -> Result<Vec<AdvantageRecord>> {
    let k = group.len();
    if group.q_values.len() != k {
        return Err(Error::LengthMismatch {
            left: k,
            right: group.q_values.len(),
        });
    }
    if group.old_logprobs.len() != k {
        return Err(Error::LengthMismatch {
            left: k,
            right: group.old_logprobs.len(),
        });
    }
    let adv = leave_one_out(&group.q_values)?;
    Ok(group
        .actions
        .iter()
        .zip(&group.old_logprobs)
        .zip(adv)
        .map(|((&action, &old_logprob), advantage)| AdvantageRecord {
            action,
            advantage,
            old_logprob,
            estimator: EstimatorTag::Acloo,
        })
        .collect())
}

/// Leave-one-out advantages over scalar rewards.
pub fn rloo_rewards(rewards: &[f64]) -> Result<Vec<f64>> {
    leave_one_out(rewards)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum StdKind {
    #[default]
    Population,
    Sample,
}

/// `(r − mean) / (std + δ)` with the population standard deviation.
pub fn grpo_normalize(rewards: &[f64], std_floor: f64) -> Result<Vec<f64>> {
    grpo_normalize_with(rewards, std_floor, StdKind::Population)
}

pub fn grpo_normalize_with(rewards: &[f64], std_floor: f64, kind: StdKind) -> Result<Vec<f64>> {
    let g = rewards.len();
    if g < 2 {
        return Err(Error::InsufficientGroup { size: g, min: 2 });
    }
    if !(std_floor >= 0.0) {
        return Err(Error::config("GRPO std floor must be non-negative"));
    }
    let mean = rewards.iter().sum::<f64>() / g as f64;
    let ss: f64 = rewards.iter().map(|r| (r - mean).powi(2)).sum();
    let n = match kind {
        StdKind::Population => g as f64,
        StdKind::Sample => (g - 1) as f64,
    };
    let std = (ss / n).sqrt();
    let denom = std + std_floor;
    if denom == 0.0 {
        return Ok(vec![0.0; g]);
    }
    let out: Vec<f64> = rewards.iter().map(|r| (r - mean) / denom).collect();
    if out.iter().any(|a| !a.is_finite()) {
        return Err(Error::numeric("non-finite GRPO advantage"));
    }
    Ok(out)
}

/// `R_t − V(s_t)` elementwise.
pub fn mc_value_advantage(returns: &[f64], values: &[f64]) -> Result<Vec<f64>> {
    if returns.len() != values.len() {
        return Err(Error::LengthMismatch {
            left: returns.len(),
            right: values.len(),
        });
    }
    Ok(returns.iter().zip(values).map(|(r, v)| r - v).collect())
}
