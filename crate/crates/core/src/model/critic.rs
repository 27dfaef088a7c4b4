//! Per-action linear Q critic with the clipped value loss.

use ndarray::{Array1, Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::env::ActionIndex;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticParams {
    pub weights: Array2<f64>,
    /// ε_v: half-width of the trust interval around the snapshot prediction.
    pub value_clip: f64,
    /// Incremented on every parameter update.
    pub version: u64,
}

/// Which branch of the clipped loss attained the max.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ValueBranch {
    Unclipped,
    Clipped,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CriticLoss {
    pub loss: f64,
    pub gradient: Array2<f64>,
    pub branch: ValueBranch,
}

impl CriticParams {
    pub fn zeros(actions: usize, dim: usize, value_clip: f64) -> Self {
        Self {
            weights: Array2::zeros((actions, dim)),
            value_clip,
            version: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.value_clip > 0.0) {
            return Err(Error::config(format!(
                "value clip must be positive, got {}",
                self.value_clip
            )));
        }
        if self.weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::numeric("critic has non-finite parameters"));
        }
        Ok(())
    }

    pub fn actions(&self) -> usize {
        self.weights.nrows()
    }

    pub fn q_value(&self, features: ArrayView1<f64>, action: ActionIndex) -> Result<f64> {
        if action >= self.actions() {
            return Err(Error::InvalidAction {
                action,
                actions: self.actions(),
            });
        }
        Ok(self.weights.row(action).dot(&features))
    }

    pub fn q_values(&self, features: ArrayView1<f64>) -> Array1<f64> {
        self.weights.dot(&features)
    }

    /// `½·max((Q − R)², (clip(Q, Q_old ± ε_v) − R)²)` and its gradient.
    ///
    /// Ties go to the unclipped branch. When the clipped branch wins, `Q` lies
    /// strictly outside the trust interval and the gradient is exactly zero.
    pub fn loss_and_grad(
        &self,
        features: ArrayView1<f64>,
        action: ActionIndex,
        target: f64,
        q_old: f64,
    ) -> Result<CriticLoss> {
        if !target.is_finite() || !q_old.is_finite() {
            return Err(Error::numeric(format!(
                "non-finite critic target {target} or snapshot {q_old}"
            )));
        }
        let q = self.q_value(features, action)?;
        let (loss, branch) = clipped_value_loss(q, target, q_old, self.value_clip);
        let mut gradient = Array2::zeros(self.weights.raw_dim());
        if branch == ValueBranch::Unclipped {
            gradient.row_mut(action).scaled_add(q - target, &features);
        }
        Ok(CriticLoss {
            loss,
            gradient,
            branch,
        })
    }

    /// Unclipped `½(Q − target)²` gradient, used for pretraining.
    pub fn mse_loss_and_grad(
        &self,
        features: ArrayView1<f64>,
        action: ActionIndex,
        target: f64,
    ) -> Result<(f64, Array2<f64>)> {
        let q = self.q_value(features, action)?;
        let mut gradient = Array2::zeros(self.weights.raw_dim());
        gradient.row_mut(action).scaled_add(q - target, &features);
        Ok((0.5 * (q - target).powi(2), gradient))
    }
}

/// Scalar clipped value loss: returns the loss and the winning branch.
pub fn clipped_value_loss(q: f64, target: f64, q_old: f64, value_clip: f64) -> (f64, ValueBranch) {
    let unclipped = (q - target).powi(2);
    let clipped_q = q.clamp(q_old - value_clip, q_old + value_clip);
    let clipped = (clipped_q - target).powi(2);
    if clipped > unclipped {
        (0.5 * clipped, ValueBranch::Clipped)
    } else {
        (0.5 * unclipped, ValueBranch::Unclipped)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn critic_with(q: f64) -> CriticParams {
        let mut c = CriticParams::zeros(2, 1, 0.5);
        c.weights[[0, 0]] = q;
        c
    }

    #[test]
    fn zero_and_one_hot_values() {
        let mut c = CriticParams::zeros(3, 4, 0.5);
        let e2 = array![0.0, 0.0, 1.0, 0.0];
        assert_eq!(c.q_value(e2.view(), 1).unwrap(), 0.0);
        c.weights[[1, 2]] = 1.0;
        assert_eq!(c.q_value(e2.view(), 1).unwrap(), 1.0);
    }

    #[test]
    fn clipped_branch_value_and_gate() {
        // Q=1.2 outside [0, 1]; clipped branch (1.0 - 0)^2 = 1.0 < 1.44, unclipped wins
        let c = critic_with(1.2);
        let out = c.loss_and_grad(array![1.0].view(), 0, 0.0, 0.5).unwrap();
        assert!((out.loss - 0.72).abs() < 1e-15);
        assert_eq!(out.branch, ValueBranch::Unclipped);
        assert!((out.gradient[[0, 0]] - 1.2).abs() < 1e-15);

        // Q=0.0, Q_old=2.0, R=0.1: clip lifts Q to 1.5 and (1.4)^2 > (0.1)^2
        let c = critic_with(0.0);
        let out = c.loss_and_grad(array![1.0].view(), 0, 0.1, 2.0).unwrap();
        assert_eq!(out.branch, ValueBranch::Clipped);
        assert!((out.loss - 0.5 * 1.4f64.powi(2)).abs() < 1e-12);
        assert!(out.gradient.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn tie_goes_unclipped() {
        let c = critic_with(0.6);
        let out = c.loss_and_grad(array![1.0].view(), 0, 0.5, 0.5).unwrap();
        assert!((out.loss - 0.005).abs() < 1e-15);
        assert_eq!(out.branch, ValueBranch::Unclipped);
    }

    #[test]
    fn exact_fit_has_zero_loss_and_gradient() {
        let c = critic_with(0.3);
        let out = c.loss_and_grad(array![1.0].view(), 0, 0.3, 0.3).unwrap();
        assert_eq!(out.loss, 0.0);
        assert!(out.gradient.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn non_finite_target_rejected() {
        let c = critic_with(0.3);
        assert!(c
            .loss_and_grad(array![1.0].view(), 0, f64::NAN, 0.0)
            .is_err());
    }
}
