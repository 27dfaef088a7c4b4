//! Linear-softmax policy.

use ndarray::{Array1, Array2, ArrayView1};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::ActionIndex;
use crate::error::{Error, Result};

/// Policy weights θ (actions × features) and the frozen copy θ_old used for
/// importance ratios.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyParams {
    pub weights: Array2<f64>,
    pub snapshot_weights: Option<Array2<f64>>,
}

/// Numerically stable softmax of `logits / temperature`.
pub fn softmax(logits: ArrayView1<f64>, temperature: f64) -> Result<Array1<f64>> {
    if !(temperature > 0.0 && temperature.is_finite()) {
        return Err(Error::numeric(format!(
            "temperature must be positive, got {temperature}"
        )));
    }
    if logits.iter().any(|z| !z.is_finite()) {
        return Err(Error::numeric("non-finite logits"));
    }
    let max = logits.fold(f64::NEG_INFINITY, |m, &z| m.max(z));
    let mut p = logits.mapv(|z| ((z - max) / temperature).exp());
    let sum = p.sum();
    p /= sum;
    Ok(p)
}

/// Draws an index from a probability vector.
pub fn sample_index<R: Rng + ?Sized>(probs: &Array1<f64>, rng: &mut R) -> Result<ActionIndex> {
    let dist = WeightedIndex::new(probs.iter().copied())
        .map_err(|e| Error::numeric(format!("cannot sample from {probs}: {e}")))?;
    Ok(dist.sample(rng))
}

impl PolicyParams {
    pub fn zeros(actions: usize, dim: usize) -> Self {
        Self {
            weights: Array2::zeros((actions, dim)),
            snapshot_weights: None,
        }
    }

    pub fn from_weights(weights: Array2<f64>) -> Self {
        Self {
            weights,
            snapshot_weights: None,
        }
    }

    pub fn actions(&self) -> usize {
        self.weights.nrows()
    }

    pub fn dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn validate(&self) -> Result<()> {
        if self.weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::numeric("policy has non-finite parameters"));
        }
        Ok(())
    }

    pub fn logits(&self, features: ArrayView1<f64>) -> Array1<f64> {
        self.weights.dot(&features)
    }

    /// `softmax(θ·features / temperature)`.
    pub fn action_distribution(
        &self,
        features: ArrayView1<f64>,
        temperature: f64,
    ) -> Result<Array1<f64>> {
        softmax(self.logits(features).view(), temperature)
    }

    pub fn log_prob(
        &self,
        features: ArrayView1<f64>,
        action: ActionIndex,
        temperature: f64,
    ) -> Result<f64> {
        log_prob_with(&self.weights, features, action, temperature)
    }

    /// `∇_θ log π(action | features)` at unit temperature: row `action` gets
    /// `(1 − π_a)·features`, every other row `b` gets `−π_b·features`.
    pub fn grad_log_prob(
        &self,
        features: ArrayView1<f64>,
        action: ActionIndex,
    ) -> Result<Array2<f64>> {
        self.grad_log_prob_at(features, action, 1.0)
    }

    pub fn grad_log_prob_at(
        &self,
        features: ArrayView1<f64>,
        action: ActionIndex,
        temperature: f64,
    ) -> Result<Array2<f64>> {
        self.check_action(action)?;
        let probs = self.action_distribution(features, temperature)?;
        let mut coeff = -probs;
        coeff[action] += 1.0;
        coeff /= temperature;
        Ok(outer(&coeff, features))
    }

    /// Freezes a deep copy of the current weights as θ_old.
    pub fn snapshot(&mut self) {
        self.snapshot_weights = Some(self.weights.clone());
    }

    /// `log π_old(action | features)`; falls back to θ when no snapshot exists.
    pub fn snapshot_log_prob(
        &self,
        features: ArrayView1<f64>,
        action: ActionIndex,
        temperature: f64,
    ) -> Result<f64> {
        let w = self.snapshot_weights.as_ref().unwrap_or(&self.weights);
        log_prob_with(w, features, action, temperature)
    }

    pub fn snapshot_distribution(
        &self,
        features: ArrayView1<f64>,
        temperature: f64,
    ) -> Result<Array1<f64>> {
        let w = self.snapshot_weights.as_ref().unwrap_or(&self.weights);
        softmax(w.dot(&features).view(), temperature)
    }

    /// Greedy action: highest probability, ties to the lowest index.
    pub fn greedy_action(&self, features: ArrayView1<f64>) -> ActionIndex {
        let logits = self.logits(features);
        let mut best = 0;
        for (a, &z) in logits.iter().enumerate() {
            if z > logits[best] {
                best = a;
            }
        }
        best
    }

    fn check_action(&self, action: ActionIndex) -> Result<()> {
        if action >= self.actions() {
            return Err(Error::InvalidAction {
                action,
                actions: self.actions(),
            });
        }
        Ok(())
    }
}

fn log_prob_with(
    weights: &Array2<f64>,
    features: ArrayView1<f64>,
    action: ActionIndex,
    temperature: f64,
) -> Result<f64> {
    if action >= weights.nrows() {
        return Err(Error::InvalidAction {
            action,
            actions: weights.nrows(),
        });
    }
    if !(temperature > 0.0 && temperature.is_finite()) {
        return Err(Error::numeric(format!(
            "temperature must be positive, got {temperature}"
        )));
    }
    let z = weights.dot(&features) / temperature;
    if z.iter().any(|v| !v.is_finite()) {
        return Err(Error::numeric("non-finite logits"));
    }
    let max = z.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let lse = max + z.mapv(|v| (v - max).exp()).sum().ln();
    Ok(z[action] - lse)
}

/// `column ⊗ row` as a matrix.
pub(crate) fn outer(column: &Array1<f64>, row: ArrayView1<f64>) -> Array2<f64> {
    let c = column.view().insert_axis(ndarray::Axis(1));
    let r = row.insert_axis(ndarray::Axis(0));
    c.dot(&r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn zero_weights_give_uniform() {
        let p = PolicyParams::zeros(4, 3);
        let f = array![1.0, 0.0, 0.0];
        let probs = p.action_distribution(f.view(), 1.0).unwrap();
        assert_eq!(probs, array![0.25, 0.25, 0.25, 0.25]);
    }

    #[test]
    fn log_two_logit_gap_gives_two_thirds() {
        let p = softmax(array![2f64.ln(), 0.0].view(), 1.0).unwrap();
        assert!((p[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((p[1] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn high_temperature_flattens() {
        let p = softmax(array![3.0, 0.0].view(), 1000.0).unwrap();
        assert!((p[0] - 0.5).abs() < 1e-3 && (p[1] - 0.5).abs() < 1e-3);
    }

    #[test]
    fn bad_inputs_signal_numeric_failure() {
        assert!(softmax(array![f64::NAN, 0.0].view(), 1.0).is_err());
        assert!(softmax(array![1.0, 0.0].view(), 0.0).is_err());
    }

    #[test]
    fn uniform_two_action_gradient() {
        let p = PolicyParams::zeros(2, 2);
        let e = array![1.0, 0.0];
        let g = p.grad_log_prob(e.view(), 0).unwrap();
        assert_eq!(g, array![[0.5, 0.0], [-0.5, 0.0]]);
        assert!(p.grad_log_prob(e.view(), 2).is_err());
    }

    #[test]
    fn snapshot_is_a_deep_copy() {
        let mut p = PolicyParams::zeros(3, 2);
        let f = array![0.0, 1.0];
        p.snapshot();
        let before = p.snapshot_log_prob(f.view(), 1, 1.0).unwrap();
        p.weights[[1, 1]] = 5.0;
        assert_eq!(p.snapshot_log_prob(f.view(), 1, 1.0).unwrap(), before);
        let first = p.snapshot_weights.clone();
        p.snapshot();
        p.snapshot();
        assert_ne!(first, p.snapshot_weights);
        assert_eq!(p.snapshot_weights.as_ref(), Some(&p.weights));
        for a in 0..3 {
            let ratio = (p.log_prob(f.view(), a, 1.0).unwrap()
                - p.snapshot_log_prob(f.view(), a, 1.0).unwrap())
            .exp();
            assert_eq!(ratio, 1.0);
        }
    }

    #[test]
    fn greedy_breaks_ties_low() {
        let mut p = PolicyParams::zeros(3, 1);
        assert_eq!(p.greedy_action(array![1.0].view()), 0);
        p.weights[[2, 0]] = 1.0;
        p.weights[[1, 0]] = 1.0;
        assert_eq!(p.greedy_action(array![1.0].view()), 1);
    }
}
