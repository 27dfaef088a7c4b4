//! Clipped-ratio policy update.

use ndarray::{Array1, Array2};

use crate::advantage::AdvantageRecord;
use crate::env::SimClock;
use crate::error::{Error, Result};
use crate::model::{apply_update, OptimizerState, PolicyParams};

/// One actor training sample.
#[derive(Debug, Clone, PartialEq)]
pub struct ActorSample {
    pub features: Array1<f64>,
    pub record: AdvantageRecord,
}

/// `min(ρA, clip(ρ, 1 − ε, 1 + ε)A)` and whether the gradient flows through
/// `ρ` (the unclipped branch attains the min; ties count as unclipped).
pub fn clipped_objective(ratio: f64, advantage: f64, clip: f64) -> (f64, bool) {
    let unclipped = ratio * advantage;
    let clipped = ratio.clamp(1.0 - clip, 1.0 + clip) * advantage;
    if clipped < unclipped {
        (clipped, false)
    } else {
        (unclipped, true)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ActorStats {
    /// Mean of the negated objective over the first epoch.
    pub mean_loss: f64,
    /// Largest `|ρ − 1|` seen in the first epoch.
    pub first_epoch_ratio_gap: f64,
    pub steps: u64,
}

/// Gradient ascent on the mean clipped objective, one full-batch step per
/// epoch, each step charged `update_cost` on `clock`.
#[allow(clippy::too_many_arguments)]
pub fn actor_update(
    policy: &mut PolicyParams,
    samples: &[ActorSample],
    clip: f64,
    temperature: f64,
    epochs: usize,
    opt: &mut OptimizerState,
    clock: &mut SimClock,
    update_cost: f64,
) -> Result<ActorStats> {
    if !(clip > 0.0 && clip < 1.0) {
        return Err(Error::config(format!(
            "clip ratio must lie in (0, 1), got {clip}"
        )));
    }
    let mut stats = ActorStats::default();
    if samples.is_empty() {
        return Ok(stats);
    }
    let n = samples.len() as f64;
    for epoch in 0..epochs {
        let mut grad = Array2::<f64>::zeros(policy.weights.raw_dim());
        let mut loss = 0.0;
        let mut gap: f64 = 0.0;
        for s in samples {
            let r = &s.record;
            if !r.old_logprob.is_finite() || !r.advantage.is_finite() {
                return Err(Error::CorruptRecord(format!(
                    "old log-prob {} / advantage {} for action {}",
                    r.old_logprob, r.advantage, r.action
                )));
            }
            let logp = policy.log_prob(s.features.view(), r.action, temperature)?;
            let ratio = (logp - r.old_logprob).exp();
            if !ratio.is_finite() {
                return Err(Error::numeric(format!(
                    "non-finite importance ratio for action {}",
                    r.action
                )));
            }
            gap = gap.max((ratio - 1.0).abs());
            let (obj, flows) = clipped_objective(ratio, r.advantage, clip);
            loss -= obj;
            if flows && r.advantage != 0.0 {
                let g = policy.grad_log_prob_at(s.features.view(), r.action, temperature)?;
                // descent direction of −ρA
                grad.scaled_add(-ratio * r.advantage, &g);
            }
        }
        grad /= n;
        if epoch == 0 {
            stats.mean_loss = loss / n;
            stats.first_epoch_ratio_gap = gap;
        }
        apply_update(&mut policy.weights, &grad, opt)?;
        clock.charge_update(update_cost);
        stats.steps += 1;
    }
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::advantage::EstimatorTag;
    use ndarray::array;

    #[test]
    fn objective_examples() {
        assert_eq!(clipped_objective(1.5, 1.0, 0.2), (1.2, false));
        let (v, flows) = clipped_objective(0.5, -1.0, 0.2);
        assert!((v + 0.8).abs() < 1e-15 && !flows);
        assert_eq!(clipped_objective(1.0, 0.7, 0.2), (0.7, true));
        // outside the interval but on the side the min does not select
        assert_eq!(clipped_objective(1.5, -1.0, 0.2), (-1.5, true));
        assert_eq!(clipped_objective(0.5, 1.0, 0.2), (0.5, true));
    }

    fn sample(adv: f64, old_logprob: f64) -> ActorSample {
        ActorSample {
            features: array![1.0],
            record: AdvantageRecord {
                action: 0,
                advantage: adv,
                old_logprob,
                estimator: EstimatorTag::Acloo,
            },
        }
    }

    #[test]
    fn clipped_records_do_not_move_the_policy() {
        let mut policy = PolicyParams::zeros(2, 1);
        // ρ = 0.5 / 0.25 = 2 > 1.2 with A > 0
        let s = sample(1.0, 0.25f64.ln());
        let before = policy.weights.clone();
        let mut opt = OptimizerState::sgd(0.1, 1.0);
        let mut clock = SimClock::new();
        actor_update(&mut policy, &[s], 0.2, 1.0, 1, &mut opt, &mut clock, 2.0).unwrap();
        assert_eq!(policy.weights, before);
        assert_eq!(clock.update_time, 2.0);
    }

    #[test]
    fn on_policy_step_raises_advantaged_action() {
        let mut policy = PolicyParams::zeros(2, 1);
        let s = sample(1.0, 0.5f64.ln());
        let mut opt = OptimizerState::sgd(0.1, 1.0);
        let stats = actor_update(
            &mut policy,
            &[s],
            0.2,
            1.0,
            1,
            &mut opt,
            &mut SimClock::new(),
            0.0,
        )
        .unwrap();
        assert!(stats.first_epoch_ratio_gap < 1e-12);
        assert!((stats.mean_loss + 1.0).abs() < 1e-12);
        assert!(policy.weights[[0, 0]] > 0.0 && policy.weights[[1, 0]] < 0.0);
    }

    #[test]
    fn infinite_old_logprob_is_corrupt() {
        let mut policy = PolicyParams::zeros(2, 1);
        let s = sample(1.0, f64::NEG_INFINITY);
        let mut opt = OptimizerState::sgd(0.1, 1.0);
        assert!(matches!(
            actor_update(
                &mut policy,
                &[s],
                0.2,
                1.0,
                1,
                &mut opt,
                &mut SimClock::new(),
                0.0
            ),
            Err(Error::CorruptRecord(_))
        ));
    }
}
