//! Gradient-clipped first-order optimizers.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Parameter containers the optimizer can update as one flat vector.
pub trait ParamSet {
    fn slices(&self) -> Vec<&[f64]>;
    fn slices_mut(&mut self) -> Vec<&mut [f64]>;

    fn len(&self) -> usize {
        self.slices().iter().map(|s| s.len()).sum()
    }

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn l2_norm(&self) -> f64 {
        self.slices()
            .iter()
            .flat_map(|s| s.iter())
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt()
    }
}

impl ParamSet for Array2<f64> {
    fn slices(&self) -> Vec<&[f64]> {
        vec![self
            .as_slice()
            .expect("parameters are kept in standard layout")]
    }

    fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        vec![self
            .as_slice_mut()
            .expect("parameters are kept in standard layout")]
    }
}

impl ParamSet for Array1<f64> {
    fn slices(&self) -> Vec<&[f64]> {
        vec![self
            .as_slice()
            .expect("parameters are kept in standard layout")]
    }

    fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        vec![self
            .as_slice_mut()
            .expect("parameters are kept in standard layout")]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    #[default]
    Sgd,
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    pub grad_clip_norm: f64,
    pub step_count: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    first_moment: Vec<f64>,
    second_moment: Vec<f64>,
}

impl OptimizerState {
    pub fn sgd(learning_rate: f64, grad_clip_norm: f64) -> Self {
        Self::new(OptimizerKind::Sgd, learning_rate, grad_clip_norm)
    }

    pub fn new(kind: OptimizerKind, learning_rate: f64, grad_clip_norm: f64) -> Self {
        Self {
            kind,
            learning_rate,
            grad_clip_norm,
            step_count: 0,
            beta1: 0.9,
            beta2: 0.95,
            epsilon: 1e-8,
            first_moment: Vec::new(),
            second_moment: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config(format!(
                "learning rate must be non-negative, got {}",
                self.learning_rate
            )));
        }
        if !(self.grad_clip_norm > 0.0) {
            return Err(Error::config(format!(
                "gradient clip norm must be positive, got {}",
                self.grad_clip_norm
            )));
        }
        Ok(())
    }
}

/// Rescales `gradient` to global L2 norm at most `grad_clip_norm`, then takes
/// one optimizer step. A non-finite gradient is rejected before any
/// parameter changes.
pub fn apply_update<P: ParamSet>(
    params: &mut P,
    gradient: &P,
    opt: &mut OptimizerState,
) -> Result<()> {
    let grads: Vec<f64> = gradient
        .slices()
        .iter()
        .flat_map(|s| s.iter().copied())
        .collect();
    if grads.len() != params.len() {
        return Err(Error::LengthMismatch {
            left: params.len(),
            right: grads.len(),
        });
    }
    if grads.iter().any(|g| !g.is_finite()) {
        return Err(Error::numeric("non-finite gradient"));
    }
    let norm = grads.iter().map(|g| g * g).sum::<f64>().sqrt();
    let scale = if norm > opt.grad_clip_norm {
        opt.grad_clip_norm / norm
    } else {
        1.0
    };
    opt.step_count += 1;
    let lr = opt.learning_rate;
    match opt.kind {
        OptimizerKind::Sgd => {
            let mut it = grads.iter();
            for slice in params.slices_mut() {
                for (p, g) in slice.iter_mut().zip(&mut it) {
                    *p -= lr * scale * g;
                }
            }
        }
        OptimizerKind::Adam => {
            if opt.first_moment.len() != grads.len() {
                opt.first_moment = vec![0.0; grads.len()];
                opt.second_moment = vec![0.0; grads.len()];
            }
            let (b1, b2, eps) = (opt.beta1, opt.beta2, opt.epsilon);
            let t = opt.step_count as i32;
            let (c1, c2) = (1.0 - b1.powi(t), 1.0 - b2.powi(t));
            let mut i = 0;
            for slice in params.slices_mut() {
                for p in slice.iter_mut() {
                    let g = scale * grads[i];
                    let m = &mut opt.first_moment[i];
                    *m = b1 * *m + (1.0 - b1) * g;
                    let v = &mut opt.second_moment[i];
                    *v = b2 * *v + (1.0 - b2) * g * g;
                    *p -= lr * (opt.first_moment[i] / c1)
                        / ((opt.second_moment[i] / c2).sqrt() + eps);
                    i += 1;
                }
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn clipped_step_has_lr_norm() {
        let mut p = array![[0.0, 0.0]];
        let g = array![[2.0, 0.0]];
        let mut opt = OptimizerState::sgd(0.1, 1.0);
        apply_update(&mut p, &g, &mut opt).unwrap();
        assert!((p.l2_norm() - 0.1).abs() < 1e-15);
        assert_eq!(opt.step_count, 1);
    }

    #[test]
    fn zero_gradient_and_zero_rate_leave_params() {
        let mut p = array![[1.0, -2.0]];
        let mut opt = OptimizerState::sgd(0.1, 1.0);
        apply_update(&mut p, &array![[0.0, 0.0]], &mut opt).unwrap();
        assert_eq!(p, array![[1.0, -2.0]]);
        let mut opt = OptimizerState::sgd(0.0, 1.0);
        apply_update(&mut p, &array![[3.0, 4.0]], &mut opt).unwrap();
        assert_eq!(p, array![[1.0, -2.0]]);
        assert_eq!(opt.step_count, 1);
    }

    #[test]
    fn non_finite_gradient_rejected_before_mutation() {
        let mut p = array![[1.0, 1.0]];
        let mut opt = OptimizerState::sgd(0.1, 1.0);
        assert!(apply_update(&mut p, &array![[f64::NAN, 0.0]], &mut opt).is_err());
        assert_eq!(p, array![[1.0, 1.0]]);
        assert_eq!(opt.step_count, 0);
    }

    #[test]
    fn adam_moves_against_gradient() {
        let mut p = array![0.0, 0.0];
        let mut opt = OptimizerState::new(OptimizerKind::Adam, 0.01, 1.0);
        for _ in 0..3 {
            apply_update(&mut p, &array![1.0, -1.0], &mut opt).unwrap();
        }
        assert!(p[0] < 0.0 && p[1] > 0.0);
        assert!((p[0] + 0.03).abs() < 1e-6);
    }
}
