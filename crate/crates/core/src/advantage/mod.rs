//! Advantage estimators and the estimator lab.

mod estimators;
pub mod lab;

pub use estimators::{
    acloo, grpo_normalize, grpo_normalize_with, leave_one_out, mc_value_advantage, rloo_rewards,
    AdvantageRecord, EstimatorTag, QGroup, StdKind,
};
pub use lab::{
    exact_gradient, gradient_stats, BanditOracle, GradientStats, LabConfig, LabEstimator,
};
