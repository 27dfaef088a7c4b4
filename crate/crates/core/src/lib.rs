//! Single-state multiple-action (SSMA) actor-critic training.
//!
//! The crate bundles a synthetic GUI-navigation environment with a simulated
//! latency clock, a linear-softmax policy with a linear Q critic, a process
//! reward classifier, leave-one-out advantage estimators, and a trainer that
//! runs the SSMA pipeline alongside single-action PPO and GRPO baselines.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod advantage;
pub mod cli;
pub mod env;
pub mod error;
pub mod model;
pub mod par;
pub mod rewards;
pub mod rng;
pub mod trainer;

pub use error::{Error, Result};
