//! Linear-softmax policy, linear Q critic, and their optimizer.

mod critic;
mod features;
pub mod io;
mod optim;
mod policy;

pub use critic::{clipped_value_loss, CriticLoss, CriticParams, ValueBranch};
pub use features::FeatureMap;
pub use optim::{apply_update, OptimizerKind, OptimizerState, ParamSet};
pub use policy::{sample_index, softmax, PolicyParams};
