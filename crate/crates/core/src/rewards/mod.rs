//! Return targets and the process reward model.

mod prm;
mod returns;

pub use prm::{
    accuracy, build_prm_dataset, pretrain_critic, prm_score, read_dataset_jsonl, split_holdout,
    train_prm, write_dataset_jsonl, CriticInit, PretrainConfig, PrmDataset, PrmParams, PrmReport,
    PrmTrainConfig, StepLabelRecord,
};
pub use returns::{compute_returns, DiscountMode, RewardWeights};
