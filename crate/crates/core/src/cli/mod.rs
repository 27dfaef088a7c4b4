//! Command-line front end: argument parsing, configuration and exit codes.

pub mod charts;
mod commands;
pub mod config;
pub mod output;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use commands::execute;
pub use config::RunConfig;

use crate::error::Error;

pub mod exit {
    pub const OK: i32 = 0;
    pub const IO: i32 = 1;
    pub const INVALID_CONFIG: i32 = 2;
    pub const NUMERIC: i32 = 3;
    pub const LEMMA_FAILURE: i32 = 4;
    pub const DEGENERATE_DATASET: i32 = 5;
}

#[derive(Debug, Parser)]
#[command(
    name = "ssma-rl",
    version,
    about = "SSMA actor-critic training on a synthetic GUI environment"
)]
pub struct Cli {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Output directory (overrides `out` in the configuration).
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Root seed (overrides every seed in the configuration except the pool's).
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    /// Only report errors.
    #[arg(long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Train one method to its iteration or time budget.
    Train,
    /// Train several methods on one pool and compare time to target.
    Compare,
    /// Check the estimator properties by Monte Carlo.
    EstimatorLab,
    /// Build the step-label dataset and train the process reward model.
    Prm,
    /// Greedy evaluation of a saved policy on the held-out tasks.
    Eval,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Train => "train",
            Command::Compare => "compare",
            Command::EstimatorLab => "estimator-lab",
            Command::Prm => "prm",
            Command::Eval => "eval",
        }
    }
}

/// Process exit code for an error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::InvalidConfig(_) | Error::UnknownEstimator(_) => exit::INVALID_CONFIG,
        Error::Io { .. } | Error::Format { .. } => exit::IO,
        Error::DegenerateDataset(_) => exit::DEGENERATE_DATASET,
        Error::Numeric(_)
        | Error::CorruptRecord(_)
        | Error::EpisodeFinished
        | Error::InvalidAction { .. }
        | Error::IncompleteTrajectory { .. }
        | Error::InsufficientGroup { .. }
        | Error::LengthMismatch { .. } => exit::NUMERIC,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_code_contract() {
        assert_eq!(exit_code(&Error::config("x")), 2);
        assert_eq!(exit_code(&Error::numeric("x")), 3);
        assert_eq!(exit_code(&Error::io("p", std::io::Error::other("x"))), 1);
        assert_eq!(exit_code(&Error::DegenerateDataset("x".into())), 5);
    }

    #[test]
    fn global_flags_parse_after_subcommand() {
        let cli = Cli::try_parse_from(["ssma-rl", "train", "--seed", "4", "--quiet", "--out", "o"])
            .unwrap();
        assert_eq!(cli.command, Command::Train);
        assert_eq!(cli.seed, Some(4));
        assert!(cli.quiet);
        let cli = Cli::try_parse_from(["ssma-rl", "--config", "c.toml", "estimator-lab"]).unwrap();
        assert_eq!(cli.command, Command::EstimatorLab);
        assert_eq!(cli.config, Some(PathBuf::from("c.toml")));
    }
}
