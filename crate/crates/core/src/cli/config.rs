//! Run configuration document.
//!
//! TOML with one table per concern: `[train]`, `[train.reward]`,
//! `[train.prm]`, `[latency]`, `[pool]`, `[lab]`, `[compare]` and `[eval]`.
//! Every table rejects unknown keys, so a typo names the offending key.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::advantage::LabConfig;
use crate::env::{generate_task_pool, LatencyModel, PoolParams, TaskSpec};
use crate::error::{Error, Result};
use crate::trainer::{Method, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PoolConfig {
    pub seed: u64,
    pub count: usize,
    pub min_screens: usize,
    pub max_screens: usize,
    pub actions: usize,
    pub terminal_action: Option<usize>,
    pub tasks_per_family: usize,
}

impl Default for PoolConfig {
    fn default() -> Self {
        let p = PoolParams::default();
        Self {
            seed: 7,
            count: 48,
            min_screens: p.min_screens,
            max_screens: p.max_screens,
            actions: p.actions,
            terminal_action: p.terminal_action,
            tasks_per_family: p.tasks_per_family,
        }
    }
}

impl PoolConfig {
    /// Generator parameters; the step budget comes from `train.max_turns`.
    pub fn params(&self, max_turns: usize) -> PoolParams {
        PoolParams {
            min_screens: self.min_screens,
            max_screens: self.max_screens,
            actions: self.actions,
            terminal_action: self.terminal_action,
            max_steps: max_turns,
            tasks_per_family: self.tasks_per_family,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CompareConfig {
    pub methods: Vec<Method>,
    pub seeds: Vec<u64>,
    /// Simulated seconds per run.
    pub time_budget: f64,
    pub target_success_rate: f64,
}

impl Default for CompareConfig {
    fn default() -> Self {
        Self {
            methods: vec![Method::AndroidCoach, Method::Ppo, Method::Grpo],
            seeds: vec![1, 2, 3, 4, 5],
            time_budget: 60_000.0,
            target_success_rate: 0.8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub episodes_per_task: usize,
    /// Checkpoint directory; defaults to `<out>/checkpoint`.
    pub checkpoint: Option<PathBuf>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            episodes_per_task: 1,
            checkpoint: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Output directory; `--out` takes precedence.
    pub out: Option<PathBuf>,
    pub train: TrainConfig,
    pub latency: LatencyModel,
    pub pool: PoolConfig,
    pub lab: LabConfig,
    pub compare: CompareConfig,
    pub eval: EvalConfig,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::config(e.message().to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| match e {
            Error::InvalidConfig(msg) => Error::config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// Replaces every seed in the document with `seed`. The pool seed is
    /// left alone so that all runs share one task pool.
    pub fn override_seed(&mut self, seed: u64) {
        self.train.seed = seed;
        self.lab.seed = seed;
        self.compare.seeds = vec![seed];
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.latency.validate()?;
        self.pool.params(self.train.max_turns).validate()?;
        if self.pool.count == 0 {
            return Err(Error::config("pool.count must be >= 1"));
        }
        self.lab.validate()?;
        let c = &self.compare;
        if c.seeds.is_empty() {
            return Err(Error::config("compare.seeds must not be empty"));
        }
        if !(c.time_budget.is_finite() && c.time_budget >= 0.0) {
            return Err(Error::config(
                "compare.time_budget must be finite and non-negative",
            ));
        }
        if !(0.0..=1.0).contains(&c.target_success_rate) {
            return Err(Error::config(
                "compare.target_success_rate must lie in [0, 1]",
            ));
        }
        if self.eval.episodes_per_task == 0 {
            return Err(Error::config("eval.episodes_per_task must be >= 1"));
        }
        Ok(())
    }

    pub fn task_pool(&self) -> Result<Vec<TaskSpec>> {
        generate_task_pool(
            self.pool.seed,
            self.pool.count,
            &self.pool.params(self.train.max_turns),
        )
    }

    /// The resolved document, as written into every run directory.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run configuration serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_is_the_default() {
        let c = RunConfig::parse("").unwrap();
        assert_eq!(c, RunConfig::default());
        c.validate().unwrap();
    }

    #[test]
    fn unknown_key_is_named() {
        let err = RunConfig::parse("[train]\nepsilonn = 0.2\n")
            .unwrap_err()
            .to_string();
        assert!(err.contains("epsilonn"), "{err}");
        let err = RunConfig::parse("bogus = 1\n").unwrap_err().to_string();
        assert!(err.contains("bogus"), "{err}");
    }

    #[test]
    fn dotted_sections_parse() {
        let text = "[train]\nmethod = \"ppo\"\nk = 8\n[train.reward]\nomega_p = 0.0\n[latency]\ninference_cost = 3.0\n\
                    [pool]\ncount = 12\n[compare]\nmethods = [\"ppo\", \"grpo\"]\n";
        let c = RunConfig::parse(text).unwrap();
        assert_eq!(c.train.method, Method::Ppo);
        assert_eq!(c.train.k, 8);
        assert_eq!(c.train.reward.omega_p, 0.0);
        assert_eq!(c.latency.inference_cost, 3.0);
        assert_eq!(c.pool.count, 12);
        assert_eq!(c.compare.methods, [Method::Ppo, Method::Grpo]);
    }

    #[test]
    fn resolved_document_round_trips() {
        let mut c = RunConfig::default();
        c.override_seed(11);
        c.train.actor_lr = Some(0.25);
        assert_eq!(RunConfig::parse(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn invalid_values_rejected() {
        let c = RunConfig::parse("[lab]\nsamples = 0\n").unwrap();
        assert!(matches!(c.validate(), Err(Error::InvalidConfig(_))));
        let c = RunConfig::parse("[train]\nclip_ratio = 1.5\n").unwrap();
        assert!(c.validate().is_err());
    }
}
