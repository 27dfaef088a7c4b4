//! Model checkpoints: binary parameter files plus a JSON trainer state.

use std::fs;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::config::Method;
use super::state::TrainerState;
use crate::env::SimClock;
use crate::error::{Error, Result};
use crate::model::io::{read_matrix, write_matrix};
use crate::model::OptimizerState;
use crate::rewards::PrmParams;

pub const POLICY_FILE: &str = "policy.bin";
pub const CRITIC_FILE: &str = "critic.bin";
pub const VALUE_FILE: &str = "value.bin";
pub const PRM_FILE: &str = "prm.bin";
pub const STATE_FILE: &str = "trainer_state.json";

/// JSON part of a checkpoint. Random streams are derived from the root seed
/// and the iteration counter, so these two fields restore them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainerCheckpoint {
    pub method: Method,
    pub iteration: u64,
    pub seed: u64,
    pub clock: SimClock,
    pub critic_version: u64,
    pub actor_optimizer: OptimizerState,
    pub critic_optimizer: OptimizerState,
}

pub fn save_checkpoint(dir: &Path, state: &TrainerState) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_matrix(&dir.join(POLICY_FILE), &state.policy.weights)?;
    write_matrix(&dir.join(CRITIC_FILE), &state.critic.weights)?;
    write_matrix(
        &dir.join(VALUE_FILE),
        &state.value.clone().insert_axis(ndarray::Axis(0)),
    )?;
    if let Some(prm) = &state.prm {
        write_matrix(&dir.join(PRM_FILE), &prm.to_matrix())?;
    }
    let doc = TrainerCheckpoint {
        method: state.config.method,
        iteration: state.iteration,
        seed: state.config.seed,
        clock: state.clock,
        critic_version: state.critic.version,
        actor_optimizer: state.actor_opt.clone(),
        critic_optimizer: state.critic_opt.clone(),
    };
    let path = dir.join(STATE_FILE);
    let text = serde_json::to_string_pretty(&doc).expect("checkpoint serializes");
    fs::write(&path, text).map_err(|e| Error::io(path, e))
}

fn check_shape(path: &Path, m: &Array2<f64>, shape: (usize, usize)) -> Result<()> {
    if m.dim() != shape {
        return Err(Error::Format {
            path: path.to_path_buf(),
            reason: format!("expected shape {shape:?}, found {:?}", m.dim()),
        });
    }
    Ok(())
}

/// Restores parameters, optimizers and clock into a state built from the
/// same configuration and pool.
pub fn load_checkpoint(dir: &Path, state: &mut TrainerState) -> Result<()> {
    let path = dir.join(STATE_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let doc: TrainerCheckpoint = serde_json::from_str(&text).map_err(|e| Error::Format {
        path: path.clone(),
        reason: e.to_string(),
    })?;
    if doc.method != state.config.method || doc.seed != state.config.seed {
        return Err(Error::config(
            "checkpoint was written by a different method or seed",
        ));
    }
    let shape = state.policy.weights.dim();
    let p = dir.join(POLICY_FILE);
    let policy = read_matrix(&p)?;
    check_shape(&p, &policy, shape)?;
    let c = dir.join(CRITIC_FILE);
    let critic = read_matrix(&c)?;
    check_shape(&c, &critic, shape)?;
    let v = dir.join(VALUE_FILE);
    let value = read_matrix(&v)?;
    check_shape(&v, &value, (1, shape.1))?;
    let prm_path = dir.join(PRM_FILE);
    if prm_path.exists() {
        let m = read_matrix(&prm_path)?;
        check_shape(&prm_path, &m, (shape.0, shape.1 + 1))?;
        state.prm = Some(PrmParams::from_matrix(&m)?);
    }
    state.policy.weights = policy;
    state.policy.snapshot_weights = None;
    state.critic.weights = critic;
    state.critic.version = doc.critic_version;
    state.value = value.row(0).to_owned();
    state.iteration = doc.iteration;
    state.clock = doc.clock;
    state.actor_opt = doc.actor_optimizer;
    state.critic_opt = doc.critic_optimizer;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{generate_task_pool, LatencyModel, PoolParams};
    use crate::par::Workers;
    use crate::trainer::{run_iteration, split_by_family, TrainConfig};

    fn fresh() -> TrainerState {
        let pool = generate_task_pool(7, 12, &PoolParams::default()).unwrap();
        let (train, eval) = split_by_family(&pool);
        let cfg = TrainConfig {
            pretrain_epochs: 2,
            ..TrainConfig::default()
        };
        TrainerState::new(
            cfg,
            LatencyModel::default(),
            train,
            eval,
            Workers::sequential(),
        )
        .unwrap()
    }

    #[test]
    fn resumed_run_matches_uninterrupted_run() {
        let dir = tempfile::tempdir().unwrap();
        let mut a = fresh();
        run_iteration(&mut a).unwrap();
        save_checkpoint(dir.path(), &a).unwrap();
        let mut b = fresh();
        load_checkpoint(dir.path(), &mut b).unwrap();
        assert_eq!(b.policy.weights, a.policy.weights);
        assert_eq!(b.clock, a.clock);
        let ra = run_iteration(&mut a).unwrap().row;
        let rb = run_iteration(&mut b).unwrap().row;
        assert_eq!(
            serde_json::to_string(&ra).unwrap(),
            serde_json::to_string(&rb).unwrap()
        );
    }

    #[test]
    fn shape_mismatch_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let a = fresh();
        save_checkpoint(dir.path(), &a).unwrap();
        write_matrix(&dir.path().join(POLICY_FILE), &Array2::zeros((2, 2))).unwrap();
        let mut b = fresh();
        assert!(matches!(
            load_checkpoint(dir.path(), &mut b),
            Err(Error::Format { .. })
        ));
    }
}
