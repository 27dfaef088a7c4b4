//! Step-labelled dataset, the process reward classifier, and critic warm start.

use std::io::{BufRead, Write};

use ndarray::{Array1, Array2, ArrayView1};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::returns::RewardWeights;
use crate::env::{ActionIndex, ScreenId, TaskSpec};
use crate::error::{Error, Result};
use crate::model::{
    apply_update, sample_index, CriticParams, FeatureMap, OptimizerState, ParamSet, PolicyParams,
};
use crate::rng::{self, domain};

/// One labelled `(state, action)` pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepLabelRecord {
    pub task_id: u64,
    pub screen: ScreenId,
    pub action: ActionIndex,
    /// 1 iff `action` is the oracle action on this screen.
    pub label: u8,
    #[serde(skip)]
    pub features: Array1<f64>,
}

impl StepLabelRecord {
    pub fn is_positive(&self) -> bool {
        self.label == 1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrmDataset {
    pub records: Vec<StepLabelRecord>,
    pub raw_positives: usize,
    pub raw_negatives: usize,
    /// Set when one class was empty and the records could not be balanced.
    pub degenerate: bool,
}

/// Samples candidate actions from `policy` on every state of every task's
/// oracle path, labels them against the oracle action, and down-samples the
/// majority class to a 1:1 ratio.
///
/// When one class is empty the unbalanced records are returned with
/// `degenerate` set; training on them fails.
pub fn build_prm_dataset(
    tasks: &[TaskSpec],
    policy: &PolicyParams,
    features: &FeatureMap,
    samples_per_state: usize,
    temperature: f64,
    seed: u64,
) -> Result<PrmDataset> {
    if tasks.is_empty() {
        return Err(Error::config(
            "cannot build a PRM dataset from an empty task list",
        ));
    }
    if samples_per_state == 0 {
        return Err(Error::config("prm.samples_per_state must be >= 1"));
    }
    let mut positives = Vec::new();
    let mut negatives = Vec::new();
    for (i, task) in tasks.iter().enumerate() {
        let oracle = task.oracle_actions();
        for (j, &screen) in task.oracle_path().iter().enumerate() {
            let Some(best) = oracle[screen] else { continue };
            let f = features.encode(task.task_id, screen)?;
            let probs = policy.action_distribution(f.view(), temperature)?;
            let mut rng = rng::stream(seed, &[domain::PRM_DATA, i as u64, j as u64]);
            for _ in 0..samples_per_state {
                let action = sample_index(&probs, &mut rng)?;
                let record = StepLabelRecord {
                    task_id: task.task_id,
                    screen,
                    action,
                    label: u8::from(action == best),
                    features: f.clone(),
                };
                if record.is_positive() {
                    positives.push(record);
                } else {
                    negatives.push(record);
                }
            }
        }
    }
    let (raw_positives, raw_negatives) = (positives.len(), negatives.len());
    let mut rng = rng::stream(seed, &[domain::PRM_DATA, u64::MAX]);
    let keep = raw_positives.min(raw_negatives);
    if keep == 0 {
        log::warn!("PRM dataset is single-class ({raw_positives} positive, {raw_negatives} negative); cannot balance");
        let mut records = positives;
        records.append(&mut negatives);
        return Ok(PrmDataset {
            records,
            raw_positives,
            raw_negatives,
            degenerate: true,
        });
    }
    positives.shuffle(&mut rng);
    negatives.shuffle(&mut rng);
    positives.truncate(keep);
    negatives.truncate(keep);
    let mut records = positives;
    records.append(&mut negatives);
    records.shuffle(&mut rng);
    Ok(PrmDataset {
        records,
        raw_positives,
        raw_negatives,
        degenerate: false,
    })
}

/// Splits off the last `holdout_fraction` of a seeded permutation.
pub fn split_holdout(
    records: &[StepLabelRecord],
    holdout_fraction: f64,
    seed: u64,
) -> (Vec<StepLabelRecord>, Vec<StepLabelRecord>) {
    let mut shuffled = records.to_vec();
    shuffled.shuffle(&mut rng::stream(seed, &[domain::SPLIT]));
    let held = ((records.len() as f64) * holdout_fraction).round() as usize;
    let held_out = shuffled.split_off(records.len() - held.min(records.len()));
    (shuffled, held_out)
}

/// Per-action logistic classifier `P(label = 1 | s, a) = σ(β_a·f(s) + b_a)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrmParams {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl ParamSet for PrmParams {
    fn slices(&self) -> Vec<&[f64]> {
        vec![
            self.weights.as_slice().expect("standard layout"),
            self.bias.as_slice().expect("standard layout"),
        ]
    }

    fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        vec![
            self.weights.as_slice_mut().expect("standard layout"),
            self.bias.as_slice_mut().expect("standard layout"),
        ]
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

impl PrmParams {
    pub fn zeros(actions: usize, dim: usize) -> Self {
        Self {
            weights: Array2::zeros((actions, dim)),
            bias: Array1::zeros(actions),
        }
    }

    fn logit(&self, features: ArrayView1<f64>, action: ActionIndex) -> f64 {
        self.weights.row(action).dot(&features) + self.bias[action]
    }

    /// Probability that `action` is a correct step.
    pub fn score(&self, features: ArrayView1<f64>, action: ActionIndex) -> Result<f64> {
        if action >= self.weights.nrows() {
            return Err(Error::InvalidAction {
                action,
                actions: self.weights.nrows(),
            });
        }
        Ok(sigmoid(self.logit(features, action)))
    }

    /// Cross-entropy `−log P(label | s, a)` and its gradient.
    pub fn ce_loss_and_grad(&self, record: &StepLabelRecord) -> Result<(f64, PrmParams)> {
        let z = self.logit(record.features.view(), record.action);
        let y = f64::from(record.label);
        // −[y log σ(z) + (1−y) log(1−σ(z))] = softplus(z) − y z
        let loss = softplus(z) - y * z;
        let dz = sigmoid(z) - y;
        let mut grad = PrmParams::zeros(self.weights.nrows(), self.weights.ncols());
        grad.weights
            .row_mut(record.action)
            .scaled_add(dz, &record.features);
        grad.bias[record.action] = dz;
        Ok((loss, grad))
    }

    /// Matrix `[weights | bias]` for the binary parameter format.
    pub fn to_matrix(&self) -> Array2<f64> {
        ndarray::concatenate(
            ndarray::Axis(1),
            &[
                self.weights.view(),
                self.bias.view().insert_axis(ndarray::Axis(1)),
            ],
        )
        .expect("bias length equals weight rows")
    }

    pub fn from_matrix(m: &Array2<f64>) -> Result<Self> {
        if m.ncols() == 0 {
            return Err(Error::config("PRM matrix needs a bias column"));
        }
        let d = m.ncols() - 1;
        Ok(Self {
            weights: m.slice(ndarray::s![.., ..d]).to_owned(),
            bias: m.column(d).to_owned(),
        })
    }
}

/// Binary process reward: thresholded PRM score, flipped with probability
/// `prm_noise_rate` using a stream fixed by `noise_seed`.
pub fn prm_score(
    prm: &PrmParams,
    features: ArrayView1<f64>,
    action: ActionIndex,
    weights: &RewardWeights,
    noise_seed: u64,
) -> Result<f64> {
    let clean = prm.score(features, action)? > weights.prm_threshold;
    let mut rng = rng::stream(noise_seed, &[domain::PRM_NOISE]);
    let flip = weights.prm_noise_rate > 0.0 && rng.random::<f64>() < weights.prm_noise_rate;
    Ok(if clean != flip { 1.0 } else { 0.0 })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrmTrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerState,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrmReport {
    pub params: PrmParams,
    pub final_train_loss: f64,
    pub train_accuracy: f64,
    pub held_out_accuracy: Option<f64>,
}

/// Fraction of records whose thresholded score (at 0.5) matches the label.
pub fn accuracy(prm: &PrmParams, records: &[StepLabelRecord]) -> f64 {
    if records.is_empty() {
        return f64::NAN;
    }
    let correct = records
        .iter()
        .filter(|r| (prm.logit(r.features.view(), r.action) > 0.0) == r.is_positive())
        .count();
    correct as f64 / records.len() as f64
}

/// Minimizes mean cross-entropy with minibatch gradient steps from a zero
/// initialization.
pub fn train_prm(
    train: &[StepLabelRecord],
    held_out: &[StepLabelRecord],
    actions: usize,
    dim: usize,
    config: &PrmTrainConfig,
) -> Result<PrmReport> {
    check_two_classes(train)?;
    if config.batch_size == 0 {
        return Err(Error::config("prm.batch_size must be >= 1"));
    }
    let mut opt = config.optimizer.clone();
    opt.validate()?;
    let mut params = PrmParams::zeros(actions, dim);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut last_loss = f64::NAN;
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng::stream(
            config.seed,
            &[domain::PRM_DATA, epoch as u64],
        ));
        let mut epoch_loss = 0.0;
        for batch in order.chunks(config.batch_size) {
            let mut grad = PrmParams::zeros(actions, dim);
            for &i in batch {
                let (loss, g) = params.ce_loss_and_grad(&train[i])?;
                epoch_loss += loss;
                grad.weights += &g.weights;
                grad.bias += &g.bias;
            }
            let n = batch.len() as f64;
            grad.weights /= n;
            grad.bias /= n;
            apply_update(&mut params, &grad, &mut opt)?;
        }
        last_loss = epoch_loss / train.len() as f64;
    }
    Ok(PrmReport {
        train_accuracy: accuracy(&params, train),
        held_out_accuracy: (!held_out.is_empty()).then(|| accuracy(&params, held_out)),
        final_train_loss: last_loss,
        params,
    })
}

fn check_two_classes(records: &[StepLabelRecord]) -> Result<()> {
    let pos = records.iter().filter(|r| r.is_positive()).count();
    if records.is_empty() || pos == 0 || pos == records.len() {
        return Err(Error::DegenerateDataset(format!(
            "need both labels, found {pos} positive of {}",
            records.len()
        )));
    }
    Ok(())
}

/// How the critic is initialized before online training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CriticInit {
    /// Zero weights.
    None,
    /// Critic-only updates on rollouts of the initial policy (done by the trainer).
    OnlineWarmup,
    /// Regression onto the step labels.
    #[default]
    PrmPretrain,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PretrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerState,
    pub seed: u64,
}

/// Warm-starts the critic by regressing `Q(s, a)` onto the binary step labels
/// with unclipped squared error. Modes other than `PrmPretrain` return the
/// critic unchanged; the online warm-up needs rollouts and lives in the
/// trainer.
pub fn pretrain_critic(
    critic: &CriticParams,
    dataset: &[StepLabelRecord],
    mode: CriticInit,
    config: &PretrainConfig,
) -> Result<CriticParams> {
    if mode != CriticInit::PrmPretrain {
        return Ok(critic.clone());
    }
    if dataset.is_empty() {
        return Err(Error::DegenerateDataset(
            "critic pretraining needs at least one record".into(),
        ));
    }
    if config.batch_size == 0 {
        return Err(Error::config("critic pretraining batch size must be >= 1"));
    }
    let mut out = critic.clone();
    let mut opt = config.optimizer.clone();
    opt.validate()?;
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng::stream(
            config.seed,
            &[domain::WARMUP, epoch as u64],
        ));
        for batch in order.chunks(config.batch_size) {
            let mut grad = Array2::zeros(out.weights.raw_dim());
            for &i in batch {
                let r = &dataset[i];
                let (_, g) =
                    out.mse_loss_and_grad(r.features.view(), r.action, f64::from(r.label))?;
                grad += &g;
            }
            grad /= batch.len() as f64;
            apply_update(&mut out.weights, &grad, &mut opt)?;
            out.version += 1;
        }
    }
    Ok(out)
}

/// Writes records as JSON lines `{task_id, screen, action, label}`.
pub fn write_dataset_jsonl<W: Write>(
    mut out: W,
    records: &[StepLabelRecord],
) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Reads JSON-lines records and re-derives their features.
pub fn read_dataset_jsonl<R: BufRead>(
    input: R,
    features: &FeatureMap,
) -> Result<Vec<StepLabelRecord>> {
    let mut out = Vec::new();
    for line in input.lines() {
        let line = line.map_err(|e| Error::io("<dataset>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let mut r: StepLabelRecord = serde_json::from_str(&line).map_err(|e| Error::Format {
            path: "<dataset>".into(),
            reason: e.to_string(),
        })?;
        r.features = features.encode(r.task_id, r.screen)?;
        out.push(r);
    }
    Ok(out)
}
