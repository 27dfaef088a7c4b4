//! Monte-Carlo checks of the leave-one-out estimator on bandit problems with
//! exactly known gradients.

use std::io::Write;
use std::str::FromStr;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::estimators::leave_one_out;
use crate::error::{Error, Result};
use crate::par::Workers;
use crate::rng::{self, domain};

/// Single-state bandit with softmax probabilities and exact per-arm values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BanditOracle {
    pub probs: Vec<f64>,
    pub q: Vec<f64>,
}

impl BanditOracle {
    pub fn new(probs: Vec<f64>, q: Vec<f64>) -> Result<Self> {
        if probs.len() != q.len() {
            return Err(Error::LengthMismatch {
                left: probs.len(),
                right: q.len(),
            });
        }
        if probs.is_empty()
            || probs.iter().any(|&p| !(p > 0.0))
            || (probs.iter().sum::<f64>() - 1.0).abs() > 1e-9
        {
            return Err(Error::config(
                "bandit probabilities must be positive and sum to 1",
            ));
        }
        Ok(Self { probs, q })
    }

    /// Softmax of logits drawn from U(−2, 2), values from U(0, 1).
    pub fn random<R: Rng + ?Sized>(arms: usize, rng: &mut R) -> Self {
        let logits: Vec<f64> = (0..arms).map(|_| rng.random_range(-2.0..2.0)).collect();
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
        let s: f64 = e.iter().sum();
        Self {
            probs: e.iter().map(|x| x / s).collect(),
            q: (0..arms).map(|_| rng.random::<f64>()).collect(),
        }
    }

    pub fn arms(&self) -> usize {
        self.probs.len()
    }

    /// `J = Σ π_b Q_b`.
    pub fn value(&self) -> f64 {
        self.probs.iter().zip(&self.q).map(|(p, q)| p * q).sum()
    }
}

/// Gradient of `J` with respect to the softmax logits:
/// `∂J/∂z_a = π_a (Q_a − J)`.
pub fn exact_gradient(oracle: &BanditOracle) -> Vec<f64> {
    let j = oracle.value();
    oracle
        .probs
        .iter()
        .zip(&oracle.q)
        .map(|(p, q)| p * (q - j))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabEstimator {
    /// Leave-one-out baseline over the group's values.
    Acloo,
    /// Raw values as advantages.
    NoBaseline,
}

impl LabEstimator {
    pub fn tag(self) -> &'static str {
        match self {
            LabEstimator::Acloo => "acloo",
            LabEstimator::NoBaseline => "no_baseline",
        }
    }
}

impl FromStr for LabEstimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "acloo" => Ok(LabEstimator::Acloo),
            "no_baseline" => Ok(LabEstimator::NoBaseline),
            other => Err(Error::UnknownEstimator(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientStats {
    pub samples: u64,
    pub mean: Vec<f64>,
    /// Per-coordinate sample variance of one group estimate.
    pub variance: Vec<f64>,
}

impl GradientStats {
    /// Standard error of the mean, per coordinate.
    pub fn std_error(&self) -> Vec<f64> {
        self.variance
            .iter()
            .map(|v| (v / self.samples as f64).sqrt())
            .collect()
    }
}

#[derive(Debug, Clone)]
struct Welford {
    n: u64,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl Welford {
    fn new(dim: usize) -> Self {
        Self {
            n: 0,
            mean: vec![0.0; dim],
            m2: vec![0.0; dim],
        }
    }

    fn push(&mut self, x: &[f64]) {
        self.n += 1;
        let n = self.n as f64;
        for ((m, s), &v) in self.mean.iter_mut().zip(&mut self.m2).zip(x) {
            let d = v - *m;
            *m += d / n;
            *s += d * (v - *m);
        }
    }

    fn merge(&mut self, other: &Welford) {
        if other.n == 0 {
            return;
        }
        let (na, nb) = (self.n as f64, other.n as f64);
        let n = na + nb;
        for i in 0..self.mean.len() {
            let d = other.mean[i] - self.mean[i];
            self.mean[i] += d * nb / n;
            self.m2[i] += other.m2[i] + d * d * na * nb / n;
        }
        self.n += other.n;
    }
}

/// Number of sample shards; fixed so results do not depend on worker count.
const SHARDS: usize = 64;

/// Mean and variance of the group policy-gradient estimate
/// `(1/k) Σ_i Â_i ∇_z log π(a_i)` with `a_i` drawn i.i.d. from the oracle.
///
/// Samples are split over fixed shards, each with its own stream, and the
/// shard accumulators are merged in shard order.
pub fn gradient_stats(
    estimator: LabEstimator,
    oracle: &BanditOracle,
    k: usize,
    num_samples: u64,
    seed: u64,
    workers: &Workers,
) -> Result<GradientStats> {
    if num_samples < 1000 {
        return Err(Error::config(format!(
            "estimator lab needs at least 1000 samples, got {num_samples}"
        )));
    }
    if k < 2 {
        return Err(Error::InsufficientGroup { size: k, min: 2 });
    }
    let dist = WeightedIndex::new(&oracle.probs).map_err(|e| Error::numeric(e.to_string()))?;
    let arms = oracle.arms();
    let shards = workers.map_indexed(SHARDS, |s| {
        let n = num_samples / SHARDS as u64 + u64::from((s as u64) < num_samples % SHARDS as u64);
        let mut rng = rng::stream(seed, &[domain::LAB, s as u64]);
        let mut acc = Welford::new(arms);
        let mut actions = vec![0usize; k];
        let mut values = vec![0.0; k];
        let mut g = vec![0.0; arms];
        for _ in 0..n {
            for i in 0..k {
                actions[i] = dist.sample(&mut rng);
                values[i] = oracle.q[actions[i]];
            }
            let adv = match estimator {
                LabEstimator::Acloo => leave_one_out(&values).expect("k >= 2 and finite values"),
                LabEstimator::NoBaseline => values.clone(),
            };
            // ∇_z log π(a) = e_a − π
            let total: f64 = adv.iter().sum();
            for (b, gb) in g.iter_mut().enumerate() {
                *gb = -oracle.probs[b] * total;
            }
            for (&a, &ad) in actions.iter().zip(&adv) {
                g[a] += ad;
            }
            for gb in &mut g {
                *gb /= k as f64;
            }
            acc.push(&g);
        }
        acc
    });
    let mut total = Welford::new(arms);
    for s in &shards {
        total.merge(s);
    }
    let denom = (total.n - 1) as f64;
    Ok(GradientStats {
        samples: total.n,
        variance: total.m2.iter().map(|m| m / denom).collect(),
        mean: total.mean,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LabConfig {
    /// Oracles in the unbiasedness battery.
    pub oracles: usize,
    pub min_arms: usize,
    pub max_arms: usize,
    pub ks: Vec<usize>,
    pub samples: u64,
    /// Oracles in the variance battery.
    pub variance_oracles: usize,
    pub variance_k: usize,
    /// Minimum fraction of variance-battery oracles on which the baseline
    /// must not increase the summed per-coordinate variance.
    pub variance_pass_fraction: f64,
    /// Standard errors allowed between the MC mean and the exact gradient.
    pub z_tolerance: f64,
    /// Random groups in the shift-invariance battery.
    pub shift_groups: usize,
    pub seed: u64,
}

impl Default for LabConfig {
    fn default() -> Self {
        Self {
            oracles: 20,
            min_arms: 2,
            max_arms: 8,
            ks: vec![2, 4, 8],
            samples: 100_000,
            variance_oracles: 50,
            variance_k: 4,
            variance_pass_fraction: 0.95,
            z_tolerance: 3.0,
            shift_groups: 1000,
            seed: 7,
        }
    }
}

impl LabConfig {
    pub fn validate(&self) -> Result<()> {
        if self.samples < 1000 {
            return Err(Error::config(format!(
                "lab.samples must be >= 1000, got {}",
                self.samples
            )));
        }
        if self.min_arms < 2 || self.max_arms < self.min_arms {
            return Err(Error::config(
                "lab arm range must satisfy 2 <= min_arms <= max_arms",
            ));
        }
        if self.ks.iter().any(|&k| k < 2) || self.variance_k < 2 {
            return Err(Error::config("lab group sizes must be >= 2"));
        }
        if !(self.z_tolerance > 0.0) || !(0.0..=1.0).contains(&self.variance_pass_fraction) {
            return Err(Error::config("lab tolerances out of range"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabCheck {
    Unbiased,
    Variance,
}

/// One CSV row of the lab.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabRow {
    pub check: LabCheck,
    pub estimator: String,
    pub oracle_id: usize,
    pub k: usize,
    pub samples: u64,
    /// `‖mean − exact‖₂`.
    pub bias_norm: f64,
    /// Mean over coordinates of the per-coordinate variance.
    pub mean_variance: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabSummary {
    pub acloo_unbiased: bool,
    pub no_baseline_unbiased: bool,
    pub variance_fraction: f64,
    pub variance_ordering: bool,
    pub zero_sum: bool,
    pub shift_invariant: bool,
}

impl LabSummary {
    /// The gated checks: unbiasedness, variance ordering, zero-sum and shift
    /// invariance of the leave-one-out estimator.
    pub fn all_pass(&self) -> bool {
        self.acloo_unbiased && self.variance_ordering && self.zero_sum && self.shift_invariant
    }
}

fn random_oracle(cfg: &LabConfig, battery: u64, id: usize) -> BanditOracle {
    let mut rng = rng::stream(cfg.seed, &[domain::LAB, 1 << 32 | battery, id as u64]);
    let arms = rng.random_range(cfg.min_arms..=cfg.max_arms);
    BanditOracle::random(arms, &mut rng)
}

fn within(stats: &GradientStats, exact: &[f64], z: f64) -> bool {
    stats
        .mean
        .iter()
        .zip(exact)
        .zip(stats.std_error())
        .all(|((m, e), se)| (m - e).abs() <= z * se)
}

fn bias_norm(stats: &GradientStats, exact: &[f64]) -> f64 {
    stats
        .mean
        .iter()
        .zip(exact)
        .map(|(m, e)| (m - e).powi(2))
        .sum::<f64>()
        .sqrt()
}

fn mean_of(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Unbiasedness battery: every oracle × k × estimator.
pub fn unbiasedness_battery(cfg: &LabConfig, workers: &Workers) -> Result<Vec<LabRow>> {
    let mut rows = Vec::new();
    for id in 0..cfg.oracles {
        let oracle = random_oracle(cfg, 0, id);
        let exact = exact_gradient(&oracle);
        for &k in &cfg.ks {
            for est in [LabEstimator::Acloo, LabEstimator::NoBaseline] {
                let seed = rng::derive_seed(cfg.seed, &[domain::LAB, 2, id as u64, k as u64]);
                let stats = gradient_stats(est, &oracle, k, cfg.samples, seed, workers)?;
                rows.push(LabRow {
                    check: LabCheck::Unbiased,
                    estimator: est.tag().into(),
                    oracle_id: id,
                    k,
                    samples: stats.samples,
                    bias_norm: bias_norm(&stats, &exact),
                    mean_variance: mean_of(&stats.variance),
                    pass: within(&stats, &exact, cfg.z_tolerance),
                });
            }
        }
    }
    Ok(rows)
}

/// Variance battery: both estimators on the same oracle and sample stream; an
/// oracle passes when the baseline does not raise the summed variance.
pub fn variance_battery(cfg: &LabConfig, workers: &Workers) -> Result<Vec<LabRow>> {
    let mut rows = Vec::new();
    for id in 0..cfg.variance_oracles {
        let oracle = random_oracle(cfg, 1, id);
        let exact = exact_gradient(&oracle);
        let seed = rng::derive_seed(cfg.seed, &[domain::LAB, 3, id as u64]);
        let loo = gradient_stats(
            LabEstimator::Acloo,
            &oracle,
            cfg.variance_k,
            cfg.samples,
            seed,
            workers,
        )?;
        let raw = gradient_stats(
            LabEstimator::NoBaseline,
            &oracle,
            cfg.variance_k,
            cfg.samples,
            seed,
            workers,
        )?;
        // summed over coordinates; single coordinates of near-zero-value arms
        // can gain variance under the baseline
        let pass = mean_of(&loo.variance) <= mean_of(&raw.variance);
        for (est, stats) in [
            (LabEstimator::Acloo, &loo),
            (LabEstimator::NoBaseline, &raw),
        ] {
            rows.push(LabRow {
                check: LabCheck::Variance,
                estimator: est.tag().into(),
                oracle_id: id,
                k: cfg.variance_k,
                samples: stats.samples,
                bias_norm: bias_norm(stats, &exact),
                mean_variance: mean_of(&stats.variance),
                pass,
            });
        }
    }
    Ok(rows)
}

/// Zero-sum and shift checks on random groups with `k ∈ [2, 16]`.
///
/// Values are multiples of 2⁻²⁰ and shifts are integers up to 10⁶ in
/// magnitude, so every shifted value is exactly representable and the check
/// measures the estimator rather than rounding of its input.
pub fn exactness_battery(seed: u64, groups: usize) -> (bool, bool) {
    let mut rng = rng::stream(seed, &[domain::LAB, 4]);
    let (mut zero_sum, mut shift) = (true, true);
    for _ in 0..groups {
        let k = rng.random_range(2..=16usize);
        let q: Vec<f64> = (0..k)
            .map(|_| {
                rng.random_range(-(100i64 << 20)..=(100i64 << 20)) as f64 / (1u64 << 20) as f64
            })
            .collect();
        let c = rng.random_range(-1_000_000i64..=1_000_000) as f64;
        let a = leave_one_out(&q).expect("k >= 2");
        let max = q.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        zero_sum &= a.iter().sum::<f64>().abs() <= 1e-12 * k as f64 * max;
        let shifted: Vec<f64> = q.iter().map(|x| x + c).collect();
        let b = leave_one_out(&shifted).expect("k >= 2");
        shift &= a.iter().zip(&b).all(|(x, y)| (x - y).abs() <= 1e-12);
    }
    (zero_sum, shift)
}

/// Runs every battery and summarizes the gated checks.
pub fn run_lab(cfg: &LabConfig, workers: &Workers) -> Result<(Vec<LabRow>, LabSummary)> {
    cfg.validate()?;
    let mut rows = unbiasedness_battery(cfg, workers)?;
    let var_rows = variance_battery(cfg, workers)?;
    let (zero_sum, shift_invariant) = exactness_battery(cfg.seed, cfg.shift_groups);
    let unbiased = |tag: &str| rows.iter().filter(|r| r.estimator == tag).all(|r| r.pass);
    let oracles_passing = var_rows
        .iter()
        .filter(|r| r.estimator == "acloo" && r.pass)
        .count();
    let variance_fraction = if cfg.variance_oracles == 0 {
        1.0
    } else {
        oracles_passing as f64 / cfg.variance_oracles as f64
    };
    let summary = LabSummary {
        acloo_unbiased: unbiased("acloo"),
        no_baseline_unbiased: unbiased("no_baseline"),
        variance_fraction,
        variance_ordering: variance_fraction >= cfg.variance_pass_fraction,
        zero_sum,
        shift_invariant,
    };
    rows.extend(var_rows);
    Ok((rows, summary))
}

pub const LAB_CSV_HEADER: &str = "check,estimator,oracle_id,k,samples,bias_norm,mean_variance,pass";

pub fn write_lab_csv<W: Write>(mut out: W, rows: &[LabRow]) -> std::io::Result<()> {
    writeln!(out, "{LAB_CSV_HEADER}")?;
    for r in rows {
        let check = match r.check {
            LabCheck::Unbiased => "unbiased",
            LabCheck::Variance => "variance",
        };
        writeln!(
            out,
            "{check},{},{},{},{},{:e},{:e},{}",
            r.estimator,
            r.oracle_id,
            r.k,
            r.samples,
            r.bias_norm,
            r.mean_variance,
            if r.pass { "pass" } else { "fail" }
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Brute-force `∂J/∂z` by central differences on the softmax logits.
    fn numeric_gradient(oracle: &BanditOracle) -> Vec<f64> {
        let logits: Vec<f64> = oracle.probs.iter().map(|p| p.ln()).collect();
        let j = |z: &[f64]| {
            let s: f64 = z.iter().map(|x| x.exp()).sum();
            z.iter()
                .zip(&oracle.q)
                .map(|(x, q)| x.exp() / s * q)
                .sum::<f64>()
        };
        (0..logits.len())
            .map(|a| {
                let (mut up, mut dn) = (logits.clone(), logits.clone());
                up[a] += 1e-6;
                dn[a] -= 1e-6;
                (j(&up) - j(&dn)) / 2e-6
            })
            .collect()
    }

    #[test]
    fn exact_gradient_examples() {
        let o = BanditOracle::new(vec![0.5, 0.5], vec![1.0, 0.0]).unwrap();
        assert_eq!(exact_gradient(&o), vec![0.25, -0.25]);
        let o = BanditOracle::new(vec![1.0 / 3.0; 3], vec![3.0, 0.0, 0.0]).unwrap();
        assert!((o.value() - 1.0).abs() < 1e-15);
        let g = exact_gradient(&o);
        for (x, y) in g.iter().zip([2.0 / 3.0, -1.0 / 3.0, -1.0 / 3.0]) {
            assert!((x - y).abs() < 1e-15);
        }
        let o = BanditOracle::new(vec![0.25; 4], vec![0.7; 4]).unwrap();
        assert!(exact_gradient(&o).iter().all(|g| g.abs() < 1e-15));
    }

    #[test]
    fn exact_gradient_matches_finite_differences() {
        let mut rng = rng::stream(1, &[0]);
        for arms in 2..8 {
            let o = BanditOracle::random(arms, &mut rng);
            for (a, b) in exact_gradient(&o).iter().zip(numeric_gradient(&o)) {
                assert!((a - b).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn two_arm_estimator_is_unbiased_and_lower_variance() {
        let o = BanditOracle::new(vec![0.5, 0.5], vec![1.0, 0.0]).unwrap();
        let w = Workers::sequential();
        let loo = gradient_stats(LabEstimator::Acloo, &o, 4, 100_000, 3, &w).unwrap();
        let raw = gradient_stats(LabEstimator::NoBaseline, &o, 4, 100_000, 3, &w).unwrap();
        let exact = exact_gradient(&o);
        assert!(within(&loo, &exact, 3.0) && within(&raw, &exact, 3.0));
        assert!(loo.variance.iter().zip(&raw.variance).all(|(a, b)| a <= b));
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let o = BanditOracle::new(vec![0.2, 0.3, 0.5], vec![0.1, 0.9, 0.4]).unwrap();
        let a =
            gradient_stats(LabEstimator::Acloo, &o, 3, 5000, 9, &Workers::sequential()).unwrap();
        let b = gradient_stats(LabEstimator::Acloo, &o, 3, 5000, 9, &Workers::new(4)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.samples, 5000);
    }

    #[test]
    fn welford_merge_matches_single_pass() {
        let xs: Vec<f64> = (0..100).map(|i| ((i * 37) % 11) as f64 * 0.3).collect();
        let mut one = Welford::new(1);
        xs.iter().for_each(|x| one.push(&[*x]));
        let (mut a, mut b) = (Welford::new(1), Welford::new(1));
        xs[..30].iter().for_each(|x| a.push(&[*x]));
        xs[30..].iter().for_each(|x| b.push(&[*x]));
        a.merge(&b);
        assert!((a.mean[0] - one.mean[0]).abs() < 1e-12);
        assert!((a.m2[0] - one.m2[0]).abs() < 1e-9);
    }

    #[test]
    fn bad_inputs() {
        let o = BanditOracle::new(vec![0.5, 0.5], vec![1.0, 0.0]).unwrap();
        let w = Workers::sequential();
        assert!(matches!(
            gradient_stats(LabEstimator::Acloo, &o, 2, 0, 0, &w),
            Err(Error::InvalidConfig(_))
        ));
        assert!(matches!(
            "nope".parse::<LabEstimator>(),
            Err(Error::UnknownEstimator(_))
        ));
        assert!(BanditOracle::new(vec![0.5, 0.6], vec![0.0, 0.0]).is_err());
        let cfg = LabConfig {
            samples: 0,
            ..LabConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn exactness_battery_passes() {
        assert_eq!(exactness_battery(11, 200), (true, true));
    }

    #[test]
    fn csv_layout() {
        let row = LabRow {
            check: LabCheck::Unbiased,
            estimator: "acloo".into(),
            oracle_id: 0,
            k: 2,
            samples: 1000,
            bias_norm: 0.5,
            mean_variance: 0.25,
            pass: true,
        };
        let mut buf = Vec::new();
        write_lab_csv(&mut buf, &[row]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some(LAB_CSV_HEADER));
        assert_eq!(
            lines.next(),
            Some("unbiased,acloo,0,2,1000,5e-1,2.5e-1,pass")
        );
    }
}
