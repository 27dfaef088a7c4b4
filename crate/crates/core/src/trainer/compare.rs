//! Time-to-target comparison of training methods on one simulated clock.

use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use super::eval::evaluate;
use super::iteration::run_iteration;
use super::metrics::TrainerMetricsRow;
use super::state::TrainerState;
use crate::env::{LatencyModel, TaskSpec};
use crate::error::Result;
use crate::par::Workers;

/// One labelled configuration to compare.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodRun {
    pub label: String,
    pub config: TrainConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunCurve {
    pub label: String,
    pub seed: u64,
    pub initial_success_rate: f64,
    pub rows: Vec<TrainerMetricsRow>,
    /// Simulated time at which eval success first reached the target; `None`
    /// when the budget ran out first.
    pub time_to_target: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub label: String,
    pub times: Vec<Option<f64>>,
    /// Median with censored runs counted as infinitely slow; `None` when the
    /// median itself is censored.
    pub median_time: Option<f64>,
    pub censored: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyRatio {
    pub baseline: String,
    pub reference: String,
    /// Baseline median time over reference median time.
    pub ratio: Option<f64>,
    pub reason: Option<String>,
    /// When only the baseline is censored: budget over reference median.
    pub lower_bound: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub target_success_rate: f64,
    pub time_budget: f64,
    pub seeds: Vec<u64>,
    pub methods: Vec<MethodSummary>,
    pub ratios: Vec<EfficiencyRatio>,
    #[serde(skip)]
    pub curves: Vec<RunCurve>,
}

/// Iterates until the clock reaches `time_budget` or `max_iterations` runs
/// have completed.
pub fn run_to_budget(
    state: &mut TrainerState,
    time_budget: Option<f64>,
) -> Result<Vec<TrainerMetricsRow>> {
    let mut rows = Vec::new();
    while (state.iteration as usize) < state.config.max_iterations
        && time_budget.is_none_or(|b| state.clock.total_time < b)
    {
        rows.push(run_iteration(state)?.row);
    }
    Ok(rows)
}

pub fn time_to_target(initial: f64, rows: &[TrainerMetricsRow], target: f64) -> Option<f64> {
    if initial >= target {
        return Some(0.0);
    }
    rows.iter()
        .find(|r| r.eval_success_rate.is_some_and(|s| s >= target))
        .map(|r| r.total_time)
}

/// Median of times with `None` treated as `+∞`.
fn censored_median(times: &[Option<f64>]) -> Option<f64> {
    if times.is_empty() {
        return None;
    }
    let mut v: Vec<f64> = times.iter().map(|t| t.unwrap_or(f64::INFINITY)).collect();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    let m = if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    };
    m.is_finite().then_some(m)
}

/// Trains every configuration under every seed on a shared pool and clock
/// model. The first entry of `runs` is the reference for efficiency ratios.
#[allow(clippy::too_many_arguments)]
pub fn compare_methods(
    runs: &[MethodRun],
    tasks: &[TaskSpec],
    eval_tasks: &[TaskSpec],
    latency: &LatencyModel,
    time_budget: f64,
    seeds: &[u64],
    target: f64,
    workers: &Workers,
) -> Result<ComparisonReport> {
    let jobs: Vec<(usize, u64)> = (0..runs.len())
        .flat_map(|r| seeds.iter().map(move |&s| (r, s)))
        .collect();
    let curves = workers.map_indexed(jobs.len(), |j| -> Result<RunCurve> {
        let (r, seed) = jobs[j];
        let run = &runs[r];
        // the simulated-time budget is the only stopping rule here
        let config = TrainConfig {
            seed,
            max_iterations: usize::MAX,
            ..run.config.clone()
        };
        let mut state = TrainerState::new(
            config,
            *latency,
            tasks.to_vec(),
            eval_tasks.to_vec(),
            Workers::sequential(),
        )?;
        let initial = evaluate(&state.policy, &state.eval_tasks, &state.features, 1)?;
        let rows = run_to_budget(&mut state, Some(time_budget))?;
        Ok(RunCurve {
            label: run.label.clone(),
            seed,
            initial_success_rate: initial,
            time_to_target: time_to_target(initial, &rows, target),
            rows,
        })
    });
    let curves = curves.into_iter().collect::<Result<Vec<_>>>()?;
    let methods: Vec<MethodSummary> = runs
        .iter()
        .enumerate()
        .map(|(r, run)| {
            let times: Vec<Option<f64>> = curves[r * seeds.len()..(r + 1) * seeds.len()]
                .iter()
                .map(|c| c.time_to_target)
                .collect();
            MethodSummary {
                label: run.label.clone(),
                median_time: censored_median(&times),
                censored: times.iter().filter(|t| t.is_none()).count(),
                times,
            }
        })
        .collect();
    let ratios = match methods.split_first() {
        Some((reference, rest)) => rest
            .iter()
            .map(|m| {
                let (ratio, reason, lower_bound) = match (m.median_time, reference.median_time) {
                    (Some(b), Some(r)) if r > 0.0 => (Some(b / r), None, None),
                    (Some(b), Some(_)) => (
                        if b == 0.0 { Some(1.0) } else { None },
                        Some("reference_at_zero".into()),
                        None,
                    ),
                    (None, Some(r)) => (
                        None,
                        Some("budget_exhausted".into()),
                        (r > 0.0).then(|| time_budget / r),
                    ),
                    _ => (None, Some("budget_exhausted".into()), None),
                };
                EfficiencyRatio {
                    baseline: m.label.clone(),
                    reference: reference.label.clone(),
                    ratio,
                    reason,
                    lower_bound,
                }
            })
            .collect(),
        None => Vec::new(),
    };
    Ok(ComparisonReport {
        target_success_rate: target,
        time_budget,
        seeds: seeds.to_vec(),
        methods,
        ratios,
        curves,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn censored_median_rules() {
        assert_eq!(censored_median(&[Some(3.0), None, Some(1.0)]), Some(3.0));
        assert_eq!(censored_median(&[None, None, Some(1.0)]), None);
        assert_eq!(censored_median(&[Some(1.0), Some(3.0)]), Some(2.0));
        assert_eq!(censored_median(&[]), None);
    }

    #[test]
    fn target_time_rules() {
        use crate::env::SimClock;
        let mut c = SimClock::new();
        c.charge_env(10.0);
        let rows = vec![
            TrainerMetricsRow::new(1, &c, 0.0, Some(0.5), None, 0.0),
            TrainerMetricsRow::new(2, &c, 0.0, None, None, 0.0),
        ];
        assert_eq!(time_to_target(0.9, &rows, 0.8), Some(0.0));
        assert_eq!(time_to_target(0.1, &rows, 0.5), Some(10.0));
        assert_eq!(time_to_target(0.1, &rows, 0.8), None);
    }

    fn small_pool() -> (Vec<TaskSpec>, Vec<TaskSpec>) {
        use crate::env::{generate_task_pool, PoolParams};
        let pool = generate_task_pool(7, 12, &PoolParams::default()).unwrap();
        crate::trainer::split_by_family(&pool)
    }

    fn run(label: &str, method: crate::trainer::Method) -> MethodRun {
        MethodRun {
            label: label.into(),
            config: TrainConfig {
                method,
                pretrain_epochs: 2,
                ..TrainConfig::default()
            },
        }
    }

    #[test]
    fn self_comparison_has_unit_ratio() {
        let (train, eval) = small_pool();
        let m = crate::trainer::Method::Ppo;
        let runs = [run("a", m), run("b", m)];
        let rep = compare_methods(
            &runs,
            &train,
            &eval,
            &LatencyModel::default(),
            3000.0,
            &[1, 2],
            0.5,
            &Workers::new(2),
        )
        .unwrap();
        assert_eq!(rep.methods[0].times, rep.methods[1].times);
        let r = &rep.ratios[0];
        if rep.methods[0].median_time.is_some_and(|t| t > 0.0) {
            assert_eq!(r.ratio, Some(1.0));
        } else {
            assert!(r.reason.is_some());
        }
    }

    #[test]
    fn zero_budget_gives_empty_censored_curves() {
        let (train, eval) = small_pool();
        let runs = [run("coach", crate::trainer::Method::AndroidCoach)];
        let rep = compare_methods(
            &runs,
            &train,
            &eval,
            &LatencyModel::default(),
            0.0,
            &[1],
            1.01,
            &Workers::sequential(),
        )
        .unwrap();
        assert!(rep.curves[0].rows.is_empty());
        assert_eq!(rep.methods[0].censored, 1);
        assert_eq!(rep.methods[0].median_time, None);
    }
}
