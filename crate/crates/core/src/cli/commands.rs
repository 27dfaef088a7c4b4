//! Subcommand implementations. Each returns the process exit code.

use std::path::{Path, PathBuf};

use log::info;
use serde::Serialize;

use super::charts::{render_chart, COMPARE_CHARTS};
use super::config::RunConfig;
use super::output::{write_json, write_manifest, write_with, RunLock};
use super::{exit, Cli, Command};
use crate::advantage::lab::{run_lab, write_lab_csv, LabSummary};
use crate::env::TaskSpec;
use crate::error::{Error, Result};
use crate::model::io::{read_matrix, write_matrix};
use crate::model::{FeatureMap, PolicyParams};
use crate::par::Workers;
use crate::rewards::write_dataset_jsonl;
use crate::trainer::{
    compare_methods, evaluate, fit_prm, prior_policy, run_iteration, save_checkpoint,
    split_by_family, write_metrics_csv, MethodRun, PrmSummary, TrainerMetricsRow, TrainerState,
    POLICY_FILE,
};

struct Context {
    config: RunConfig,
    out: PathBuf,
    quiet: bool,
    pool: Vec<TaskSpec>,
}

impl Context {
    fn report(&self, line: impl AsRef<str>) {
        if !self.quiet {
            println!("{}", line.as_ref());
        }
    }

    fn split(&self) -> (Vec<TaskSpec>, Vec<TaskSpec>) {
        split_by_family(&self.pool)
    }
}

fn load(cli: &Cli) -> Result<(RunConfig, PathBuf)> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.override_seed(seed);
    }
    config.validate()?;
    let out = cli
        .out
        .clone()
        .or_else(|| config.out.clone())
        .unwrap_or_else(|| Path::new("runs").join(cli.command.name()));
    config.out = Some(out.clone());
    Ok((config, out))
}

/// Runs the parsed command line.
pub fn execute(cli: &Cli) -> Result<i32> {
    let (config, out) = load(cli)?;
    let _lock = RunLock::acquire(&out)?;
    let pool = config.task_pool()?;
    let ctx = Context {
        config,
        out,
        quiet: cli.quiet,
        pool,
    };
    match cli.command {
        Command::Train => train(&ctx),
        Command::Compare => compare(&ctx),
        Command::EstimatorLab => estimator_lab(&ctx),
        Command::Prm => prm(&ctx),
        Command::Eval => eval(&ctx),
    }
}

#[derive(Serialize)]
struct TrainSummary<'a> {
    method: &'a str,
    iterations: u64,
    final_row: Option<&'a TrainerMetricsRow>,
    prm: Option<PrmSummary>,
}

fn train(ctx: &Context) -> Result<i32> {
    let c = &ctx.config;
    let (train, eval) = ctx.split();
    write_manifest(&ctx.out, "train", c, vec![c.train.seed], &ctx.pool)?;
    let mut state = TrainerState::new(
        c.train.clone(),
        c.latency,
        train,
        eval,
        Workers::available(),
    )?;
    info!(
        "training {} on {} tasks ({} held out)",
        c.train.method,
        state.tasks.len(),
        state.eval_tasks.len()
    );
    let mut rows = Vec::new();
    while (state.iteration as usize) < c.train.max_iterations
        && c.train
            .time_budget
            .is_none_or(|b| state.clock.total_time < b)
    {
        let row = run_iteration(&mut state)?.row;
        info!(
            "iteration {} time {:.0} eval {:?}",
            row.iteration, row.total_time, row.eval_success_rate
        );
        rows.push(row);
    }
    write_with(&ctx.out.join("metrics.csv"), |w| {
        write_metrics_csv(w, &rows)
    })?;
    save_checkpoint(&ctx.out.join("checkpoint"), &state)?;
    let summary = TrainSummary {
        method: c.train.method.name(),
        iterations: state.iteration,
        final_row: rows.last(),
        prm: state.prm_summary,
    };
    write_json(&ctx.out.join("train_summary.json"), &summary)?;
    let sr = rows.last().and_then(|r| r.eval_success_rate);
    ctx.report(format!(
        "{}: {} iterations, simulated time {:.1}, eval success rate {}",
        c.train.method,
        state.iteration,
        state.clock.total_time,
        sr.map_or("n/a".to_string(), |s| format!("{s:.3}"))
    ));
    Ok(exit::OK)
}

fn compare(ctx: &Context) -> Result<i32> {
    let c = &ctx.config;
    let methods = &c.compare.methods;
    if methods.len() < 2 {
        return Err(Error::config(
            "compare.methods must list at least two methods",
        ));
    }
    for (i, m) in methods.iter().enumerate() {
        if methods[..i].contains(m) {
            return Err(Error::config(format!("compare.methods lists {m} twice")));
        }
    }
    let runs: Vec<MethodRun> = methods
        .iter()
        .map(|&method| MethodRun {
            label: method.name().to_string(),
            config: crate::trainer::TrainConfig {
                method,
                ..c.train.clone()
            },
        })
        .collect();
    let (train, eval) = ctx.split();
    write_manifest(&ctx.out, "compare", c, c.compare.seeds.clone(), &ctx.pool)?;
    info!(
        "comparing {} methods over {} seeds",
        runs.len(),
        c.compare.seeds.len()
    );
    let report = compare_methods(
        &runs,
        &train,
        &eval,
        &c.latency,
        c.compare.time_budget,
        &c.compare.seeds,
        c.compare.target_success_rate,
        &Workers::available(),
    )?;
    for curve in &report.curves {
        let path = ctx
            .out
            .join("metrics")
            .join(format!("{}_seed{}.csv", curve.label, curve.seed));
        write_with(&path, |w| write_metrics_csv(w, &curve.rows))?;
    }
    write_json(&ctx.out.join("summary.json"), &report)?;
    for spec in &COMPARE_CHARTS {
        render_chart(
            &ctx.out.join("charts").join(spec.file),
            spec,
            &report.curves,
        )?;
    }
    for m in &report.methods {
        ctx.report(format!(
            "{}: median time to {:.2} = {} ({} censored)",
            m.label,
            report.target_success_rate,
            m.median_time
                .map_or("censored".to_string(), |t| format!("{t:.1}")),
            m.censored
        ));
    }
    for r in &report.ratios {
        let value = match (r.ratio, &r.reason) {
            (Some(x), _) => format!("{x:.3}"),
            (None, Some(reason)) => format!("null ({reason})"),
            (None, None) => "null".to_string(),
        };
        ctx.report(format!(
            "efficiency {} / {}: {value}",
            r.baseline, r.reference
        ));
    }
    Ok(exit::OK)
}

fn estimator_lab(ctx: &Context) -> Result<i32> {
    let c = &ctx.config;
    write_manifest(&ctx.out, "estimator-lab", c, vec![c.lab.seed], &ctx.pool)?;
    let (rows, summary) = run_lab(&c.lab, &Workers::available())?;
    write_with(&ctx.out.join("estimator_lab.csv"), |w| {
        write_lab_csv(w, &rows)
    })?;
    write_json(&ctx.out.join("lab_summary.json"), &summary)?;
    let LabSummary {
        acloo_unbiased,
        no_baseline_unbiased,
        variance_fraction,
        variance_ordering,
        zero_sum,
        shift_invariant,
    } = summary;
    let mark = |b: bool| if b { "pass" } else { "FAIL" };
    ctx.report(format!("acloo unbiased: {}", mark(acloo_unbiased)));
    ctx.report(format!(
        "no-baseline unbiased: {}",
        mark(no_baseline_unbiased)
    ));
    ctx.report(format!(
        "variance reduction: {} ({:.2} of oracles)",
        mark(variance_ordering),
        variance_fraction
    ));
    ctx.report(format!("zero sum: {}", mark(zero_sum)));
    ctx.report(format!("shift invariance: {}", mark(shift_invariant)));
    Ok(if summary.all_pass() {
        exit::OK
    } else {
        exit::LEMMA_FAILURE
    })
}

#[derive(Serialize)]
struct PrmReportFile {
    records: usize,
    raw_positives: usize,
    raw_negatives: usize,
    final_train_loss: f64,
    train_accuracy: f64,
    held_out_accuracy: Option<f64>,
}

fn prm(ctx: &Context) -> Result<i32> {
    let c = &ctx.config;
    let (train, _) = ctx.split();
    write_manifest(&ctx.out, "prm", c, vec![c.train.seed], &ctx.pool)?;
    let features = FeatureMap::one_hot(&ctx.pool);
    let actions = ctx.pool[0].actions();
    let policy = prior_policy(
        &ctx.pool,
        &features,
        actions,
        c.train.prior_skill,
        c.train.prior_logit,
        c.train.seed,
    )?;
    let (data, report) = fit_prm(&c.train, &train, &policy, &features)?;
    write_with(&ctx.out.join("prm_dataset.jsonl"), |w| {
        write_dataset_jsonl(w, &data.records)
    })?;
    write_matrix(
        &ctx.out.join(crate::trainer::PRM_FILE),
        &report.params.to_matrix(),
    )?;
    let file = PrmReportFile {
        records: data.records.len(),
        raw_positives: data.raw_positives,
        raw_negatives: data.raw_negatives,
        final_train_loss: report.final_train_loss,
        train_accuracy: report.train_accuracy,
        held_out_accuracy: report.held_out_accuracy,
    };
    write_json(&ctx.out.join("prm_report.json"), &file)?;
    ctx.report(format!(
        "prm: {} records, train accuracy {:.3}, held-out accuracy {}",
        file.records,
        file.train_accuracy,
        file.held_out_accuracy
            .map_or("n/a".to_string(), |a| format!("{a:.3}"))
    ));
    Ok(exit::OK)
}

#[derive(Serialize)]
struct EvalReport {
    checkpoint: PathBuf,
    tasks: usize,
    episodes_per_task: usize,
    success_rate: f64,
}

fn eval(ctx: &Context) -> Result<i32> {
    let c = &ctx.config;
    let (_, eval_tasks) = ctx.split();
    let checkpoint = c
        .eval
        .checkpoint
        .clone()
        .unwrap_or_else(|| ctx.out.join("checkpoint"));
    let features = FeatureMap::one_hot(&ctx.pool);
    let path = checkpoint.join(POLICY_FILE);
    let weights = read_matrix(&path)?;
    let expected = (ctx.pool[0].actions(), features.dim());
    if weights.dim() != expected {
        return Err(Error::Format {
            path,
            reason: format!("expected shape {expected:?}, found {:?}", weights.dim()),
        });
    }
    let policy = PolicyParams::from_weights(weights);
    let mut tasks = eval_tasks;
    for t in &mut tasks {
        t.max_steps = c.train.max_turns;
    }
    let success_rate = evaluate(&policy, &tasks, &features, c.eval.episodes_per_task)?;
    let report = EvalReport {
        checkpoint,
        tasks: tasks.len(),
        episodes_per_task: c.eval.episodes_per_task,
        success_rate,
    };
    write_json(&ctx.out.join("eval.json"), &report)?;
    ctx.report(format!(
        "eval success rate {success_rate:.3} on {} tasks",
        report.tasks
    ));
    Ok(exit::OK)
}
