//! Per-iteration metrics and their CSV form.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::env::SimClock;
use crate::error::{Error, Result};

pub const METRICS_SCHEMA_VERSION: u32 = 1;

/// Column order of the metrics CSV.
pub const METRICS_COLUMNS: [&str; 12] = [
    "schema_version",
    "iteration",
    "total_time",
    "env_time",
    "inference_time",
    "update_time",
    "interaction_count",
    "sampled_action_count",
    "mean_outcome_reward",
    "eval_success_rate",
    "mean_critic_loss",
    "mean_actor_loss",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainerMetricsRow {
    pub iteration: u64,
    pub total_time: f64,
    pub env_time: f64,
    pub inference_time: f64,
    pub update_time: f64,
    pub interaction_count: u64,
    pub sampled_action_count: u64,
    pub mean_outcome_reward: f64,
    /// Absent on iterations without evaluation.
    pub eval_success_rate: Option<f64>,
    /// Absent for methods without a learned value.
    pub mean_critic_loss: Option<f64>,
    pub mean_actor_loss: f64,
}

impl TrainerMetricsRow {
    pub fn new(
        iteration: u64,
        clock: &SimClock,
        mean_outcome_reward: f64,
        eval_success_rate: Option<f64>,
        mean_critic_loss: Option<f64>,
        mean_actor_loss: f64,
    ) -> Self {
        Self {
            iteration,
            total_time: clock.total_time,
            env_time: clock.env_time,
            inference_time: clock.inference_time,
            update_time: clock.update_time,
            interaction_count: clock.interaction_count,
            sampled_action_count: clock.sampled_action_count,
            mean_outcome_reward,
            eval_success_rate,
            mean_critic_loss,
            mean_actor_loss,
        }
    }

    fn to_csv_line(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        format!(
            "{METRICS_SCHEMA_VERSION},{},{},{},{},{},{},{},{},{},{},{}",
            self.iteration,
            self.total_time,
            self.env_time,
            self.inference_time,
            self.update_time,
            self.interaction_count,
            self.sampled_action_count,
            self.mean_outcome_reward,
            opt(self.eval_success_rate),
            opt(self.mean_critic_loss),
            self.mean_actor_loss
        )
    }
}

pub fn write_metrics_header<W: Write>(out: &mut W) -> std::io::Result<()> {
    writeln!(out, "{}", METRICS_COLUMNS.join(","))
}

pub fn write_metrics_row<W: Write>(out: &mut W, row: &TrainerMetricsRow) -> std::io::Result<()> {
    writeln!(out, "{}", row.to_csv_line())
}

pub fn write_metrics_csv<W: Write>(mut out: W, rows: &[TrainerMetricsRow]) -> std::io::Result<()> {
    write_metrics_header(&mut out)?;
    for r in rows {
        write_metrics_row(&mut out, r)?;
    }
    Ok(())
}

/// Parses a metrics CSV, rejecting unknown headers or schema versions.
pub fn read_metrics_csv<R: BufRead>(input: R) -> Result<Vec<TrainerMetricsRow>> {
    let bad = |reason: String| Error::Format {
        path: "<metrics>".into(),
        reason,
    };
    let mut lines = input.lines();
    let header = lines
        .next()
        .ok_or_else(|| bad("empty file".into()))?
        .map_err(|e| Error::io("<metrics>", e))?;
    if header != METRICS_COLUMNS.join(",") {
        return Err(bad(format!("unexpected header `{header}`")));
    }
    let mut rows = Vec::new();
    for line in lines {
        let line = line.map_err(|e| Error::io("<metrics>", e))?;
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != METRICS_COLUMNS.len() {
            return Err(bad(format!(
                "expected {} fields, got {}",
                METRICS_COLUMNS.len(),
                f.len()
            )));
        }
        if f[0] != METRICS_SCHEMA_VERSION.to_string() {
            return Err(bad(format!("unsupported schema version {}", f[0])));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|e| bad(format!("`{s}`: {e}")));
        let int = |s: &str| s.parse::<u64>().map_err(|e| bad(format!("`{s}`: {e}")));
        let opt = |s: &str| {
            if s.is_empty() {
                Ok(None)
            } else {
                num(s).map(Some)
            }
        };
        rows.push(TrainerMetricsRow {
            iteration: int(f[1])?,
            total_time: num(f[2])?,
            env_time: num(f[3])?,
            inference_time: num(f[4])?,
            update_time: num(f[5])?,
            interaction_count: int(f[6])?,
            sampled_action_count: int(f[7])?,
            mean_outcome_reward: num(f[8])?,
            eval_success_rate: opt(f[9])?,
            mean_critic_loss: opt(f[10])?,
            mean_actor_loss: num(f[11])?,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip() {
        let mut clock = SimClock::new();
        clock.charge_interaction(2.5);
        let rows = vec![
            TrainerMetricsRow::new(1, &clock, 0.5, Some(0.25), None, -0.1),
            TrainerMetricsRow::new(2, &clock, 1.0, None, Some(0.3), 0.0),
        ];
        let mut buf = Vec::new();
        write_metrics_csv(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("schema_version,iteration,total_time"));
        assert_eq!(read_metrics_csv(buf.as_slice()).unwrap(), rows);
        let wrong = text.replacen("\n1,", "\n9,", 1);
        assert!(read_metrics_csv(wrong.as_bytes()).is_err());
    }
}
