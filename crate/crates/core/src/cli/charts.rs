//! Static SVG line charts of metrics against simulated time.

use std::path::Path;

use plotters::prelude::*;

use crate::error::{Error, Result};
use crate::trainer::{RunCurve, TrainerMetricsRow, METRICS_COLUMNS};

/// One chart: a metric column against another, one series per method.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChartSpec {
    pub file: &'static str,
    pub title: &'static str,
    pub x: &'static str,
    pub y: &'static str,
}

pub const COMPARE_CHARTS: [ChartSpec; 3] = [
    ChartSpec {
        file: "success_rate_vs_time.svg",
        title: "Eval success rate",
        x: "total_time",
        y: "eval_success_rate",
    },
    ChartSpec {
        file: "interactions_vs_time.svg",
        title: "Environment interactions",
        x: "total_time",
        y: "interaction_count",
    },
    ChartSpec {
        file: "samples_vs_time.svg",
        title: "Sampled actions",
        x: "total_time",
        y: "sampled_action_count",
    },
];

const GRID: usize = 120;
const COLORS: [RGBColor; 6] = [
    RGBColor(31, 119, 180),
    RGBColor(214, 39, 40),
    RGBColor(44, 160, 44),
    RGBColor(148, 103, 189),
    RGBColor(255, 127, 14),
    RGBColor(140, 86, 75),
];

impl ChartSpec {
    pub fn validate(&self) -> Result<()> {
        for col in [self.x, self.y] {
            if !METRICS_COLUMNS.contains(&col) || col == "schema_version" {
                return Err(Error::config(format!(
                    "chart {}: unknown metric `{col}`",
                    self.file
                )));
            }
        }
        Ok(())
    }
}

pub fn metric(row: &TrainerMetricsRow, name: &str) -> Option<f64> {
    match name {
        "iteration" => Some(row.iteration as f64),
        "total_time" => Some(row.total_time),
        "env_time" => Some(row.env_time),
        "inference_time" => Some(row.inference_time),
        "update_time" => Some(row.update_time),
        "interaction_count" => Some(row.interaction_count as f64),
        "sampled_action_count" => Some(row.sampled_action_count as f64),
        "mean_outcome_reward" => Some(row.mean_outcome_reward),
        "eval_success_rate" => row.eval_success_rate,
        "mean_critic_loss" => row.mean_critic_loss,
        "mean_actor_loss" => Some(row.mean_actor_loss),
        _ => None,
    }
}

/// Median, minimum and maximum across seeds on a shared x grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Band {
    pub label: String,
    pub x: Vec<f64>,
    pub median: Vec<f64>,
    pub low: Vec<f64>,
    pub high: Vec<f64>,
}

fn start_value(curve: &RunCurve, y: &str) -> f64 {
    if y == "eval_success_rate" {
        curve.initial_success_rate
    } else {
        0.0
    }
}

/// Step-function value of one run at `x`: the latest recorded `y` at or
/// before `x`.
fn value_at(curve: &RunCurve, spec: &ChartSpec, x: f64) -> f64 {
    let mut v = start_value(curve, spec.y);
    for r in &curve.rows {
        match (metric(r, spec.x), metric(r, spec.y)) {
            (Some(rx), _) if rx > x => break,
            (Some(_), Some(ry)) => v = ry,
            _ => {}
        }
    }
    v
}

pub fn bands(curves: &[RunCurve], spec: &ChartSpec) -> Vec<Band> {
    let x_max = curves
        .iter()
        .flat_map(|c| c.rows.iter().filter_map(|r| metric(r, spec.x)))
        .fold(0.0f64, f64::max);
    let xs: Vec<f64> = (0..=GRID).map(|i| x_max * i as f64 / GRID as f64).collect();
    let mut labels: Vec<&str> = Vec::new();
    for c in curves {
        if !labels.contains(&c.label.as_str()) {
            labels.push(&c.label);
        }
    }
    labels
        .into_iter()
        .map(|label| {
            let runs: Vec<&RunCurve> = curves.iter().filter(|c| c.label == label).collect();
            let mut band = Band {
                label: label.to_string(),
                x: xs.clone(),
                median: Vec::with_capacity(xs.len()),
                low: Vec::with_capacity(xs.len()),
                high: Vec::with_capacity(xs.len()),
            };
            for &x in &xs {
                let mut v: Vec<f64> = runs.iter().map(|c| value_at(c, spec, x)).collect();
                v.sort_by(f64::total_cmp);
                let n = v.len();
                band.median.push(if n % 2 == 1 {
                    v[n / 2]
                } else {
                    0.5 * (v[n / 2 - 1] + v[n / 2])
                });
                band.low.push(v[0]);
                band.high.push(v[n - 1]);
            }
            band
        })
        .collect()
}

fn draw_err<E: std::fmt::Debug>(path: &Path, e: E) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        reason: format!("chart rendering failed: {e:?}"),
    }
}

/// Renders one chart as SVG: a median line per method over a shaded
/// min-max band across seeds.
pub fn render_chart(path: &Path, spec: &ChartSpec, curves: &[RunCurve]) -> Result<()> {
    spec.validate()?;
    let bands = bands(curves, spec);
    let x_max = bands
        .iter()
        .flat_map(|b| b.x.last().copied())
        .fold(1.0f64, f64::max);
    let y_max = bands
        .iter()
        .flat_map(|b| b.high.iter().copied())
        .fold(0.0f64, f64::max);
    let y_max = if spec.y == "eval_success_rate" {
        1.0
    } else {
        y_max.max(1.0) * 1.05
    };

    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let root = SVGBackend::new(path, (800, 500)).into_drawing_area();
    root.fill(&WHITE).map_err(|e| draw_err(path, e))?;
    let mut chart = ChartBuilder::on(&root)
        .caption(spec.title, ("sans-serif", 22))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(60)
        .build_cartesian_2d(0.0..x_max, 0.0..y_max)
        .map_err(|e| draw_err(path, e))?;
    chart
        .configure_mesh()
        .x_desc(spec.x)
        .y_desc(spec.y)
        .draw()
        .map_err(|e| draw_err(path, e))?;
    for (i, b) in bands.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let outline: Vec<(f64, f64)> =
            b.x.iter()
                .zip(&b.high)
                .map(|(&x, &y)| (x, y))
                .chain(b.x.iter().zip(&b.low).rev().map(|(&x, &y)| (x, y)))
                .collect();
        chart
            .draw_series(std::iter::once(Polygon::new(
                outline,
                color.mix(0.15).filled(),
            )))
            .map_err(|e| draw_err(path, e))?;
        chart
            .draw_series(LineSeries::new(
                b.x.iter().zip(&b.median).map(|(&x, &y)| (x, y)),
                color.stroke_width(2),
            ))
            .map_err(|e| draw_err(path, e))?
            .label(b.label.clone())
            .legend(move |(x, y)| {
                PathElement::new(vec![(x, y), (x + 20, y)], color.stroke_width(2))
            });
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()
        .map_err(|e| draw_err(path, e))?;
    root.present().map_err(|e| draw_err(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::SimClock;

    fn curve(label: &str, points: &[(f64, f64)]) -> RunCurve {
        let rows = points
            .iter()
            .enumerate()
            .map(|(i, &(t, sr))| {
                let mut c = SimClock::new();
                c.charge_env(t);
                TrainerMetricsRow::new(i as u64 + 1, &c, 0.0, Some(sr), None, 0.0)
            })
            .collect();
        RunCurve {
            label: label.into(),
            seed: 0,
            initial_success_rate: 0.5,
            rows,
            time_to_target: None,
        }
    }

    #[test]
    fn specs_reference_real_columns() {
        for s in COMPARE_CHARTS {
            s.validate().unwrap();
        }
        let bad = ChartSpec {
            y: "nope",
            ..COMPARE_CHARTS[0]
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn bands_are_step_functions_across_seeds() {
        let curves = [
            curve("a", &[(10.0, 0.6), (20.0, 0.8)]),
            curve("a", &[(10.0, 0.7), (20.0, 0.9)]),
            curve("a", &[(10.0, 0.2), (20.0, 1.0)]),
        ];
        let b = &bands(&curves, &COMPARE_CHARTS[0])[0];
        assert_eq!(b.x.len(), GRID + 1);
        assert_eq!(b.median[0], 0.5);
        let mid = b.x.iter().position(|&x| x >= 10.0).unwrap();
        assert_eq!((b.low[mid], b.median[mid], b.high[mid]), (0.2, 0.6, 0.7));
        assert_eq!((b.low[GRID], b.median[GRID], b.high[GRID]), (0.8, 0.9, 1.0));
    }

    #[test]
    fn renders_svg() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.svg");
        let curves = [curve("a", &[(10.0, 0.6)]), curve("b", &[(5.0, 0.9)])];
        render_chart(&path, &COMPARE_CHARTS[0], &curves).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("<svg"));
        assert!(text.contains("polyline") || text.contains("path"));
    }
}
