//! End-to-end analysis of a net, and parameter sweeps over it.

use std::fmt::Write as _;

use rayon::prelude::*;
use thiserror::Error;

use crate::markov::{build_generator, steady_state, SolveError, SolverConfig, SteadyState};
use crate::net::Net;
use crate::reachability::{explore, ExploreConfig, ExploreError, TangibleGraph};
use crate::rewards::{evaluate, metric_name, MetricReport, RewardError, RewardSpec};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalysisError {
    #[error(transparent)]
    Explore(#[from] ExploreError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Reward(#[from] RewardError),
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub graph: TangibleGraph,
    pub steady_state: SteadyState,
    pub report: MetricReport,
}

pub fn solve_net(
    net: &Net,
    rewards: &[RewardSpec],
    explore_cfg: &ExploreConfig,
    solver: &SolverConfig,
) -> Result<Solution, AnalysisError> {
    let graph = explore(net, explore_cfg)?;
    let q = build_generator(&graph)?;
    let steady_state = steady_state(&q, solver)?;
    let report = evaluate(net, &graph, &steady_state, rewards)?;
    Ok(Solution { graph, steady_state, report })
}

/// Values to sweep a parameter over.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub parameter: String,
    pub values: Vec<f64>,
}

impl SweepSpec {
    pub fn values(parameter: &str, values: Vec<f64>) -> Result<Self, String> {
        if values.is_empty() {
            return Err("sweep needs at least one value".into());
        }
        if let Some(v) = values.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
            return Err(format!("sweep values must be positive, got {v}"));
        }
        Ok(SweepSpec { parameter: parameter.to_string(), values })
    }

    /// `start, start + step, ...` up to and including `stop`.
    pub fn range(parameter: &str, start: f64, stop: f64, step: f64) -> Result<Self, String> {
        if !(step > 0.0 && step.is_finite()) {
            return Err(format!("sweep step must be positive, got {step}"));
        }
        if !(start.is_finite() && stop.is_finite()) || stop < start {
            return Err(format!("sweep range {start}:{stop} is empty"));
        }
        let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
        Self::values(parameter, (0..count).map(|i| start + i as f64 * step).collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub value: f64,
    /// One entry per [`SweepTable::metrics`] column.
    pub metrics: Vec<f64>,
    pub tangible_states: usize,
    pub solver_iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepTable {
    pub metrics: Vec<String>,
    pub rows: Vec<SweepRow>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SweepError {
    #[error("at {parameter}={value}: {message}")]
    Point { parameter: String, value: f64, message: String },
}

impl SweepTable {
    pub fn column(&self, metric: &str) -> Option<Vec<f64>> {
        let i = self.metrics.iter().position(|m| m == metric)?;
        Some(self.rows.iter().map(|r| r.metrics[i]).collect())
    }

    pub fn values(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.value).collect()
    }

    /// Swept value with the smallest `metric` (first one on ties).
    pub fn argmin(&self, metric: &str) -> Option<f64> {
        let col = self.column(metric)?;
        let (i, _) = col.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1))?;
        Some(self.rows[i].value)
    }

    pub fn header(&self) -> String {
        let mut cols = vec!["value".to_string()];
        cols.extend(self.metrics.iter().cloned());
        cols.push("tangible_states".into());
        cols.push("solver_iterations".into());
        cols.join(",")
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.header();
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format_value(r.value));
            for m in &r.metrics {
                out.push(',');
                out.push_str(&format_value(*m));
            }
            let _ = writeln!(out, ",{},{}", r.tangible_states, r.solver_iterations);
        }
        out
    }
}

/// Solves the net produced by `build` at every value, in parallel. Rows
/// come back in input order.
pub fn sweep<F>(
    spec: &SweepSpec,
    explore_cfg: &ExploreConfig,
    solver: &SolverConfig,
    build: F,
) -> Result<SweepTable, SweepError>
where
    F: Fn(f64) -> Result<(Net, Vec<RewardSpec>), String> + Sync,
{
    let point_err =
        |value: f64, message: String| SweepError::Point { parameter: spec.parameter.clone(), value, message };
    let results: Vec<(Vec<String>, SweepRow)> = spec
        .values
        .par_iter()
        .map(|&value| {
            let (net, rewards) = build(value).map_err(|m| point_err(value, m))?;
            let sol = solve_net(&net, &rewards, explore_cfg, solver).map_err(|e| point_err(value, e.to_string()))?;
            let metrics = sol.report.metrics();
            Ok((
                metrics.iter().map(|(n, _)| n.clone()).collect(),
                SweepRow {
                    value,
                    metrics: metrics.iter().map(|(_, v)| *v).collect(),
                    tangible_states: sol.graph.len(),
                    solver_iterations: sol.steady_state.iterations,
                },
            ))
        })
        .collect::<Result<_, SweepError>>()?;
    let metrics = results.first().map(|(m, _)| m.clone()).unwrap_or_default();
    Ok(SweepTable { metrics, rows: results.into_iter().map(|(_, r)| r).collect() })
}

/// Column names a reward list produces in reports and sweep tables.
pub fn metric_columns(rewards: &[RewardSpec]) -> Vec<String> {
    rewards.iter().map(|r| metric_name(&r.name)).collect()
}

/// Plain decimal with at least 15 significant digits; scientific notation
/// outside `[1e-4, 1e15)`.
pub fn format_value(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    if !v.is_finite() {
        return format!("{v}");
    }
    let mag = v.abs();
    if (1e-4..1e15).contains(&mag) {
        let exp = mag.log10().floor() as i32;
        let decimals = (14 - exp).max(0) as usize;
        format!("{v:.decimals$}")
    } else {
        format!("{v:.14e}")
    }
}
