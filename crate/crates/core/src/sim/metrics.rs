//! Table-style run metrics and multi-planner comparison.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::nmpc::model::wrap_angle;

use super::scenario::PlannerKind;
use super::trace::{Outcome, SimTrace};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// Smallest planar clearance from the robot center to an obstacle, m.
    pub mu_d: f64,
    pub path_length: f64,
    /// Sum of squared wrapped heading increments, rad².
    pub smoothness: f64,
    /// Goal arrival time; `None` when the goal was not reached.
    pub mu_t: Option<f64>,
    pub success: bool,
    pub collision: bool,
    pub outcome: Outcome,
    /// Planning-cycle wall times; absent when computed from a trace alone.
    pub mean_solve_time: Option<f64>,
    pub max_solve_time: Option<f64>,
}

impl Metrics {
    /// Equality ignoring the wall-clock fields.
    pub fn same_navigation(&self, other: &Metrics) -> bool {
        let strip = |m: &Metrics| Metrics {
            mean_solve_time: None,
            max_solve_time: None,
            ..m.clone()
        };
        strip(self) == strip(other)
    }

    pub fn with_solve_times(mut self, times: &[f64]) -> Self {
        if !times.is_empty() {
            self.mean_solve_time = Some(times.iter().sum::<f64>() / times.len() as f64);
            self.max_solve_time = Some(times.iter().copied().fold(0.0, f64::max));
        }
        self
    }
}

/// Metrics from a recorded trace. Panics on an empty trace.
pub fn compute_metrics(trace: &SimTrace) -> Metrics {
    assert!(!trace.rows.is_empty(), "metrics need a nonempty trace");
    let rows = &trace.rows;
    let mu_d = rows
        .iter()
        .map(|r| r.min_distance)
        .fold(f64::INFINITY, f64::min)
        .max(0.0);
    let mut path_length = 0.0;
    let mut smoothness = 0.0;
    for w in rows.windows(2) {
        path_length += (w[1].x - w[0].x).hypot(w[1].y - w[0].y);
        let dth = wrap_angle(w[1].theta - w[0].theta);
        smoothness += dth * dth;
    }
    let last = rows.last().expect("nonempty");
    let outcome = last.outcome;
    let success = outcome == Outcome::Success;
    Metrics {
        mu_d,
        path_length,
        smoothness,
        mu_t: success.then_some(last.time),
        success,
        collision: outcome == Outcome::Collision,
        outcome,
        mean_solve_time: None,
        max_solve_time: None,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonEntry {
    pub scenario: String,
    pub planner: PlannerKind,
    pub metrics: Metrics,
    /// Path length relative to the main planner on the same scenario.
    pub relative_path_length: Option<f64>,
    pub relative_smoothness: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuccessRate {
    pub planner: PlannerKind,
    pub runs: usize,
    pub successes: usize,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub entries: Vec<ComparisonEntry>,
    pub success_rates: Vec<SuccessRate>,
}

fn ratio(value: f64, base: f64) -> Option<f64> {
    (base > 0.0 && value.is_finite()).then(|| value / base)
}

/// Normalizes each run to the main planner's run on the same scenario.
pub fn compare(runs: &[(String, PlannerKind, Metrics)]) -> Comparison {
    let base: BTreeMap<&str, &Metrics> = runs
        .iter()
        .filter(|(_, k, _)| *k == PlannerKind::Ours)
        .map(|(s, _, m)| (s.as_str(), m))
        .collect();
    let entries = runs
        .iter()
        .map(|(s, k, m)| {
            let b = base.get(s.as_str());
            ComparisonEntry {
                scenario: s.clone(),
                planner: *k,
                metrics: m.clone(),
                relative_path_length: b.and_then(|b| ratio(m.path_length, b.path_length)),
                relative_smoothness: b.and_then(|b| ratio(m.smoothness, b.smoothness)),
            }
        })
        .collect();
    let mut tally: BTreeMap<PlannerKind, (usize, usize)> = BTreeMap::new();
    for (_, k, m) in runs {
        let t = tally.entry(*k).or_default();
        t.0 += 1;
        t.1 += usize::from(m.success);
    }
    let success_rates = tally
        .into_iter()
        .map(|(planner, (runs, successes))| SuccessRate {
            planner,
            runs,
            successes,
            rate: successes as f64 / runs as f64,
        })
        .collect();
    Comparison { entries, success_rates }
}
