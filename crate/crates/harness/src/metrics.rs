//! Run metrics: one JSON line per task followed by one summary line.
//!
//! The summary is always recomputed from the rows, and [`RunMetrics::check`]
//! verifies a stored summary against its rows.

use std::collections::BTreeMap;
use std::path::Path;

use council_core::PlanResult;
use serde::{Deserialize, Serialize};

use crate::error::FileError;
use crate::gateway::BackendUsage;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskRow {
    pub task_id: String,
    /// Warm-up tasks accrue memory but are left out of the summary.
    pub warmup: bool,
    pub success: bool,
    pub reward: f64,
    pub iterations_used: usize,
    pub nodes_expanded: usize,
    pub max_depth_reached: usize,
    /// Depth of the best trajectory found.
    pub steps: usize,
    /// Set when the search itself failed; the row then counts as a failure.
    pub error: Option<String>,
    pub diagnostics: Vec<String>,
}

impl TaskRow {
    pub fn from_result(r: &PlanResult, warmup: bool) -> Self {
        Self {
            task_id: r.task_id.clone(),
            warmup,
            success: r.success,
            reward: r.reward,
            iterations_used: r.iterations_used,
            nodes_expanded: r.nodes_expanded,
            max_depth_reached: r.max_depth_reached,
            steps: r.best_trajectory.depth(),
            error: None,
            diagnostics: r.diagnostics.clone(),
        }
    }

    pub fn failed(task_id: &str, warmup: bool, error: String) -> Self {
        Self {
            task_id: task_id.into(),
            warmup,
            success: false,
            reward: 0.0,
            iterations_used: 0,
            nodes_expanded: 0,
            max_depth_reached: 0,
            steps: 0,
            error: Some(error),
            diagnostics: Vec::new(),
        }
    }
}

/// Aggregates over the scored (non-warm-up) rows. Means over an empty set
/// are `null`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub tasks: usize,
    pub successes: usize,
    pub errors: usize,
    pub success_rate: Option<f64>,
    pub mean_reward: Option<f64>,
    /// Mean deepest level reached on solved tasks.
    pub mean_reasoning_steps: Option<f64>,
    pub mean_expanded_nodes: Option<f64>,
    pub mean_nodes_per_success: Option<f64>,
    pub mean_max_depth: Option<f64>,
    pub backend_usage: BTreeMap<String, BackendUsage>,
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

impl Summary {
    pub fn from_rows(rows: &[TaskRow], backend_usage: BTreeMap<String, BackendUsage>) -> Self {
        let scored: Vec<&TaskRow> = rows.iter().filter(|r| !r.warmup).collect();
        let solved: Vec<&&TaskRow> = scored.iter().filter(|r| r.success).collect();
        Self {
            tasks: scored.len(),
            successes: solved.len(),
            errors: scored.iter().filter(|r| r.error.is_some()).count(),
            success_rate: mean(scored.iter().map(|r| if r.success { 1.0 } else { 0.0 })),
            mean_reward: mean(scored.iter().map(|r| r.reward)),
            mean_reasoning_steps: mean(solved.iter().map(|r| r.max_depth_reached as f64)),
            mean_expanded_nodes: mean(scored.iter().map(|r| r.nodes_expanded as f64)),
            mean_nodes_per_success: mean(solved.iter().map(|r| r.nodes_expanded as f64)),
            mean_max_depth: mean(scored.iter().map(|r| r.max_depth_reached as f64)),
            backend_usage,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
enum Line {
    Task(TaskRow),
    Summary(Summary),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunMetrics {
    pub rows: Vec<TaskRow>,
    pub summary: Summary,
}

impl RunMetrics {
    pub fn new(rows: Vec<TaskRow>, backend_usage: BTreeMap<String, BackendUsage>) -> Self {
        let summary = Summary::from_rows(&rows, backend_usage);
        Self { rows, summary }
    }

    /// The stored summary agrees exactly with a recomputation from the rows.
    pub fn check(&self) -> Result<(), String> {
        let again = Summary::from_rows(&self.rows, self.summary.backend_usage.clone());
        if again == self.summary {
            Ok(())
        } else {
            Err(format!(
                "summary {:?} does not match its rows, which give {:?}",
                self.summary, again
            ))
        }
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for row in &self.rows {
            out.push_str(&serde_json::to_string(&Line::Task(row.clone())).expect("rows serialize"));
            out.push('\n');
        }
        out.push_str(
            &serde_json::to_string(&Line::Summary(self.summary.clone()))
                .expect("summary serializes"),
        );
        out.push('\n');
        out
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self, FileError> {
        let mut rows = Vec::new();
        let mut summary = None;
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let err = |message: String| FileError::Line {
                path: path.to_path_buf(),
                line: i + 1,
                message,
            };
            match serde_json::from_str(line).map_err(|e| err(e.to_string()))? {
                Line::Task(r) if summary.is_none() => rows.push(r),
                Line::Task(_) => return Err(err("task row after the summary".into())),
                Line::Summary(s) if summary.is_none() => summary = Some(s),
                Line::Summary(_) => return Err(err("second summary".into())),
            }
        }
        let summary = summary.ok_or_else(|| FileError::Line {
            path: path.to_path_buf(),
            line: text.lines().count(),
            message: "missing summary line".into(),
        })?;
        Ok(Self { rows, summary })
    }

    pub fn write(&self, path: &Path) -> Result<(), FileError> {
        std::fs::write(path, self.to_jsonl()).map_err(|e| FileError::io(path, e))
    }
}
