//! Search trace events.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::routing::RoutingDecision;
use crate::value::{BatchFusion, ValueSignals};

/// Everything that happened in one search iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationTrace {
    pub task_id: String,
    pub iteration: usize,
    /// Node ids from the root to the selected leaf.
    pub path: Vec<usize>,
    pub routing: Option<RoutingDecision>,
    pub batch: Option<BatchRecord>,
    /// Node ids that received the backed-up value, and the value.
    pub backprop: Option<Backprop>,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchRecord {
    pub parent: usize,
    pub children: Vec<usize>,
    pub actions: Vec<String>,
    pub signals: Vec<ValueSignals>,
    pub fusion: BatchFusion,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Backprop {
    pub path: Vec<usize>,
    pub value: f64,
}

pub trait TraceSink {
    fn record(&mut self, event: IterationTrace);
}

/// Discards every event.
#[derive(Debug, Default, Clone, Copy)]
pub struct NoTrace;

impl TraceSink for NoTrace {
    fn record(&mut self, _: IterationTrace) {}
}

impl TraceSink for Vec<IterationTrace> {
    fn record(&mut self, event: IterationTrace) {
        self.push(event);
    }
}
