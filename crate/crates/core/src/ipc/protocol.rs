//! Line-delimited JSON messages exchanged with model workers.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::planner::PlanDirective;

pub const PROTOCOL_VERSION: u32 = 1;
/// Longest accepted line, newline excluded.
pub const MAX_FRAME_BYTES: usize = 1 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Task {
    Cardest,
    Cost,
    Runtime,
    Steer,
}

impl Task {
    pub fn parse(s: &str) -> Option<Task> {
        Some(match s.to_ascii_uppercase().as_str() {
            "CARDEST" => Task::Cardest,
            "COST" => Task::Cost,
            "RUNTIME" => Task::Runtime,
            "STEER" => Task::Steer,
            _ => return None,
        })
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Task::Cardest => "CARDEST",
            Task::Cost => "COST",
            Task::Runtime => "RUNTIME",
            Task::Steer => "STEER",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// First line a worker writes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hello {
    pub hello: String,
    pub protocol_version: u32,
    pub tasks: Vec<Task>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Request {
    pub id: u64,
    pub task: Task,
    pub deadline_ms: u64,
    pub payload: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Response {
    pub id: u64,
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result: Option<serde_json::Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Shutdown {
    pub shutdown: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CardEstResult {
    pub selectivity: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostResult {
    pub cost: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RuntimeResult {
    pub latency_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SteerResult {
    Choice { choice: usize },
    Directive { plan_directive: PlanDirective },
}
