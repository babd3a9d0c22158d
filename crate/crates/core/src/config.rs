//! Engine configuration: `key = value` lines, `#` starts a comment.

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::catalog::{DEFAULT_HISTOGRAM_BUCKETS, DEFAULT_MCV_LIMIT};
use crate::collect::DEFAULT_BUFFER_CAP;
use crate::ipc::DEFAULT_STARTUP_TIMEOUT_MS;
use crate::planner::{HintSet, PlannerConfig};
use crate::session::DEFAULT_WORKER_TIMEOUT_MS;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Invalid { line: usize, message: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct EngineConfig {
    pub data_dir: PathBuf,
    pub worker_timeout_ms: u64,
    pub startup_timeout_ms: u64,
    pub planner: PlannerConfig,
    pub collector_buffer_cap: usize,
    pub histogram_buckets: usize,
    pub mcv_limit: usize,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            data_dir: PathBuf::from("baihe-data"),
            worker_timeout_ms: DEFAULT_WORKER_TIMEOUT_MS,
            startup_timeout_ms: DEFAULT_STARTUP_TIMEOUT_MS,
            planner: PlannerConfig::default(),
            collector_buffer_cap: DEFAULT_BUFFER_CAP,
            histogram_buckets: DEFAULT_HISTOGRAM_BUCKETS,
            mcv_limit: DEFAULT_MCV_LIMIT,
        }
    }
}

impl EngineConfig {
    pub fn with_data_dir(data_dir: impl Into<PathBuf>) -> Self {
        EngineConfig {
            data_dir: data_dir.into(),
            ..Default::default()
        }
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }

    /// Parse config text over the defaults. `hint_sets` is a comma-separated
    /// list of `+`-joined operator names, e.g. `all, seqscan+nestloop`.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = EngineConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let invalid = |message: String| ConfigError::Invalid { line: i + 1, message };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| invalid(format!("expected key = value, got \"{line}\"")))?;
            let (key, value) = (key.trim(), value.trim());
            let num = |v: &str| -> Result<f64, ConfigError> {
                v.parse::<f64>()
                    .map_err(|_| invalid(format!("{key}: \"{v}\" is not a number")))
            };
            let int = |v: &str| -> Result<u64, ConfigError> {
                v.parse::<u64>()
                    .ok()
                    .filter(|n| *n > 0)
                    .ok_or_else(|| invalid(format!("{key}: \"{v}\" is not a positive integer")))
            };
            let costs = &mut cfg.planner.costs;
            match key {
                "data_dir" => cfg.data_dir = PathBuf::from(value),
                "worker_timeout_ms" => cfg.worker_timeout_ms = int(value)?,
                "startup_timeout_ms" => cfg.startup_timeout_ms = int(value)?,
                "collector_buffer_cap" => cfg.collector_buffer_cap = int(value)? as usize,
                "histogram_buckets" => cfg.histogram_buckets = int(value)? as usize,
                "mcv_limit" => cfg.mcv_limit = value.parse().map_err(|_| invalid(format!("{key}: bad integer")))?,
                "seq_page_cost" => costs.seq_page_cost = num(value)?,
                "cpu_tuple_cost" => costs.cpu_tuple_cost = num(value)?,
                "cpu_operator_cost" => costs.cpu_operator_cost = num(value)?,
                "index_page_cost" => costs.index_page_cost = num(value)?,
                "hash_build_cost_per_row" => costs.hash_build_cost_per_row = num(value)?,
                "allow_cross_products" => {
                    cfg.planner.allow_cross_products = match value.to_ascii_lowercase().as_str() {
                        "true" | "on" | "1" | "yes" => true,
                        "false" | "off" | "0" | "no" => false,
                        _ => return Err(invalid(format!("{key}: \"{value}\" is not a boolean"))),
                    }
                }
                "hint_sets" => {
                    let family = value
                        .split(',')
                        .map(HintSet::parse)
                        .collect::<Result<Vec<_>, _>>()
                        .map_err(invalid)?;
                    if family.is_empty() {
                        return Err(invalid("hint_sets must not be empty".into()));
                    }
                    cfg.planner.hint_family = family;
                }
                other => return Err(invalid(format!("unknown key \"{other}\""))),
            }
        }
        cfg.planner
            .costs
            .validate()
            .map_err(|message| ConfigError::Invalid { line: 0, message })?;
        Ok(cfg)
    }
}
