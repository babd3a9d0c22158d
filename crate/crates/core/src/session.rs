//! Per-session variables and counters.

use crate::planner::HintSet;

pub const DEFAULT_WORKER_TIMEOUT_MS: u64 = 50;

/// Hook failures observed by this session, per hook family.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FallbackCounters {
    pub cardest: u64,
    pub cost: u64,
    pub steer: u64,
    pub runtime: u64,
}

impl FallbackCounters {
    pub fn total(&self) -> u64 {
        self.cardest + self.cost + self.steer + self.runtime
    }
}

/// Outcome of the last steering round.
#[derive(Debug, Clone, PartialEq)]
pub enum SteerDecision {
    Candidate(usize),
    Directive,
    Fallback(String),
}

#[derive(Debug, Clone)]
pub struct SessionState {
    pub ce_model: Option<String>,
    pub cost_model: Option<String>,
    pub steer_model: Option<String>,
    pub runtime_model: Option<String>,
    pub worker_timeout_ms: u64,
    pub hints: HintSet,
    pub fallbacks: FallbackCounters,
    pub last_steer: Option<SteerDecision>,
}

impl Default for SessionState {
    fn default() -> Self {
        SessionState {
            ce_model: None,
            cost_model: None,
            steer_model: None,
            runtime_model: None,
            worker_timeout_ms: DEFAULT_WORKER_TIMEOUT_MS,
            hints: HintSet::all(),
            fallbacks: FallbackCounters::default(),
            last_steer: None,
        }
    }
}

const VARIABLES: &[&str] = &[
    "baihe_ce_model",
    "baihe_cost_model",
    "baihe_steer_model",
    "baihe_runtime_model",
    "baihe_worker_timeout_ms",
    "enable_hashjoin",
    "enable_nestloop",
    "enable_indexscan",
    "enable_seqscan",
];

fn parse_bool(v: &str) -> Result<bool, String> {
    match v.to_ascii_lowercase().as_str() {
        "on" | "true" | "1" | "yes" => Ok(true),
        "off" | "false" | "0" | "no" => Ok(false),
        _ => Err(format!("\"{v}\" is not a boolean")),
    }
}

fn model_value(v: &str) -> Option<String> {
    match v.to_ascii_lowercase().as_str() {
        "" | "default" | "none" | "off" => None,
        _ => Some(v.to_string()),
    }
}

impl SessionState {
    pub fn with_timeout(worker_timeout_ms: u64) -> Self {
        SessionState {
            worker_timeout_ms,
            ..Default::default()
        }
    }

    /// Assign a session variable. Model variables may name a model that is
    /// not (yet) running; routing simply finds nothing until it is.
    pub fn set(&mut self, var: &str, value: &str) -> Result<(), String> {
        let mut hints = self.hints;
        match var.to_ascii_lowercase().as_str() {
            "baihe_ce_model" => self.ce_model = model_value(value),
            "baihe_cost_model" => self.cost_model = model_value(value),
            "baihe_steer_model" => self.steer_model = model_value(value),
            "baihe_runtime_model" => self.runtime_model = model_value(value),
            "baihe_worker_timeout_ms" => {
                self.worker_timeout_ms =
                    value.parse().ok().filter(|v| *v > 0).ok_or_else(|| {
                        format!(
                            "baihe_worker_timeout_ms must be a positive integer, got \"{value}\""
                        )
                    })?;
            }
            "enable_hashjoin" => hints.enable_hashjoin = parse_bool(value)?,
            "enable_nestloop" => hints.enable_nestloop = parse_bool(value)?,
            "enable_indexscan" => hints.enable_indexscan = parse_bool(value)?,
            "enable_seqscan" => hints.enable_seqscan = parse_bool(value)?,
            other => return Err(format!("unknown session variable \"{other}\"")),
        }
        if hints != self.hints {
            hints.validate()?;
            self.hints = hints;
        }
        Ok(())
    }

    pub fn get(&self, var: &str) -> Option<String> {
        let model = |m: &Option<String>| m.clone().unwrap_or_default();
        let flag = |b: bool| if b { "on" } else { "off" }.to_string();
        Some(match var.to_ascii_lowercase().as_str() {
            "baihe_ce_model" => model(&self.ce_model),
            "baihe_cost_model" => model(&self.cost_model),
            "baihe_steer_model" => model(&self.steer_model),
            "baihe_runtime_model" => model(&self.runtime_model),
            "baihe_worker_timeout_ms" => self.worker_timeout_ms.to_string(),
            "enable_hashjoin" => flag(self.hints.enable_hashjoin),
            "enable_nestloop" => flag(self.hints.enable_nestloop),
            "enable_indexscan" => flag(self.hints.enable_indexscan),
            "enable_seqscan" => flag(self.hints.enable_seqscan),
            _ => return None,
        })
    }

    pub fn variables(&self) -> Vec<(String, String)> {
        VARIABLES
            .iter()
            .map(|v| (v.to_string(), self.get(v).unwrap_or_default()))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn model_variables_can_be_cleared() {
        let mut s = SessionState::default();
        s.set("baihe_ce_model", "m").unwrap();
        assert_eq!(s.ce_model.as_deref(), Some("m"));
        s.set("BAIHE_CE_MODEL", "default").unwrap();
        assert_eq!(s.ce_model, None);
    }

    #[test]
    fn hint_invariants_are_enforced() {
        let mut s = SessionState::default();
        s.set("enable_hashjoin", "off").unwrap();
        assert!(s.set("enable_nestloop", "off").is_err());
        assert!(s.hints.enable_nestloop);
        s.set("enable_seqscan", "off").unwrap();
        assert!(s.set("enable_indexscan", "off").is_err());
    }

    #[test]
    fn timeout_must_be_positive() {
        let mut s = SessionState::default();
        assert!(s.set("baihe_worker_timeout_ms", "0").is_err());
        s.set("baihe_worker_timeout_ms", "75").unwrap();
        assert_eq!(s.get("baihe_worker_timeout_ms").unwrap(), "75");
        assert!(s.set("no_such_thing", "1").is_err());
    }
}
