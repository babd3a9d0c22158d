//! Model registry, worker processes and the inference wire protocol.

mod manifest;
mod protocol;
mod registry;
mod worker;

use serde::de::DeserializeOwned;

pub use manifest::{Manifest, MANIFEST_FILE};
pub use protocol::{
    CardEstResult, CostResult, Hello, Request, Response, RuntimeResult, Shutdown, SteerResult,
    Task, MAX_FRAME_BYTES, PROTOCOL_VERSION,
};
pub use registry::{
    stats_schema, ModelEntry, ModelState, ModelStats, Registry, RegistryError,
    DEFAULT_STARTUP_TIMEOUT_MS,
};
pub use worker::{StartError, TraceEvent, TransportError, Worker, SHUTDOWN_GRACE};

use crate::planner::{
    CardEstRequest, CostFeatures, HookOutcome, HookProvider, SteerAnswer, SteerRequest,
};
use crate::session::SessionState;
use crate::sql::TableSet;

/// Hook provider backed by the models a session has routed for one query.
pub struct ModelHooks<'r> {
    registry: &'r mut Registry,
    cardest: Option<String>,
    cost: Option<String>,
    steer: Option<String>,
    runtime: Option<String>,
    deadline_ms: u64,
}

impl<'r> ModelHooks<'r> {
    pub fn route(registry: &'r mut Registry, session: &SessionState, tables: &TableSet) -> Self {
        registry.reap();
        let pick = |m: &Option<String>, task| {
            registry
                .route(m.as_deref(), task, tables)
                .map(str::to_string)
        };
        let cardest = pick(&session.ce_model, Task::Cardest);
        let cost = pick(&session.cost_model, Task::Cost);
        let steer = pick(&session.steer_model, Task::Steer);
        let runtime = pick(&session.runtime_model, Task::Runtime);
        ModelHooks {
            registry,
            cardest,
            cost,
            steer,
            runtime,
            deadline_ms: session.worker_timeout_ms,
        }
    }

    pub fn steering(&self) -> bool {
        self.steer.is_some()
    }

    pub fn predicts_runtime(&self) -> bool {
        self.runtime.is_some()
    }

    /// Send `payload` to `model` and decode the result; `convert` returns
    /// `None` for answers that are unusable.
    fn ask<T: DeserializeOwned, U>(
        &mut self,
        model: Option<&str>,
        payload: serde_json::Value,
        convert: impl FnOnce(T) -> Option<U>,
    ) -> Option<HookOutcome<U>> {
        let entry = self.registry.get_mut(model?)?;
        let raw = match entry.infer(payload, self.deadline_ms) {
            Ok(r) => r,
            Err(e) => return Some(HookOutcome::Fallback(e.to_string())),
        };
        match serde_json::from_value::<T>(raw).ok().and_then(convert) {
            Some(v) => Some(HookOutcome::Value(v)),
            None => {
                entry.record_rejected();
                Some(HookOutcome::Fallback(format!(
                    "model {} returned an unusable result",
                    entry.name
                )))
            }
        }
    }

    fn selectivity(&mut self, request: &CardEstRequest) -> Option<HookOutcome<f64>> {
        let payload = serde_json::to_value(request.spec()).expect("payload serializes");
        let model = self.cardest.clone();
        self.ask(model.as_deref(), payload, |r: CardEstResult| {
            (r.selectivity.is_finite() && (0.0..=1.0).contains(&r.selectivity))
                .then_some(r.selectivity)
        })
    }
}

impl HookProvider for ModelHooks<'_> {
    fn table_selectivity(&mut self, request: &CardEstRequest) -> Option<HookOutcome<f64>> {
        self.selectivity(request)
    }

    fn join_selectivity(&mut self, request: &CardEstRequest) -> Option<HookOutcome<f64>> {
        self.selectivity(request)
    }

    fn node_cost(&mut self, features: &CostFeatures) -> Option<HookOutcome<f64>> {
        let payload = serde_json::to_value(features).expect("payload serializes");
        let model = self.cost.clone();
        self.ask(model.as_deref(), payload, |r: CostResult| {
            (r.cost.is_finite() && r.cost >= 0.0).then_some(r.cost)
        })
    }

    fn steer(&mut self, request: &SteerRequest) -> Option<HookOutcome<SteerAnswer>> {
        let payload = serde_json::to_value(request).expect("payload serializes");
        let model = self.steer.clone();
        let n = request.candidates.len();
        self.ask(model.as_deref(), payload, |r: SteerResult| match r {
            SteerResult::Choice { choice } if choice < n => Some(SteerAnswer::Choice(choice)),
            SteerResult::Choice { .. } => None,
            SteerResult::Directive { plan_directive } => {
                Some(SteerAnswer::Directive(plan_directive))
            }
        })
    }

    fn predict_runtime(&mut self, plan: &serde_json::Value) -> Option<HookOutcome<f64>> {
        let payload = serde_json::json!({ "plan": plan });
        let model = self.runtime.clone();
        self.ask(model.as_deref(), payload, |r: RuntimeResult| {
            (r.latency_ms.is_finite() && r.latency_ms >= 0.0).then_some(r.latency_ms)
        })
    }
}
