//! Decision points where an external provider may supply a value in place
//! of the builtin estimator.
//!
//! A provider answers `None` when it has nothing installed for a hook (the
//! builtin path is used silently) and `Some(HookOutcome::Fallback(..))` when
//! it tried and failed. The planner validates every value it receives and
//! treats anything unusable as a fallback.

use serde::{Deserialize, Serialize};

use super::cost::CostFeatures;
use super::directive::PlanDirective;
use super::HintSet;
use crate::sql::{CompareOp, Predicate, PredicateSet, TableSet};
use crate::value::Value;

#[derive(Debug, Clone, PartialEq)]
pub enum HookOutcome<T> {
    Value(T),
    Fallback(String),
}

/// A (tables, predicates) pair whose selectivity is requested. For a single
/// table the predicates are that table's filters; for a join subproblem they
/// are all filters and joins among its tables.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CardEstRequest {
    pub tables: TableSet,
    pub predicates: PredicateSet,
}

impl CardEstRequest {
    pub fn spec(&self) -> QuerySpec {
        QuerySpec::new(&self.tables, &self.predicates)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterSpec {
    pub table: String,
    pub column: String,
    pub op: CompareOp,
    pub value: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JoinSpec {
    pub left: String,
    pub right: String,
}

/// Wire form of a query's (tables, predicates): the CARDEST payload and the
/// `query` part of the STEER payload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuerySpec {
    pub tables: Vec<String>,
    pub filters: Vec<FilterSpec>,
    pub joins: Vec<JoinSpec>,
}

impl QuerySpec {
    pub fn new(tables: &TableSet, predicates: &PredicateSet) -> Self {
        let mut filters = Vec::new();
        let mut joins = Vec::new();
        for p in predicates {
            match p {
                Predicate::Filter { column, op, value } => filters.push(FilterSpec {
                    table: column.table().to_string(),
                    column: column.column.clone(),
                    op: *op,
                    value: value.clone(),
                }),
                Predicate::Join { left, right } => joins.push(JoinSpec {
                    left: left.to_string(),
                    right: right.to_string(),
                }),
            }
        }
        QuerySpec {
            tables: tables.iter().cloned().collect(),
            filters,
            joins,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSummary {
    pub hint_set: HintSet,
    pub est_cost: f64,
    pub est_rows: f64,
}

/// STEER payload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteerRequest {
    pub query: QuerySpec,
    pub candidates: Vec<CandidateSummary>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SteerAnswer {
    Choice(usize),
    Directive(PlanDirective),
}

pub trait HookProvider {
    fn table_selectivity(&mut self, _request: &CardEstRequest) -> Option<HookOutcome<f64>> {
        None
    }

    fn join_selectivity(&mut self, _request: &CardEstRequest) -> Option<HookOutcome<f64>> {
        None
    }

    /// Exclusive cost of one plan node.
    fn node_cost(&mut self, _features: &CostFeatures) -> Option<HookOutcome<f64>> {
        None
    }

    fn steer(&mut self, _request: &SteerRequest) -> Option<HookOutcome<SteerAnswer>> {
        None
    }

    /// Predicted latency in milliseconds for a finished plan (directive form
    /// with `est_rows` per node).
    fn predict_runtime(&mut self, _plan: &serde_json::Value) -> Option<HookOutcome<f64>> {
        None
    }
}

/// Builtin behavior only.
#[derive(Debug, Default, Clone, Copy)]
pub struct NoHooks;

impl HookProvider for NoHooks {}

/// In-process provider that answers both cardinality hooks with a function
/// of the request.
pub struct FnHooks<F>(pub F);

impl<F> HookProvider for FnHooks<F>
where
    F: FnMut(&CardEstRequest) -> f64,
{
    fn table_selectivity(&mut self, request: &CardEstRequest) -> Option<HookOutcome<f64>> {
        Some(HookOutcome::Value((self.0)(request)))
    }

    fn join_selectivity(&mut self, request: &CardEstRequest) -> Option<HookOutcome<f64>> {
        Some(HookOutcome::Value((self.0)(request)))
    }
}

/// Provider whose every hook reports a failure.
#[derive(Debug, Default, Clone, Copy)]
pub struct FailingHooks;

impl HookProvider for FailingHooks {
    fn table_selectivity(&mut self, _: &CardEstRequest) -> Option<HookOutcome<f64>> {
        Some(HookOutcome::Fallback("failing provider".into()))
    }

    fn join_selectivity(&mut self, _: &CardEstRequest) -> Option<HookOutcome<f64>> {
        Some(HookOutcome::Fallback("failing provider".into()))
    }

    fn node_cost(&mut self, _: &CostFeatures) -> Option<HookOutcome<f64>> {
        Some(HookOutcome::Fallback("failing provider".into()))
    }

    fn steer(&mut self, _: &SteerRequest) -> Option<HookOutcome<SteerAnswer>> {
        Some(HookOutcome::Fallback("failing provider".into()))
    }

    fn predict_runtime(&mut self, _: &serde_json::Value) -> Option<HookOutcome<f64>> {
        Some(HookOutcome::Fallback("failing provider".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn query_spec_wire_shape() {
        let tables: TableSet = ["a".to_string(), "b".to_string()].into();
        let preds: PredicateSet = [
            Predicate::join(("b", "y"), ("a", "x")),
            Predicate::filter("a", "z", CompareOp::Le, Value::Float(2.5)),
        ]
        .into();
        let json = serde_json::to_value(QuerySpec::new(&tables, &preds)).unwrap();
        assert_eq!(
            json,
            serde_json::json!({
                "tables": ["a", "b"],
                "filters": [{"table": "a", "column": "z", "op": "<=", "value": 2.5}],
                "joins": [{"left": "a.x", "right": "b.y"}]
            })
        );
    }
}
