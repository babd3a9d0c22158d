//! Cost-based planner with model hook points.
//!
//! Join orders are chosen by dynamic programming over left-deep trees. Every
//! estimate the search uses (single-table rows, join-subproblem rows, node
//! costs) goes through a [`HookProvider`] first and falls back to the builtin
//! estimator when the provider declines, fails, or returns an unusable value.

pub mod cost;
mod directive;
pub mod estimate;
mod hooks;

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::{Catalog, Table};
use crate::session::{FallbackCounters, SessionState, SteerDecision};
use crate::sql::{select_tq, BindError, CompareOp, Predicate, PredicateSet, SelectQuery, TableSet};

pub use cost::{
    cost_node, exclusive_cost, structural_cost, ChildCosts, CostConstants, CostFeatures,
};
pub use directive::{DirectiveError, PlanDirective};
pub use estimate::{baseline_join_rows, baseline_selectivity};
pub use hooks::{
    CandidateSummary, CardEstRequest, FailingHooks, FilterSpec, FnHooks, HookOutcome, HookProvider,
    JoinSpec, NoHooks, QuerySpec, SteerAnswer, SteerRequest,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum NodeType {
    SeqScan,
    IndexScan,
    #[serde(alias = "NestLoop", alias = "NestedLoop")]
    NestLoopJoin,
    HashJoin,
}

impl NodeType {
    pub fn is_join(self) -> bool {
        matches!(self, NodeType::NestLoopJoin | NodeType::HashJoin)
    }

    pub fn name(self) -> &'static str {
        match self {
            NodeType::SeqScan => "SeqScan",
            NodeType::IndexScan => "IndexScan",
            NodeType::NestLoopJoin => "NestLoopJoin",
            NodeType::HashJoin => "HashJoin",
        }
    }
}

impl fmt::Display for NodeType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Operator families a plan may use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct HintSet {
    pub enable_hashjoin: bool,
    pub enable_nestloop: bool,
    pub enable_indexscan: bool,
    pub enable_seqscan: bool,
}

impl HintSet {
    pub const fn all() -> Self {
        HintSet {
            enable_hashjoin: true,
            enable_nestloop: true,
            enable_indexscan: true,
            enable_seqscan: true,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.enable_hashjoin || self.enable_nestloop) {
            return Err("at least one join method must stay enabled".into());
        }
        if !(self.enable_seqscan || self.enable_indexscan) {
            return Err("at least one scan method must stay enabled".into());
        }
        Ok(())
    }

    /// The five-member steering family: all enabled, no hash join, no nested
    /// loop, no index scan, and sequential scans with nested loops only.
    pub fn default_family() -> Vec<HintSet> {
        let all = HintSet::all();
        vec![
            all,
            HintSet {
                enable_hashjoin: false,
                ..all
            },
            HintSet {
                enable_nestloop: false,
                ..all
            },
            HintSet {
                enable_indexscan: false,
                ..all
            },
            HintSet {
                enable_hashjoin: false,
                enable_indexscan: false,
                ..all
            },
        ]
    }

    /// Parse a `+`-separated list of enabled operators, e.g.
    /// `seqscan+nestloop` or `all`.
    pub fn parse(spec: &str) -> Result<HintSet, String> {
        let spec = spec.trim().to_ascii_lowercase();
        if spec == "all" {
            return Ok(HintSet::all());
        }
        let mut h = HintSet {
            enable_hashjoin: false,
            enable_nestloop: false,
            enable_indexscan: false,
            enable_seqscan: false,
        };
        for part in spec.split('+').map(str::trim) {
            match part {
                "hashjoin" | "hash" => h.enable_hashjoin = true,
                "nestloop" | "nest" => h.enable_nestloop = true,
                "indexscan" | "index" => h.enable_indexscan = true,
                "seqscan" | "seq" => h.enable_seqscan = true,
                other => return Err(format!("unknown operator \"{other}\" in hint set")),
            }
        }
        h.validate()?;
        Ok(h)
    }

    pub fn allows(&self, t: NodeType) -> bool {
        match t {
            NodeType::SeqScan => self.enable_seqscan,
            NodeType::IndexScan => self.enable_indexscan,
            NodeType::NestLoopJoin => self.enable_nestloop,
            NodeType::HashJoin => self.enable_hashjoin,
        }
    }
}

impl fmt::Display for HintSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = [
            (self.enable_hashjoin, "hashjoin"),
            (self.enable_nestloop, "nestloop"),
            (self.enable_indexscan, "indexscan"),
            (self.enable_seqscan, "seqscan"),
        ]
        .iter()
        .filter(|(on, _)| *on)
        .map(|(_, n)| *n)
        .collect();
        f.write_str(&names.join("+"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanNode {
    /// Preorder position within the plan.
    pub node_id: usize,
    pub node_type: NodeType,
    /// Scanned table (scans only).
    pub table: Option<String>,
    /// Filters for scans, join predicates for joins.
    pub quals: PredicateSet,
    /// Primary-key equality driving an index scan.
    pub index_cond: Option<Predicate>,
    pub est_rows: f64,
    pub est_cost: f64,
    /// Empty for scans; `[outer, inner]` for joins.
    pub children: Vec<PlanNode>,
}

impl PlanNode {
    pub fn preorder(&self) -> Vec<&PlanNode> {
        let mut out = vec![self];
        for c in &self.children {
            out.extend(c.preorder());
        }
        out
    }

    pub fn node_count(&self) -> usize {
        1 + self
            .children
            .iter()
            .map(PlanNode::node_count)
            .sum::<usize>()
    }

    /// Scanned tables, left to right.
    pub fn tables(&self) -> Vec<&str> {
        match &self.table {
            Some(t) => vec![t.as_str()],
            None => self.children.iter().flat_map(PlanNode::tables).collect(),
        }
    }

    pub fn outer(&self) -> Option<&PlanNode> {
        self.children.first()
    }

    pub fn inner(&self) -> Option<&PlanNode> {
        self.children.get(1)
    }

    /// Same operators, tables and tree shape, ignoring estimates.
    pub fn same_shape(&self, other: &PlanNode) -> bool {
        self.node_type == other.node_type
            && self.table == other.table
            && self.children.len() == other.children.len()
            && self
                .children
                .iter()
                .zip(&other.children)
                .all(|(a, b)| a.same_shape(b))
    }

    pub(crate) fn renumber(&mut self) {
        fn walk(n: &mut PlanNode, next: &mut usize) {
            n.node_id = *next;
            *next += 1;
            for c in &mut n.children {
                walk(c, next);
            }
        }
        let mut next = 0;
        walk(self, &mut next);
    }

    pub fn to_directive(&self) -> PlanDirective {
        match (&self.table, self.children.as_slice()) {
            (Some(t), _) => PlanDirective::Scan {
                scan: self.node_type,
                table: t.clone(),
            },
            (None, [l, r]) => PlanDirective::Join {
                join: self.node_type,
                left: Box::new(l.to_directive()),
                right: Box::new(r.to_directive()),
            },
            _ => unreachable!("join nodes have two children"),
        }
    }

    /// Structured snapshot: the directive form extended with ids, quals and
    /// estimates.
    pub fn to_json(&self) -> serde_json::Value {
        let quals: Vec<String> = self.quals.iter().map(ToString::to_string).collect();
        let mut obj = serde_json::Map::new();
        obj.insert("node_id".into(), self.node_id.into());
        match &self.table {
            Some(t) => {
                obj.insert("scan".into(), self.node_type.name().into());
                obj.insert("table".into(), t.clone().into());
            }
            None => {
                obj.insert("join".into(), self.node_type.name().into());
            }
        }
        obj.insert("quals".into(), quals.into());
        obj.insert("est_rows".into(), self.est_rows.into());
        obj.insert("est_cost".into(), self.est_cost.into());
        if let [l, r] = self.children.as_slice() {
            obj.insert("left".into(), l.to_json());
            obj.insert("right".into(), r.to_json());
        }
        serde_json::Value::Object(obj)
    }

    /// Directive form annotated with `est_rows` per node; the RUNTIME payload.
    pub fn runtime_payload(&self) -> serde_json::Value {
        let mut obj = serde_json::Map::new();
        match &self.table {
            Some(t) => {
                obj.insert("scan".into(), self.node_type.name().into());
                obj.insert("table".into(), t.clone().into());
            }
            None => {
                obj.insert("join".into(), self.node_type.name().into());
            }
        }
        obj.insert("est_rows".into(), self.est_rows.into());
        if let [l, r] = self.children.as_slice() {
            obj.insert("left".into(), l.runtime_payload());
            obj.insert("right".into(), r.runtime_payload());
        }
        serde_json::Value::Object(obj)
    }

    /// The text after `on` in EXPLAIN output.
    pub fn relation_label(&self) -> String {
        match &self.table {
            Some(t) => t.clone(),
            None if self.quals.is_empty() => "true".into(),
            None => {
                let preds: Vec<String> = self.quals.iter().map(ToString::to_string).collect();
                preds.join(" AND ")
            }
        }
    }
}

#[derive(Debug, Error)]
pub enum PlanError {
    #[error(transparent)]
    Bind(#[from] BindError),
    #[error("query over {0} needs a cross product; set allow_cross_products to plan it")]
    CrossProduct(String),
    #[error(transparent)]
    Directive(#[from] DirectiveError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlannerConfig {
    pub costs: CostConstants,
    pub allow_cross_products: bool,
    pub hint_family: Vec<HintSet>,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        PlannerConfig {
            costs: CostConstants::default(),
            allow_cross_products: false,
            hint_family: HintSet::default_family(),
        }
    }
}

struct Rel<'c> {
    name: String,
    table: &'c Table,
    filters: PredicateSet,
    pk_eq: Option<Predicate>,
}

/// Per-query planning state. Estimates are computed once per table or join
/// subproblem and shared by every plan built from this context.
pub(crate) struct QueryContext<'c> {
    rels: Vec<Rel<'c>>,
    /// (relation index, relation index, predicate)
    joins: Vec<(usize, usize, Predicate)>,
    scan_rows: Vec<Option<f64>>,
    subset_rows: HashMap<u64, f64>,
    exclusive_costs: HashMap<[u64; 7], f64>,
}

impl<'c> QueryContext<'c> {
    fn new(catalog: &'c Catalog, query: &SelectQuery) -> Result<Self, PlanError> {
        let (tables, predicates) = select_tq(query)?;
        let mut rels = Vec::with_capacity(tables.len());
        for name in &tables {
            let table = catalog.table(name).map_err(BindError::from)?;
            let filters: PredicateSet = predicates
                .iter()
                .filter(|p| !p.is_join() && p.tables() == [name.as_str()])
                .cloned()
                .collect();
            let pk = table.def().primary_key_column().map(|c| c.name.clone());
            let pk_eq = filters
                .iter()
                .find(|p| {
                    matches!(p, Predicate::Filter { column, op: CompareOp::Eq, .. }
                        if Some(&column.column) == pk.as_ref())
                })
                .cloned();
            rels.push(Rel {
                name: name.clone(),
                table,
                filters,
                pk_eq,
            });
        }
        let index_of = |t: &str| rels.iter().position(|r| r.name == t).expect("bound table");
        let joins = predicates
            .iter()
            .filter_map(|p| match p {
                Predicate::Join { left, right } => {
                    Some((index_of(left.table()), index_of(right.table()), p.clone()))
                }
                _ => None,
            })
            .collect();
        let n = rels.len();
        Ok(QueryContext {
            rels,
            joins,
            scan_rows: vec![None; n],
            subset_rows: HashMap::new(),
            exclusive_costs: HashMap::new(),
        })
    }

    fn full_mask(&self) -> u64 {
        (1u64 << self.rels.len()) - 1
    }

    fn table_set(&self, mask: u64) -> TableSet {
        self.members(mask)
            .map(|i| self.rels[i].name.clone())
            .collect()
    }

    fn members(&self, mask: u64) -> impl Iterator<Item = usize> {
        (0..self.rels.len()).filter(move |i| mask & (1 << i) != 0)
    }

    /// Join predicates with one side in `left` and the other in `right`.
    fn connecting(&self, left: u64, right: u64) -> PredicateSet {
        self.joins
            .iter()
            .filter(|(a, b, _)| {
                let (a, b) = (1u64 << a, 1u64 << b);
                (left & a != 0 && right & b != 0) || (left & b != 0 && right & a != 0)
            })
            .map(|(_, _, p)| p.clone())
            .collect()
    }

    fn subproblem(&self, mask: u64) -> CardEstRequest {
        let mut predicates: PredicateSet = self
            .members(mask)
            .flat_map(|i| self.rels[i].filters.iter().cloned())
            .collect();
        for (a, b, p) in &self.joins {
            if mask & (1 << a) != 0 && mask & (1 << b) != 0 {
                predicates.insert(p.clone());
            }
        }
        CardEstRequest {
            tables: self.table_set(mask),
            predicates,
        }
    }

    fn product_rows(&self, mask: u64) -> f64 {
        self.members(mask)
            .map(|i| self.rels[i].table.def().row_count as f64)
            .product()
    }
}

/// Validate a selectivity from a hook: usable values are finite and within
/// [0, 1]; anything else is rejected (never clamped).
fn accept_selectivity(outcome: Option<HookOutcome<f64>>, fallbacks: &mut u64) -> Option<f64> {
    match outcome? {
        HookOutcome::Value(s) if s.is_finite() && (0.0..=1.0).contains(&s) => Some(s),
        HookOutcome::Value(s) => {
            tracing::debug!(selectivity = s, "rejected out-of-range selectivity");
            *fallbacks += 1;
            None
        }
        HookOutcome::Fallback(reason) => {
            tracing::debug!(%reason, "cardinality hook fell back");
            *fallbacks += 1;
            None
        }
    }
}

pub struct Planner<'a> {
    catalog: &'a Catalog,
    config: &'a PlannerConfig,
}

struct Env<'h> {
    hooks: &'h mut dyn HookProvider,
    fallbacks: &'h mut FallbackCounters,
}

impl<'a> Planner<'a> {
    pub fn new(catalog: &'a Catalog, config: &'a PlannerConfig) -> Self {
        Planner { catalog, config }
    }

    pub fn config(&self) -> &PlannerConfig {
        self.config
    }

    /// Plan a bound SELECT under the session's hint set.
    pub fn plan(
        &self,
        query: &SelectQuery,
        session: &mut SessionState,
        hooks: &mut dyn HookProvider,
    ) -> Result<PlanNode, PlanError> {
        let hints = session.hints;
        self.plan_with_hints(query, &hints, session, hooks)
    }

    pub fn plan_with_hints(
        &self,
        query: &SelectQuery,
        hints: &HintSet,
        session: &mut SessionState,
        hooks: &mut dyn HookProvider,
    ) -> Result<PlanNode, PlanError> {
        let mut ctx = QueryContext::new(self.catalog, query)?;
        let mut env = Env {
            hooks,
            fallbacks: &mut session.fallbacks,
        };
        self.search(&mut ctx, hints, &mut env)
    }

    /// Build one candidate per hint set of the configured family, let the
    /// steering hook pick one (or supply a directive), and fall back to the
    /// ordinary plan when the answer is unusable.
    pub fn steer(
        &self,
        query: &SelectQuery,
        session: &mut SessionState,
        hooks: &mut dyn HookProvider,
    ) -> Result<PlanNode, PlanError> {
        let mut ctx = QueryContext::new(self.catalog, query)?;
        let hints = session.hints;
        let (outcome, candidates) = {
            let mut env = Env {
                hooks: &mut *hooks,
                fallbacks: &mut session.fallbacks,
            };
            let mut candidates = Vec::with_capacity(self.config.hint_family.len());
            for h in &self.config.hint_family {
                candidates.push(self.search(&mut ctx, h, &mut env)?);
            }
            let request = SteerRequest {
                query: ctx.subproblem(ctx.full_mask()).spec(),
                candidates: self
                    .config
                    .hint_family
                    .iter()
                    .zip(&candidates)
                    .map(|(h, p)| CandidateSummary {
                        hint_set: *h,
                        est_cost: p.est_cost,
                        est_rows: p.est_rows,
                    })
                    .collect(),
            };
            (env.hooks.steer(&request), candidates)
        };

        let failure = match outcome {
            None => {
                session.last_steer = None;
                let mut env = Env {
                    hooks,
                    fallbacks: &mut session.fallbacks,
                };
                return self.search(&mut ctx, &hints, &mut env);
            }
            Some(HookOutcome::Value(SteerAnswer::Choice(i))) if i < candidates.len() => {
                session.last_steer = Some(SteerDecision::Candidate(i));
                return Ok(candidates.into_iter().nth(i).expect("index checked"));
            }
            Some(HookOutcome::Value(SteerAnswer::Choice(i))) => {
                format!(
                    "choice {i} out of range for {} candidates",
                    candidates.len()
                )
            }
            Some(HookOutcome::Value(SteerAnswer::Directive(d))) => {
                let mut env = Env {
                    hooks: &mut *hooks,
                    fallbacks: &mut session.fallbacks,
                };
                match self.build_directive(&mut ctx, &d, &mut env) {
                    Ok(plan) => {
                        session.last_steer = Some(SteerDecision::Directive);
                        return Ok(plan);
                    }
                    Err(e) => e.to_string(),
                }
            }
            Some(HookOutcome::Fallback(reason)) => reason,
        };
        tracing::debug!(reason = %failure, "steering fell back to the ordinary plan");
        session.fallbacks.steer += 1;
        session.last_steer = Some(SteerDecision::Fallback(failure));
        let mut env = Env {
            hooks,
            fallbacks: &mut session.fallbacks,
        };
        self.search(&mut ctx, &hints, &mut env)
    }

    /// Turn an externally supplied join tree into an executable, annotated
    /// plan whose shape follows the directive exactly.
    pub fn apply_plan_directive(
        &self,
        directive: &PlanDirective,
        query: &SelectQuery,
        session: &mut SessionState,
        hooks: &mut dyn HookProvider,
    ) -> Result<PlanNode, PlanError> {
        let mut ctx = QueryContext::new(self.catalog, query)?;
        let mut env = Env {
            hooks,
            fallbacks: &mut session.fallbacks,
        };
        Ok(self.build_directive(&mut ctx, directive, &mut env)?)
    }

    fn search(
        &self,
        ctx: &mut QueryContext<'_>,
        hints: &HintSet,
        env: &mut Env<'_>,
    ) -> Result<PlanNode, PlanError> {
        let n = ctx.rels.len();
        let mut best: HashMap<u64, PlanNode> = HashMap::new();
        let scans: Vec<PlanNode> = (0..n).map(|i| self.scan_node(ctx, i, hints, env)).collect();
        for (i, s) in scans.iter().enumerate() {
            best.insert(1 << i, s.clone());
        }
        let join_types: Vec<NodeType> = [NodeType::NestLoopJoin, NodeType::HashJoin]
            .into_iter()
            .filter(|t| hints.allows(*t))
            .collect();

        for size in 2..=n {
            for mask in 1u64..=ctx.full_mask() {
                if mask.count_ones() as usize != size {
                    continue;
                }
                let mut chosen: Option<PlanNode> = None;
                for r in 0..n {
                    let inner_bit = 1u64 << r;
                    if mask & inner_bit == 0 {
                        continue;
                    }
                    let left = mask ^ inner_bit;
                    let Some(outer) = best.get(&left) else {
                        continue;
                    };
                    let preds = ctx.connecting(left, inner_bit);
                    if preds.is_empty() && !self.config.allow_cross_products {
                        continue;
                    }
                    let rows = self.subset_rows(ctx, mask, left, inner_bit, env);
                    for jt in &join_types {
                        let node =
                            self.join_node(ctx, *jt, outer, &scans[r], preds.clone(), rows, env);
                        if chosen.as_ref().is_none_or(|c| node.est_cost < c.est_cost) {
                            chosen = Some(node);
                        }
                    }
                }
                if let Some(c) = chosen {
                    best.insert(mask, c);
                }
            }
        }
        let mut plan = best.remove(&ctx.full_mask()).ok_or_else(|| {
            let names: Vec<&str> = ctx.rels.iter().map(|r| r.name.as_str()).collect();
            PlanError::CrossProduct(names.join(", "))
        })?;
        plan.renumber();
        Ok(plan)
    }

    fn scan_rows(&self, ctx: &mut QueryContext<'_>, i: usize, env: &mut Env<'_>) -> f64 {
        if let Some(rows) = ctx.scan_rows[i] {
            return rows;
        }
        let rel = &ctx.rels[i];
        let request = ctx.subproblem(1 << i);
        let row_count = rel.table.def().row_count as f64;
        let sel = accept_selectivity(
            env.hooks.table_selectivity(&request),
            &mut env.fallbacks.cardest,
        )
        .unwrap_or_else(|| baseline_selectivity(rel.table, &rel.filters));
        let rows = (sel * row_count).max(1.0);
        ctx.scan_rows[i] = Some(rows);
        rows
    }

    /// Row estimate for the join subproblem `mask`, computed on first use
    /// from the split `left` / `right`.
    fn subset_rows(
        &self,
        ctx: &mut QueryContext<'_>,
        mask: u64,
        left: u64,
        right: u64,
        env: &mut Env<'_>,
    ) -> f64 {
        if mask.count_ones() == 1 {
            return self.scan_rows(ctx, mask.trailing_zeros() as usize, env);
        }
        if let Some(rows) = ctx.subset_rows.get(&mask) {
            return *rows;
        }
        let request = ctx.subproblem(mask);
        let rows = match accept_selectivity(
            env.hooks.join_selectivity(&request),
            &mut env.fallbacks.cardest,
        ) {
            Some(sel) => (sel * ctx.product_rows(mask)).max(1.0),
            None => {
                let l = self.subset_rows_any(ctx, left, env);
                let r = self.subset_rows_any(ctx, right, env);
                self.baseline_split_rows(ctx, left, right, l, r)
            }
        };
        ctx.subset_rows.insert(mask, rows);
        rows
    }

    /// Rows of an arbitrary subset, splitting off its highest member when it
    /// has not been estimated yet.
    fn subset_rows_any(&self, ctx: &mut QueryContext<'_>, mask: u64, env: &mut Env<'_>) -> f64 {
        if mask.count_ones() == 1 {
            return self.scan_rows(ctx, mask.trailing_zeros() as usize, env);
        }
        if let Some(rows) = ctx.subset_rows.get(&mask) {
            return *rows;
        }
        let top = 1u64 << (63 - mask.leading_zeros());
        self.subset_rows(ctx, mask, mask ^ top, top, env)
    }

    fn baseline_split_rows(
        &self,
        ctx: &QueryContext<'_>,
        left: u64,
        right: u64,
        l_rows: f64,
        r_rows: f64,
    ) -> f64 {
        let preds = ctx.connecting(left, right);
        let mut rows: Option<f64> = None;
        for p in &preds {
            let Predicate::Join { left: a, right: b } = p else {
                continue;
            };
            let nd = |c: &crate::sql::ColumnRef| {
                let idx = ctx
                    .rels
                    .iter()
                    .position(|r| r.name == c.table())
                    .expect("bound");
                estimate::column_distinct(ctx.rels[idx].table, &c.column)
            };
            let (nd_a, nd_b) = (nd(a), nd(b));
            rows = Some(match rows {
                None => baseline_join_rows(l_rows, r_rows, nd_a, nd_b),
                Some(r) => (r / nd_a.max(nd_b) as f64).max(1.0),
            });
        }
        rows.unwrap_or((l_rows * r_rows).max(1.0))
    }

    fn exclusive(
        &self,
        ctx: &mut QueryContext<'_>,
        features: &CostFeatures,
        env: &mut Env<'_>,
    ) -> f64 {
        let key = [
            features.node_type as u64,
            features.rows_in.to_bits(),
            features.rows_out.to_bits(),
            features.pages.to_bits(),
            features.qual_count.to_bits(),
            features.outer_rows.to_bits(),
            features.inner_rows.to_bits(),
        ];
        if let Some(c) = ctx.exclusive_costs.get(&key) {
            return *c;
        }
        let cost = match env.hooks.node_cost(features) {
            Some(HookOutcome::Value(c)) if c.is_finite() && c >= 0.0 => c,
            Some(outcome) => {
                tracing::debug!(?outcome, "cost hook fell back");
                env.fallbacks.cost += 1;
                exclusive_cost(&self.config.costs, features)
            }
            None => exclusive_cost(&self.config.costs, features),
        };
        ctx.exclusive_costs.insert(key, cost);
        cost
    }

    fn scan_node(
        &self,
        ctx: &mut QueryContext<'_>,
        i: usize,
        hints: &HintSet,
        env: &mut Env<'_>,
    ) -> PlanNode {
        let mut options = Vec::with_capacity(2);
        if hints.enable_seqscan {
            options.push(NodeType::SeqScan);
        }
        if hints.enable_indexscan && ctx.rels[i].pk_eq.is_some() {
            options.push(NodeType::IndexScan);
        }
        if options.is_empty() {
            // Only index scans are allowed but no key equality exists.
            options.push(NodeType::SeqScan);
        }
        let mut chosen: Option<PlanNode> = None;
        for t in options {
            let node = self.scan_of_type(ctx, i, t, env);
            if chosen.as_ref().is_none_or(|c| node.est_cost < c.est_cost) {
                chosen = Some(node);
            }
        }
        chosen.expect("at least one scan option")
    }

    /// Scan of relation `i` with a fixed access method. Index scans require a
    /// primary-key equality among the relation's filters.
    fn scan_of_type(
        &self,
        ctx: &mut QueryContext<'_>,
        i: usize,
        t: NodeType,
        env: &mut Env<'_>,
    ) -> PlanNode {
        let rows = self.scan_rows(ctx, i, env);
        let rel = &ctx.rels[i];
        let def = rel.table.def();
        let features = CostFeatures::scan(
            t,
            def.row_count as f64,
            rows,
            def.pages() as f64,
            rel.filters.len(),
        );
        let (name, quals) = (rel.name.clone(), rel.filters.clone());
        let index_cond = if t == NodeType::IndexScan {
            rel.pk_eq.clone()
        } else {
            None
        };
        let cost = self.exclusive(ctx, &features, env);
        PlanNode {
            node_id: 0,
            node_type: t,
            table: Some(name),
            quals,
            index_cond,
            est_rows: rows,
            est_cost: cost,
            children: Vec::new(),
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn join_node(
        &self,
        ctx: &mut QueryContext<'_>,
        node_type: NodeType,
        outer: &PlanNode,
        inner: &PlanNode,
        preds: PredicateSet,
        rows: f64,
        env: &mut Env<'_>,
    ) -> PlanNode {
        let features =
            CostFeatures::join(node_type, outer.est_rows, inner.est_rows, rows, preds.len());
        let children = ChildCosts {
            outer: outer.est_cost,
            inner: inner.est_cost,
        };
        let cost =
            structural_cost(node_type, &features, children) + self.exclusive(ctx, &features, env);
        PlanNode {
            node_id: 0,
            node_type,
            table: None,
            quals: preds,
            index_cond: None,
            est_rows: rows,
            est_cost: cost,
            children: vec![outer.clone(), inner.clone()],
        }
    }

    /// Rough latency estimate for EXPLAIN when a runtime model is routed.
    pub fn predict_runtime(
        &self,
        plan: &PlanNode,
        session: &mut SessionState,
        hooks: &mut dyn HookProvider,
    ) -> Option<f64> {
        match hooks.predict_runtime(&plan.runtime_payload())? {
            HookOutcome::Value(ms) if ms.is_finite() && ms >= 0.0 => Some(ms),
            _ => {
                session.fallbacks.runtime += 1;
                None
            }
        }
    }
}
