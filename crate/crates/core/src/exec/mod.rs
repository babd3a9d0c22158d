//! Pull-based executor with per-node instrumentation.
//!
//! Each plan node becomes an operator with `open` / `next`. Rows flowing out
//! of a join are the outer row followed by the inner row. Node times are
//! inclusive of children and summed over all loops.

mod explain;

use std::collections::HashMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::{Catalog, CatalogError};
use crate::planner::{NodeType, PlanNode};
use crate::sql::{ColumnRef, CompareOp, Predicate, SelectList, SelectQuery};
use crate::value::{Row, Value};

pub use explain::{render_explain, render_plan};

#[derive(Debug, Error)]
pub enum ExecError {
    #[error(transparent)]
    Catalog(#[from] CatalogError),
    #[error("runtime type error: {0}")]
    RuntimeType(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeRuntimeStats {
    pub node_id: usize,
    /// Rows per loop (total rows divided by loops).
    pub actual_rows: u64,
    /// Inclusive wall time over all loops, in nanoseconds.
    pub wall_time_ns: u64,
    /// Times the node was started; 0 means it never ran.
    pub loops: u64,
}

#[derive(Debug, Clone)]
pub struct ExecutionReport {
    pub query_text: String,
    pub plan: PlanNode,
    /// Indexed by node id.
    pub nodes: Vec<NodeRuntimeStats>,
    pub total_time_ns: u64,
    pub result_row_count: u64,
}

impl ExecutionReport {
    pub fn node(&self, id: usize) -> Option<&NodeRuntimeStats> {
        self.nodes.get(id)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryOutput {
    pub columns: Vec<String>,
    pub rows: Vec<Row>,
}

#[derive(Default, Clone, Copy)]
struct Counter {
    rows: u64,
    loops: u64,
    ns: u64,
}

type Layout = Vec<ColumnRef>;

fn position(layout: &Layout, c: &ColumnRef) -> Result<usize, ExecError> {
    layout.iter().position(|l| l == c).ok_or_else(|| {
        ExecError::RuntimeType(format!("column {c} is not produced by this subtree"))
    })
}

/// Hash key form: equal under SQL comparison implies equal key.
fn hash_key(v: &Value) -> Option<Value> {
    match v {
        Value::Null => None,
        Value::Float(f) if f.is_nan() => None,
        Value::Float(f) if *f == 0.0 => Some(Value::Float(0.0)),
        other => Some(other.clone()),
    }
}

enum Kind<'a> {
    Scan {
        rows: &'a [Row],
        positions: Option<Vec<usize>>,
        cursor: usize,
        quals: Vec<(usize, CompareOp, Value)>,
    },
    NestLoop {
        outer: Box<Op<'a>>,
        inner: Box<Op<'a>>,
        keys: Vec<(usize, usize)>,
        current: Option<Row>,
    },
    Hash {
        outer: Box<Op<'a>>,
        inner: Box<Op<'a>>,
        keys: Vec<(usize, usize)>,
        table: HashMap<Vec<Value>, Vec<Row>>,
        current: Option<(Row, Vec<Value>, usize)>,
    },
}

struct Op<'a> {
    id: usize,
    kind: Kind<'a>,
}

impl<'a> Op<'a> {
    fn build(catalog: &'a Catalog, node: &PlanNode) -> Result<(Op<'a>, Layout), ExecError> {
        match node.node_type {
            NodeType::SeqScan | NodeType::IndexScan => {
                let name = node.table.as_deref().ok_or_else(|| {
                    ExecError::RuntimeType(format!("scan node {} has no table", node.node_id))
                })?;
                let table = catalog.table(name)?;
                let layout: Layout = table
                    .def()
                    .columns
                    .iter()
                    .map(|c| ColumnRef::new(name, &c.name))
                    .collect();
                let mut quals = Vec::new();
                for q in &node.quals {
                    let Predicate::Filter { column, op, value } = q else {
                        return Err(ExecError::RuntimeType(format!(
                            "join predicate {q} on a scan"
                        )));
                    };
                    quals.push((position(&layout, column)?, *op, value.clone()));
                }
                let positions = if node.node_type == NodeType::IndexScan {
                    match &node.index_cond {
                        Some(Predicate::Filter {
                            op: CompareOp::Eq,
                            value: Value::Int(k),
                            ..
                        }) => Some(table.index_lookup(*k).collect()),
                        other => {
                            return Err(ExecError::RuntimeType(format!(
                                "index scan on {name} without a usable key condition: {other:?}"
                            )))
                        }
                    }
                } else {
                    None
                };
                let op = Op {
                    id: node.node_id,
                    kind: Kind::Scan {
                        rows: table.rows(),
                        positions,
                        cursor: 0,
                        quals,
                    },
                };
                Ok((op, layout))
            }
            NodeType::NestLoopJoin | NodeType::HashJoin => {
                let [o, i] = node.children.as_slice() else {
                    return Err(ExecError::RuntimeType(format!(
                        "join node {} needs two inputs",
                        node.node_id
                    )));
                };
                let (outer, ol) = Op::build(catalog, o)?;
                let (inner, il) = Op::build(catalog, i)?;
                let mut keys = Vec::new();
                for q in &node.quals {
                    let Predicate::Join { left, right } = q else {
                        return Err(ExecError::RuntimeType(format!("filter {q} on a join")));
                    };
                    let key = match (position(&ol, left), position(&il, right)) {
                        (Ok(a), Ok(b)) => (a, b),
                        _ => (position(&ol, right)?, position(&il, left)?),
                    };
                    keys.push(key);
                }
                let (outer, inner) = (Box::new(outer), Box::new(inner));
                let kind = if node.node_type == NodeType::NestLoopJoin {
                    Kind::NestLoop {
                        outer,
                        inner,
                        keys,
                        current: None,
                    }
                } else {
                    Kind::Hash {
                        outer,
                        inner,
                        keys,
                        table: HashMap::new(),
                        current: None,
                    }
                };
                let mut layout = ol;
                layout.extend(il);
                Ok((
                    Op {
                        id: node.node_id,
                        kind,
                    },
                    layout,
                ))
            }
        }
    }

    fn open(&mut self, stats: &mut [Counter]) {
        let start = Instant::now();
        stats[self.id].loops += 1;
        match &mut self.kind {
            Kind::Scan { cursor, .. } => *cursor = 0,
            Kind::NestLoop { outer, current, .. } => {
                *current = None;
                outer.open(stats);
            }
            Kind::Hash {
                outer,
                inner,
                keys,
                table,
                current,
            } => {
                *current = None;
                table.clear();
                inner.open(stats);
                while let Some(row) = inner.next(stats) {
                    let key: Option<Vec<Value>> =
                        keys.iter().map(|(_, b)| hash_key(&row[*b])).collect();
                    if let Some(key) = key {
                        table.entry(key).or_default().push(row);
                    }
                }
                outer.open(stats);
            }
        }
        stats[self.id].ns += start.elapsed().as_nanos() as u64;
    }

    fn next(&mut self, stats: &mut [Counter]) -> Option<Row> {
        let start = Instant::now();
        let row = self.advance(stats);
        let c = &mut stats[self.id];
        c.ns += start.elapsed().as_nanos() as u64;
        if row.is_some() {
            c.rows += 1;
        }
        row
    }

    fn advance(&mut self, stats: &mut [Counter]) -> Option<Row> {
        match &mut self.kind {
            Kind::Scan {
                rows,
                positions,
                cursor,
                quals,
            } => loop {
                let row = match positions {
                    Some(p) => &rows[*p.get(*cursor)?],
                    None => rows.get(*cursor)?,
                };
                *cursor += 1;
                if quals.iter().all(|(i, op, v)| op.eval(&row[*i], v)) {
                    return Some(row.clone());
                }
            },
            Kind::NestLoop {
                outer,
                inner,
                keys,
                current,
            } => loop {
                if current.is_none() {
                    *current = Some(outer.next(stats)?);
                    inner.open(stats);
                }
                let o = current.as_ref().expect("outer row present");
                match inner.next(stats) {
                    Some(i) => {
                        if keys.iter().all(|(a, b)| CompareOp::Eq.eval(&o[*a], &i[*b])) {
                            let mut out = o.clone();
                            out.extend(i);
                            return Some(out);
                        }
                    }
                    None => *current = None,
                }
            },
            Kind::Hash {
                outer,
                keys,
                table,
                current,
                ..
            } => loop {
                if let Some((o, key, idx)) = current {
                    if let Some(i) = table.get(key).and_then(|m| m.get(*idx)) {
                        *idx += 1;
                        let mut out = o.clone();
                        out.extend(i.iter().cloned());
                        return Some(out);
                    }
                    *current = None;
                }
                let o = outer.next(stats)?;
                let key: Option<Vec<Value>> = keys.iter().map(|(a, _)| hash_key(&o[*a])).collect();
                if let Some(key) = key {
                    *current = Some((o, key, 0));
                }
            },
        }
    }
}

/// Run a plan to completion, returning its output rows, the column layout
/// of those rows, and per-node statistics.
pub fn run_plan(
    catalog: &Catalog,
    plan: &PlanNode,
) -> Result<(Vec<Row>, Vec<ColumnRef>, Vec<NodeRuntimeStats>), ExecError> {
    let (mut root, layout) = Op::build(catalog, plan)?;
    let n = plan.preorder().iter().map(|p| p.node_id).max().unwrap_or(0) + 1;
    let mut counters = vec![Counter::default(); n];
    root.open(&mut counters);
    let mut rows = Vec::new();
    while let Some(r) = root.next(&mut counters) {
        rows.push(r);
    }
    let stats = counters
        .iter()
        .enumerate()
        .map(|(id, c)| NodeRuntimeStats {
            node_id: id,
            actual_rows: c.rows.checked_div(c.loops).unwrap_or(0),
            wall_time_ns: c.ns,
            loops: c.loops,
        })
        .collect();
    Ok((rows, layout, stats))
}

/// Execute a bound SELECT with the given plan and apply its select list.
pub fn execute(
    catalog: &Catalog,
    plan: &PlanNode,
    query: &SelectQuery,
    query_text: &str,
) -> Result<(QueryOutput, ExecutionReport), ExecError> {
    let start = Instant::now();
    let (rows, layout, nodes) = run_plan(catalog, plan)?;
    let output = match &query.select {
        SelectList::CountStar => QueryOutput {
            columns: vec!["count".into()],
            rows: vec![vec![Value::Int(rows.len() as i64)]],
        },
        SelectList::Star => {
            let mut cols = Vec::new();
            for t in &query.from {
                for c in &catalog.table(t)?.def().columns {
                    cols.push(ColumnRef::new(t, &c.name));
                }
            }
            project(rows, &layout, &cols)?
        }
        SelectList::Columns(cols) => project(rows, &layout, cols)?,
    };
    let report = ExecutionReport {
        query_text: query_text.to_string(),
        plan: plan.clone(),
        nodes,
        total_time_ns: start.elapsed().as_nanos() as u64,
        result_row_count: output.rows.len() as u64,
    };
    Ok((output, report))
}

fn project(rows: Vec<Row>, layout: &Layout, cols: &[ColumnRef]) -> Result<QueryOutput, ExecError> {
    let idx: Vec<usize> = cols
        .iter()
        .map(|c| position(layout, c))
        .collect::<Result<_, _>>()?;
    Ok(QueryOutput {
        columns: cols.iter().map(|c| c.column.clone()).collect(),
        rows: rows
            .into_iter()
            .map(|r| idx.iter().map(|i| r[*i].clone()).collect())
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::ColumnDef;
    use crate::sql::PredicateSet;
    use crate::value::ColumnKind;

    fn scan(id: usize, t: &str, quals: PredicateSet) -> PlanNode {
        PlanNode {
            node_id: id,
            node_type: NodeType::SeqScan,
            table: Some(t.into()),
            quals,
            index_cond: None,
            est_rows: 1.0,
            est_cost: 1.0,
            children: vec![],
        }
    }

    fn join(t: NodeType, outer: PlanNode, inner: PlanNode) -> PlanNode {
        let mut n = PlanNode {
            node_id: 0,
            node_type: t,
            table: None,
            quals: [Predicate::join(("a", "k"), ("b", "k"))].into(),
            index_cond: None,
            est_rows: 1.0,
            est_cost: 1.0,
            children: vec![outer, inner],
        };
        n.renumber();
        n
    }

    fn catalog(a: &[i64], b: &[i64]) -> Catalog {
        let mut cat = Catalog::new();
        for (t, vals) in [("a", a), ("b", b)] {
            cat.create_table(t, vec![ColumnDef::new("k", ColumnKind::Int64)])
                .unwrap();
            cat.append_rows(t, vals.iter().map(|v| vec![Value::Int(*v)]).collect())
                .unwrap();
        }
        cat
    }

    #[test]
    fn scan_counts_rows() {
        let cat = catalog(&[1, 2, 3], &[]);
        let (rows, _, stats) = run_plan(&cat, &scan(0, "a", PredicateSet::new())).unwrap();
        assert_eq!(rows.len(), 3);
        assert_eq!(stats[0].actual_rows, 3);
        assert_eq!(stats[0].loops, 1);
    }

    #[test]
    fn joins_agree_and_report_per_loop_rows() {
        let cat = catalog(&[1, 1, 2, 3], &[1, 2, 2, 4]);
        let nl = join(
            NodeType::NestLoopJoin,
            scan(0, "a", PredicateSet::new()),
            scan(0, "b", PredicateSet::new()),
        );
        let hj = join(
            NodeType::HashJoin,
            scan(0, "a", PredicateSet::new()),
            scan(0, "b", PredicateSet::new()),
        );
        let (mut r1, _, s1) = run_plan(&cat, &nl).unwrap();
        let (mut r2, _, s2) = run_plan(&cat, &hj).unwrap();
        r1.sort();
        r2.sort();
        assert_eq!(r1, r2);
        assert_eq!(r1.len(), 4);
        assert_eq!(s1[0].actual_rows, 4);
        // inner scan reruns once per outer row and reports rows per loop
        assert_eq!(s1[2].loops, 4);
        assert_eq!(s1[2].actual_rows, 4);
        assert_eq!(s2[2].loops, 1);
    }

    #[test]
    fn empty_outer_never_runs_nestloop_inner() {
        let cat = catalog(&[], &[1, 2]);
        let nl = join(
            NodeType::NestLoopJoin,
            scan(0, "a", PredicateSet::new()),
            scan(0, "b", PredicateSet::new()),
        );
        let (rows, _, stats) = run_plan(&cat, &nl).unwrap();
        assert!(rows.is_empty());
        assert_eq!(stats[0].actual_rows, 0);
        assert_eq!(stats[2].loops, 0);
    }

    #[test]
    fn nulls_never_join() {
        let mut cat = Catalog::new();
        for t in ["a", "b"] {
            cat.create_table(t, vec![ColumnDef::new("k", ColumnKind::Int64)])
                .unwrap();
            cat.append_rows(t, vec![vec![Value::Null], vec![Value::Int(1)]])
                .unwrap();
        }
        for t in [NodeType::NestLoopJoin, NodeType::HashJoin] {
            let p = join(
                t,
                scan(0, "a", PredicateSet::new()),
                scan(0, "b", PredicateSet::new()),
            );
            assert_eq!(run_plan(&cat, &p).unwrap().0.len(), 1);
        }
    }
}
