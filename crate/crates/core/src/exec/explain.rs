use std::fmt::Write as _;

use super::{ExecutionReport, NodeRuntimeStats};
use crate::planner::PlanNode;

/// One line per node, two spaces of indent per depth:
/// `NodeType on <rel> (rows=<est_rows> cost=<est_cost>)`, followed by
/// ` (actual rows=<n> time=<ms>ms)` when `analyze` is set.
pub fn render_explain(report: &ExecutionReport, analyze: bool) -> String {
    render_plan(&report.plan, analyze.then_some(report.nodes.as_slice()))
}

/// Render a plan, with runtime statistics if given.
pub fn render_plan(plan: &PlanNode, stats: Option<&[NodeRuntimeStats]>) -> String {
    let mut out = String::new();
    walk(plan, 0, stats, &mut out);
    out
}

fn walk(node: &PlanNode, depth: usize, stats: Option<&[NodeRuntimeStats]>, out: &mut String) {
    let _ = write!(
        out,
        "{:indent$}{} on {} (rows={:.2} cost={:.2})",
        "",
        node.node_type,
        node.relation_label(),
        node.est_rows,
        node.est_cost,
        indent = depth * 2
    );
    if let Some(s) = stats.and_then(|s| s.get(node.node_id)) {
        if s.loops == 0 {
            out.push_str(" (never executed)");
        } else {
            let _ = write!(
                out,
                " (actual rows={} time={:.3}ms",
                s.actual_rows,
                s.wall_time_ns as f64 / 1e6
            );
            if s.loops > 1 {
                let _ = write!(out, " loops={}", s.loops);
            }
            out.push(')');
        }
    }
    out.push('\n');
    for c in &node.children {
        walk(c, depth + 1, stats, out);
    }
}
