//! Builtin cardinality estimation: per-predicate selectivities under
//! attribute independence, and the distinct-count join formula.

use crate::catalog::{ColumnStats, Table};
use crate::sql::{CompareOp, Predicate};
use crate::value::Value;

pub const DEFAULT_EQ_SEL: f64 = 0.005;
pub const DEFAULT_RANGE_SEL: f64 = 0.33;
/// Distinct-count guess for join columns that were never analyzed.
pub const DEFAULT_NUM_DISTINCT: u64 = 200;

/// Selectivity of a conjunction of filters on one table.
pub fn baseline_selectivity<'a>(
    table: &Table,
    quals: impl IntoIterator<Item = &'a Predicate>,
) -> f64 {
    quals
        .into_iter()
        .map(|p| match p {
            Predicate::Filter { column, op, value } => {
                predicate_selectivity(table.column_stats(&column.column), *op, value)
            }
            Predicate::Join { .. } => 1.0,
        })
        .product::<f64>()
        .clamp(0.0, 1.0)
}

fn predicate_selectivity(stats: Option<&ColumnStats>, op: CompareOp, value: &Value) -> f64 {
    let Some(stats) = stats else {
        return match op {
            CompareOp::Eq => DEFAULT_EQ_SEL,
            CompareOp::Ne => 1.0 - DEFAULT_EQ_SEL,
            _ => DEFAULT_RANGE_SEL,
        };
    };
    match op {
        CompareOp::Eq => eq_selectivity(stats, value),
        CompareOp::Ne => (1.0 - stats.null_frac - eq_selectivity(stats, value)).clamp(0.0, 1.0),
        range => range_selectivity(stats, range, value),
    }
}

fn eq_selectivity(stats: &ColumnStats, value: &Value) -> f64 {
    stats
        .mcv_frequency(value)
        .unwrap_or(1.0 / stats.n_distinct.max(1) as f64)
}

fn range_selectivity(stats: &ColumnStats, op: CompareOp, value: &Value) -> f64 {
    let Some(v) = value.as_f64() else {
        return DEFAULT_RANGE_SEL;
    };
    let mcv_part: f64 = stats
        .mcv
        .iter()
        .filter(|(m, _)| op.eval(m, value))
        .map(|(_, f)| f)
        .sum();
    let hist_part = match &stats.histogram {
        Some(h) => {
            let below = h.fraction_below(v);
            let frac = match op {
                CompareOp::Lt | CompareOp::Le => below,
                _ => 1.0 - below,
            };
            frac * stats.histogram_share()
        }
        // Text columns, or numeric columns fully described by their MCVs.
        None if stats.mcv.is_empty() => return DEFAULT_RANGE_SEL,
        None => 0.0,
    };
    (mcv_part + hist_part).clamp(0.0, 1.0)
}

/// `left_rows * right_rows / max(nd_left, nd_right)`, floored at one row.
pub fn baseline_join_rows(left_rows: f64, right_rows: f64, nd_left: u64, nd_right: u64) -> f64 {
    let nd = nd_left.max(nd_right).max(1) as f64;
    (left_rows * right_rows / nd).max(1.0)
}

/// Distinct count of a column, or the default when it was never analyzed.
pub fn column_distinct(table: &Table, column: &str) -> u64 {
    match table.column_stats(column) {
        Some(s) => s.n_distinct.max(1),
        None => DEFAULT_NUM_DISTINCT
            .min(table.def().row_count as u64)
            .max(1),
    }
}
