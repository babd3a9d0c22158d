//! Exact result-size computation by exhaustive enumeration of the
//! cross product. Only used as a reference for small instances.

use super::{Catalog, CatalogError};
use crate::sql::{ColumnRef, Predicate, PredicateSet, TableSet};
use crate::value::Row;

struct Resolved {
    filters: Vec<Vec<(usize, crate::sql::CompareOp, crate::value::Value)>>,
    /// (later table position, its column, earlier table position, its column)
    joins: Vec<Vec<(usize, usize, usize)>>,
}

impl Catalog {
    /// Number of tuples of the cross product of `tables` satisfying every
    /// predicate, counted by nested-loop enumeration.
    pub fn true_cardinality(
        &self,
        tables: &TableSet,
        predicates: &PredicateSet,
    ) -> Result<u64, CatalogError> {
        let order = self.enumeration_order(tables, predicates);
        let pos = |c: &ColumnRef| -> Result<(usize, usize), CatalogError> {
            let t = c.table.as_deref().unwrap_or_default();
            let p = order
                .iter()
                .position(|o| o == t)
                .ok_or_else(|| CatalogError::TableNotFound(t.into()))?;
            let col = self
                .table(t)?
                .def()
                .column_index(&c.column)
                .ok_or_else(|| CatalogError::UnknownColumn {
                    table: t.into(),
                    column: c.column.clone(),
                })?;
            Ok((p, col))
        };

        let mut resolved = Resolved {
            filters: vec![Vec::new(); order.len()],
            joins: vec![Vec::new(); order.len()],
        };
        for p in predicates {
            match p {
                Predicate::Filter { column, op, value } => {
                    let (t, c) = pos(column)?;
                    resolved.filters[t].push((c, *op, value.clone()));
                }
                Predicate::Join { left, right } => {
                    let (lt, lc) = pos(left)?;
                    let (rt, rc) = pos(right)?;
                    if lt > rt {
                        resolved.joins[lt].push((lc, rt, rc));
                    } else {
                        resolved.joins[rt].push((rc, lt, lc));
                    }
                }
            }
        }

        let mut candidates: Vec<Vec<&Row>> = Vec::with_capacity(order.len());
        for (i, t) in order.iter().enumerate() {
            let rows = self.table(t)?.rows();
            candidates.push(
                rows.iter()
                    .filter(|r| {
                        resolved.filters[i]
                            .iter()
                            .all(|(c, op, v)| op.eval(&r[*c], v))
                    })
                    .collect(),
            );
        }
        let mut bound: Vec<&Row> = Vec::with_capacity(order.len());
        Ok(count(&candidates, &resolved, &mut bound))
    }

    /// Tables ordered so that each one (where possible) joins with an earlier
    /// one, which lets join predicates prune the enumeration early.
    fn enumeration_order(&self, tables: &TableSet, predicates: &PredicateSet) -> Vec<String> {
        let mut order: Vec<String> = Vec::with_capacity(tables.len());
        let mut rest: Vec<&String> = tables.iter().collect();
        while !rest.is_empty() {
            let connected = rest.iter().position(|t| {
                predicates.iter().any(|p| match p {
                    Predicate::Join { left, right } => {
                        let (l, r) = (left.table.as_deref(), right.table.as_deref());
                        (l == Some(t.as_str()) && order.iter().any(|o| Some(o.as_str()) == r))
                            || (r == Some(t.as_str())
                                && order.iter().any(|o| Some(o.as_str()) == l))
                    }
                    _ => false,
                })
            });
            let next = rest.remove(connected.unwrap_or(0));
            order.push(next.clone());
        }
        order
    }
}

fn count<'a>(candidates: &[Vec<&'a Row>], resolved: &Resolved, bound: &mut Vec<&'a Row>) -> u64 {
    let depth = bound.len();
    if depth == candidates.len() {
        return 1;
    }
    let mut total = 0;
    for row in &candidates[depth] {
        let ok = resolved.joins[depth]
            .iter()
            .all(|(c, other, oc)| crate::sql::CompareOp::Eq.eval(&row[*c], &bound[*other][*oc]));
        if ok {
            bound.push(row);
            total += count(candidates, resolved, bound);
            bound.pop();
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use crate::catalog::{Catalog, ColumnDef};
    use crate::sql::{CompareOp, Predicate, PredicateSet, TableSet};
    use crate::value::{ColumnKind, Value};

    fn tables(names: &[&str]) -> TableSet {
        names.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn no_predicates_is_row_count_and_absent_value_is_zero() {
        let mut cat = Catalog::new();
        cat.create_table("t", vec![ColumnDef::new("a", ColumnKind::Int64)])
            .unwrap();
        cat.append_rows("t", (0..17).map(|i| vec![Value::Int(i)]).collect())
            .unwrap();
        assert_eq!(
            cat.true_cardinality(&tables(&["t"]), &PredicateSet::new())
                .unwrap(),
            17
        );
        let absent: PredicateSet =
            [Predicate::filter("t", "a", CompareOp::Eq, Value::Int(99))].into();
        assert_eq!(cat.true_cardinality(&tables(&["t"]), &absent).unwrap(), 0);
        let bad: PredicateSet = [Predicate::filter("t", "zz", CompareOp::Eq, Value::Int(1))].into();
        assert!(cat.true_cardinality(&tables(&["t"]), &bad).is_err());
    }

    #[test]
    fn nulls_never_join() {
        let mut cat = Catalog::new();
        for t in ["l", "r"] {
            cat.create_table(t, vec![ColumnDef::new("k", ColumnKind::Int64)])
                .unwrap();
            cat.append_rows(
                t,
                vec![vec![Value::Int(1)], vec![Value::Null], vec![Value::Int(1)]],
            )
            .unwrap();
        }
        let p: PredicateSet = [Predicate::join(("l", "k"), ("r", "k"))].into();
        assert_eq!(cat.true_cardinality(&tables(&["l", "r"]), &p).unwrap(), 4);
        // Cross product without predicates.
        assert_eq!(
            cat.true_cardinality(&tables(&["l", "r"]), &PredicateSet::new())
                .unwrap(),
            9
        );
    }
}
