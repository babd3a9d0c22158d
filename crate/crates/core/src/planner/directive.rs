//! Externally supplied join trees.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Env, NodeType, PlanNode, Planner, QueryContext};

/// A complete plan shape. On the wire a join is
/// `{"join": "HashJoin", "left": .., "right": ..}` and a scan is
/// `{"scan": "SeqScan", "table": "t"}`; other fields are ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PlanDirective {
    Join {
        join: NodeType,
        left: Box<PlanDirective>,
        right: Box<PlanDirective>,
    },
    Scan {
        scan: NodeType,
        table: String,
    },
}

impl PlanDirective {
    pub fn leaves(&self) -> Vec<&str> {
        match self {
            PlanDirective::Scan { table, .. } => vec![table.as_str()],
            PlanDirective::Join { left, right, .. } => {
                let mut out = left.leaves();
                out.extend(right.leaves());
                out
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DirectiveError {
    #[error("directive scans table \"{0}\", which the query does not reference")]
    UnknownTable(String),
    #[error("directive scans table \"{0}\" more than once")]
    DuplicateLeaf(String),
    #[error("directive does not cover tables: {0}")]
    MissingTables(String),
    #[error("operator {op} cannot be used for {context}")]
    UnsupportedOperator { op: NodeType, context: String },
    #[error("directive joins {0} without a join predicate")]
    CrossProduct(String),
}

impl Planner<'_> {
    pub(super) fn build_directive(
        &self,
        ctx: &mut QueryContext<'_>,
        directive: &PlanDirective,
        env: &mut Env<'_>,
    ) -> Result<PlanNode, DirectiveError> {
        let (mut plan, mask) = self.build_subtree(ctx, directive, env)?;
        if mask != ctx.full_mask() {
            let missing: Vec<&str> = ctx
                .members(ctx.full_mask() & !mask)
                .map(|i| ctx.rels[i].name.as_str())
                .collect();
            return Err(DirectiveError::MissingTables(missing.join(", ")));
        }
        plan.renumber();
        Ok(plan)
    }

    fn build_subtree(
        &self,
        ctx: &mut QueryContext<'_>,
        directive: &PlanDirective,
        env: &mut Env<'_>,
    ) -> Result<(PlanNode, u64), DirectiveError> {
        match directive {
            PlanDirective::Scan { scan, table } => {
                let i = ctx
                    .rels
                    .iter()
                    .position(|r| &r.name == table)
                    .ok_or_else(|| DirectiveError::UnknownTable(table.clone()))?;
                match scan {
                    NodeType::SeqScan => {}
                    NodeType::IndexScan if ctx.rels[i].pk_eq.is_some() => {}
                    op => {
                        return Err(DirectiveError::UnsupportedOperator {
                            op: *op,
                            context: format!("scanning {table}"),
                        })
                    }
                }
                Ok((self.scan_of_type(ctx, i, *scan, env), 1 << i))
            }
            PlanDirective::Join { join, left, right } => {
                if !join.is_join() {
                    return Err(DirectiveError::UnsupportedOperator {
                        op: *join,
                        context: "a join".into(),
                    });
                }
                let (outer, lmask) = self.build_subtree(ctx, left, env)?;
                let (inner, rmask) = self.build_subtree(ctx, right, env)?;
                if lmask & rmask != 0 {
                    let dup = ctx.members(lmask & rmask).next().expect("overlap");
                    return Err(DirectiveError::DuplicateLeaf(ctx.rels[dup].name.clone()));
                }
                let preds = ctx.connecting(lmask, rmask);
                if preds.is_empty() && !self.config.allow_cross_products {
                    let mut names = outer.tables();
                    names.extend(inner.tables());
                    return Err(DirectiveError::CrossProduct(names.join(", ")));
                }
                let mask = lmask | rmask;
                let rows = self.subset_rows(ctx, mask, lmask, rmask, env);
                Ok((
                    self.join_node(ctx, *join, &outer, &inner, preds, rows, env),
                    mask,
                ))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wire_forms() {
        let d: PlanDirective = serde_json::from_str(
            r#"{"join":"NestLoop","est_rows":3,"left":{"scan":"SeqScan","table":"a"},
                "right":{"join":"HashJoin","left":{"scan":"IndexScan","table":"b"},"right":{"scan":"SeqScan","table":"c"}}}"#,
        )
        .unwrap();
        assert_eq!(d.leaves(), ["a", "b", "c"]);
        let PlanDirective::Join { join, .. } = &d else {
            panic!()
        };
        assert_eq!(*join, NodeType::NestLoopJoin);
        let back: PlanDirective =
            serde_json::from_value(serde_json::to_value(&d).unwrap()).unwrap();
        assert_eq!(back, d);
        assert!(serde_json::from_str::<PlanDirective>(r#"{"scan":"Bitmap","table":"a"}"#).is_err());
    }
}
