//! SQL subset and control-command frontend.
//!
//! The grammar (EBNF, keywords case-insensitive, identifiers folded to lower
//! case):
//!
//! ```text
//! statement   = select | "EXPLAIN" ["ANALYZE"] select | insert
//!             | call | set | show | create | copy | analyze ;
//! select      = "SELECT" ( "*" | "COUNT" "(" "*" ")" | colref {"," colref} )
//!               "FROM" ident {"," ident} [ "WHERE" pred {"AND" pred} ] ;
//! pred        = colref cmp literal | literal cmp colref | colref "=" colref ;
//! cmp         = "=" | "<>" | "!=" | "<" | "<=" | ">" | ">=" ;
//! colref      = ident [ "." ident ] ;
//! literal     = ["-"] number | string ;
//! insert      = "INSERT" "INTO" ident [ "(" ident {"," ident} ")" ]
//!               "VALUES" row {"," row} ;
//! row         = "(" (literal | "NULL") {"," (literal | "NULL")} ")" ;
//! call        = "CALL" verb "(" [ arg {"," arg} ] ")" ;
//! arg         = string | ident | "{" [ string {"," string} ] "}" ;
//! set         = "SET" ident ("=" | "TO") (string | ident | number) ;
//! show        = "SHOW" ident ;
//! create      = "CREATE" "TABLE" ident "(" coldef {"," coldef} ")" ;
//! coldef      = ident type ["PRIMARY" "KEY"] | "PRIMARY" "KEY" "(" ident ")" ;
//! copy        = "COPY" ident "FROM" string [ "WITH" "HEADER" ] ;
//! analyze     = "ANALYZE" ident ;
//! ```
//!
//! A trailing `;` is optional. Strings are single-quoted with `''` as the
//! escape for a quote.

pub mod ast;
mod lexer;
mod parser;

use std::collections::BTreeSet;

use thiserror::Error;

pub use ast::*;
pub use parser::parse;

use crate::catalog::{Catalog, CatalogError};
use crate::value::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParseErrorKind {
    Syntax,
    Unsupported,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{} at line {line}, column {column}: {message}", match .kind { ParseErrorKind::Syntax => "syntax error", ParseErrorKind::Unsupported => "unsupported feature" })]
pub struct ParseError {
    pub kind: ParseErrorKind,
    pub message: String,
    pub line: usize,
    pub column: usize,
}

impl ParseError {
    pub(crate) fn syntax(message: impl Into<String>, line: usize, column: usize) -> Self {
        ParseError {
            kind: ParseErrorKind::Syntax,
            message: message.into(),
            line,
            column,
        }
    }

    pub(crate) fn unsupported(message: impl Into<String>, line: usize, column: usize) -> Self {
        ParseError {
            kind: ParseErrorKind::Unsupported,
            message: message.into(),
            line,
            column,
        }
    }
}

#[derive(Debug, Error)]
pub enum BindError {
    #[error(transparent)]
    Catalog(#[from] CatalogError),
    #[error("column reference \"{0}\" is ambiguous")]
    AmbiguousColumn(String),
    #[error("column \"{0}\" is not bound to a table")]
    UnboundColumn(String),
    #[error("type mismatch: {0}")]
    TypeError(String),
    #[error("{0}")]
    Unsupported(String),
}

/// Resolve every column reference against the catalog, qualify it with its
/// table, and coerce literals to the column kinds.
pub fn bind(ast: &QueryAst, catalog: &Catalog) -> Result<QueryAst, BindError> {
    match ast {
        QueryAst::Select(q) => Ok(QueryAst::Select(bind_select(q, catalog)?)),
        QueryAst::Explain { analyze, query } => Ok(QueryAst::Explain {
            analyze: *analyze,
            query: bind_select(query, catalog)?,
        }),
        QueryAst::Insert(i) => {
            let def = catalog.table(&i.table)?.def();
            if let Some(cols) = &i.columns {
                for c in cols {
                    if def.column(c).is_none() {
                        return Err(CatalogError::UnknownColumn {
                            table: i.table.clone(),
                            column: c.clone(),
                        }
                        .into());
                    }
                }
            }
            Ok(ast.clone())
        }
    }
}

fn bind_select(q: &SelectQuery, catalog: &Catalog) -> Result<SelectQuery, BindError> {
    for (i, t) in q.from.iter().enumerate() {
        catalog.table(t)?;
        if q.from[..i].contains(t) {
            return Err(BindError::Unsupported(format!(
                "table \"{t}\" appears twice in FROM"
            )));
        }
    }
    let resolve = |c: &mut ColumnRef| -> Result<crate::value::ColumnKind, BindError> {
        match &c.table {
            Some(t) => {
                if !q.from.contains(t) {
                    return Err(BindError::Catalog(CatalogError::TableNotFound(t.clone())));
                }
                let def = catalog.table(t)?.def();
                def.column(&c.column).map(|col| col.kind).ok_or_else(|| {
                    CatalogError::UnknownColumn {
                        table: t.clone(),
                        column: c.column.clone(),
                    }
                    .into()
                })
            }
            None => {
                let mut hits = q.from.iter().filter_map(|t| {
                    let def = catalog.table(t).ok()?.def();
                    def.column(&c.column).map(|col| (t.clone(), col.kind))
                });
                match (hits.next(), hits.next()) {
                    (Some((t, kind)), None) => {
                        c.table = Some(t);
                        Ok(kind)
                    }
                    (Some(_), Some(_)) => Err(BindError::AmbiguousColumn(c.column.clone())),
                    (None, _) => Err(CatalogError::UnknownColumn {
                        table: q.from.join(","),
                        column: c.column.clone(),
                    }
                    .into()),
                }
            }
        }
    };

    let mut out = q.clone();
    if let SelectList::Columns(cols) = &mut out.select {
        for c in cols {
            resolve(c)?;
        }
    }
    for p in &mut out.predicates {
        match p {
            Predicate::Filter { column, value, .. } => {
                let kind = resolve(column)?;
                let shown = value.to_sql();
                *value = std::mem::replace(value, Value::Null)
                    .coerce(kind)
                    .ok_or_else(|| {
                        BindError::TypeError(format!(
                            "literal {shown} cannot be compared with {column} ({kind})"
                        ))
                    })?;
            }
            Predicate::Join { left, right } => {
                let lk = resolve(left)?;
                let rk = resolve(right)?;
                if lk != rk {
                    return Err(BindError::TypeError(format!(
                        "cannot join {left} ({lk}) with {right} ({rk})"
                    )));
                }
                if left.table == right.table {
                    return Err(BindError::Unsupported(format!(
                        "predicate {left} = {right} compares columns of one table"
                    )));
                }
            }
        }
    }
    Ok(out)
}

/// The (tables, predicates) decomposition of a bound SELECT: the table set
/// and the normalized conjunction of all filters and joins.
pub fn extract_tq(ast: &QueryAst) -> Result<(TableSet, PredicateSet), BindError> {
    let q = ast.select().ok_or_else(|| {
        BindError::Unsupported("only SELECT queries have a (T, Q) decomposition".into())
    })?;
    select_tq(q)
}

pub fn select_tq(q: &SelectQuery) -> Result<(TableSet, PredicateSet), BindError> {
    let tables: TableSet = q.from.iter().cloned().collect();
    let mut preds = BTreeSet::new();
    for p in &q.predicates {
        for c in p.columns() {
            if c.table.is_none() {
                return Err(BindError::UnboundColumn(c.column.clone()));
            }
        }
        preds.insert(p.clone().normalized());
    }
    Ok((tables, preds))
}
