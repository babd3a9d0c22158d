use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::value::{ColumnKind, Value};

pub type TableSet = BTreeSet<String>;
pub type PredicateSet = BTreeSet<Predicate>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum QueryClass {
    Select,
    Insert,
    Explain,
    #[serde(rename = "EXPLAIN_ANALYZE")]
    ExplainAnalyze,
}

impl QueryClass {
    pub fn parse(s: &str) -> Option<QueryClass> {
        match s.to_ascii_uppercase().replace(' ', "_").as_str() {
            "SELECT" => Some(QueryClass::Select),
            "INSERT" => Some(QueryClass::Insert),
            "EXPLAIN" => Some(QueryClass::Explain),
            "EXPLAIN_ANALYZE" => Some(QueryClass::ExplainAnalyze),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            QueryClass::Select => "SELECT",
            QueryClass::Insert => "INSERT",
            QueryClass::Explain => "EXPLAIN",
            QueryClass::ExplainAnalyze => "EXPLAIN_ANALYZE",
        }
    }
}

impl fmt::Display for QueryClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A column reference; `table` is `None` until binding qualifies it.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ColumnRef {
    pub table: Option<String>,
    pub column: String,
}

impl ColumnRef {
    pub fn new(table: &str, column: &str) -> Self {
        ColumnRef {
            table: Some(table.to_string()),
            column: column.to_string(),
        }
    }

    pub fn unqualified(column: &str) -> Self {
        ColumnRef {
            table: None,
            column: column.to_string(),
        }
    }

    /// Table name of a bound reference.
    pub fn table(&self) -> &str {
        self.table.as_deref().expect("column reference is bound")
    }
}

impl fmt::Display for ColumnRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.table {
            Some(t) => write!(f, "{t}.{}", self.column),
            None => f.write_str(&self.column),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CompareOp {
    #[serde(rename = "=")]
    Eq,
    #[serde(rename = "<>")]
    Ne,
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = ">=")]
    Ge,
}

impl CompareOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CompareOp::Eq => "=",
            CompareOp::Ne => "<>",
            CompareOp::Lt => "<",
            CompareOp::Le => "<=",
            CompareOp::Gt => ">",
            CompareOp::Ge => ">=",
        }
    }

    /// The operator with its operands swapped (`5 < a` is `a > 5`).
    pub fn flipped(self) -> CompareOp {
        match self {
            CompareOp::Lt => CompareOp::Gt,
            CompareOp::Le => CompareOp::Ge,
            CompareOp::Gt => CompareOp::Lt,
            CompareOp::Ge => CompareOp::Le,
            other => other,
        }
    }

    pub fn is_range(self) -> bool {
        matches!(
            self,
            CompareOp::Lt | CompareOp::Le | CompareOp::Gt | CompareOp::Ge
        )
    }

    /// Evaluate `lhs op rhs` with SQL null semantics (null never matches).
    pub fn eval(self, lhs: &Value, rhs: &Value) -> bool {
        use std::cmp::Ordering::*;
        match lhs.sql_cmp(rhs) {
            None => false,
            Some(ord) => match self {
                CompareOp::Eq => ord == Equal,
                CompareOp::Ne => ord != Equal,
                CompareOp::Lt => ord == Less,
                CompareOp::Le => ord != Greater,
                CompareOp::Gt => ord == Greater,
                CompareOp::Ge => ord != Less,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Predicate {
    Filter {
        column: ColumnRef,
        op: CompareOp,
        value: Value,
    },
    Join {
        left: ColumnRef,
        right: ColumnRef,
    },
}

impl Predicate {
    pub fn filter(table: &str, column: &str, op: CompareOp, value: Value) -> Self {
        Predicate::Filter {
            column: ColumnRef::new(table, column),
            op,
            value,
        }
    }

    pub fn join(left: (&str, &str), right: (&str, &str)) -> Self {
        Predicate::Join {
            left: ColumnRef::new(left.0, left.1),
            right: ColumnRef::new(right.0, right.1),
        }
        .normalized()
    }

    /// Canonical form: join sides ordered so that `a.x = b.y` and
    /// `b.y = a.x` compare equal.
    pub fn normalized(self) -> Self {
        match self {
            Predicate::Join { left, right } if right < left => Predicate::Join {
                left: right,
                right: left,
            },
            other => other,
        }
    }

    pub fn is_join(&self) -> bool {
        matches!(self, Predicate::Join { .. })
    }

    pub fn columns(&self) -> Vec<&ColumnRef> {
        match self {
            Predicate::Filter { column, .. } => vec![column],
            Predicate::Join { left, right } => vec![left, right],
        }
    }

    /// Tables referenced by a bound predicate.
    pub fn tables(&self) -> Vec<&str> {
        self.columns().into_iter().map(ColumnRef::table).collect()
    }
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Predicate::Filter { column, op, value } => {
                write!(f, "{column} {} {}", op.symbol(), value.to_sql())
            }
            Predicate::Join { left, right } => write!(f, "{left} = {right}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SelectList {
    CountStar,
    Star,
    Columns(Vec<ColumnRef>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SelectQuery {
    pub select: SelectList,
    /// Tables in FROM order.
    pub from: Vec<String>,
    /// Conjuncts in written order.
    pub predicates: Vec<Predicate>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InsertQuery {
    pub table: String,
    pub columns: Option<Vec<String>>,
    pub rows: Vec<Vec<Value>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum QueryAst {
    Select(SelectQuery),
    Insert(InsertQuery),
    Explain { analyze: bool, query: SelectQuery },
}

impl QueryAst {
    pub fn query_class(&self) -> QueryClass {
        match self {
            QueryAst::Select(_) => QueryClass::Select,
            QueryAst::Insert(_) => QueryClass::Insert,
            QueryAst::Explain { analyze: false, .. } => QueryClass::Explain,
            QueryAst::Explain { analyze: true, .. } => QueryClass::ExplainAnalyze,
        }
    }

    /// The SELECT being run or explained, if any.
    pub fn select(&self) -> Option<&SelectQuery> {
        match self {
            QueryAst::Select(q) | QueryAst::Explain { query: q, .. } => Some(q),
            QueryAst::Insert(_) => None,
        }
    }

    pub fn tables(&self) -> TableSet {
        match self {
            QueryAst::Select(q) | QueryAst::Explain { query: q, .. } => {
                q.from.iter().cloned().collect()
            }
            QueryAst::Insert(i) => std::iter::once(i.table.clone()).collect(),
        }
    }
}

/// Procedure-style control verbs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ControlVerb {
    DefineDataCollector,
    StartDataCollector,
    StopDataCollector,
    RegisterModel,
    StartModel,
    ResetModel,
    Set,
    Show,
}

impl ControlVerb {
    pub fn from_name(s: &str) -> Option<ControlVerb> {
        Some(match s.to_ascii_uppercase().as_str() {
            "DEFINE_DATA_COLLECTOR" => ControlVerb::DefineDataCollector,
            "START_DATA_COLLECTOR" => ControlVerb::StartDataCollector,
            "STOP_DATA_COLLECTOR" => ControlVerb::StopDataCollector,
            "REGISTER_MODEL" => ControlVerb::RegisterModel,
            "START_MODEL" => ControlVerb::StartModel,
            "RESET_MODEL" => ControlVerb::ResetModel,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            ControlVerb::DefineDataCollector => "DEFINE_DATA_COLLECTOR",
            ControlVerb::StartDataCollector => "START_DATA_COLLECTOR",
            ControlVerb::StopDataCollector => "STOP_DATA_COLLECTOR",
            ControlVerb::RegisterModel => "REGISTER_MODEL",
            ControlVerb::StartModel => "START_MODEL",
            ControlVerb::ResetModel => "RESET_MODEL",
            ControlVerb::Set => "SET",
            ControlVerb::Show => "SHOW",
        }
    }

    /// Accepted argument counts (inclusive).
    pub fn arity(self) -> (usize, usize) {
        match self {
            ControlVerb::DefineDataCollector => (3, 4),
            ControlVerb::StartDataCollector => (3, 3),
            ControlVerb::StopDataCollector => (1, 1),
            ControlVerb::RegisterModel => (4, 5),
            ControlVerb::StartModel | ControlVerb::ResetModel => (1, 1),
            ControlVerb::Set => (2, 2),
            ControlVerb::Show => (1, 1),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CallArg {
    Str(String),
    Set(Vec<String>),
}

impl CallArg {
    pub fn as_str(&self) -> Option<&str> {
        match self {
            CallArg::Str(s) => Some(s),
            CallArg::Set(_) => None,
        }
    }

    pub fn as_set(&self) -> Option<&[String]> {
        match self {
            CallArg::Set(s) => Some(s),
            CallArg::Str(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ControlCommand {
    pub verb: ControlVerb,
    pub args: Vec<CallArg>,
}

/// Table-management statements needed to populate an engine from a shell.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DdlStatement {
    CreateTable {
        name: String,
        columns: Vec<(String, ColumnKind)>,
        primary_key: Option<String>,
    },
    Copy {
        table: String,
        path: String,
        header: bool,
    },
    Analyze {
        table: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Statement {
    Query(QueryAst),
    Control(ControlCommand),
    Ddl(DdlStatement),
}

// Rendering back to SQL. `parse(render(x))` reproduces `x`.

impl fmt::Display for SelectQuery {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SELECT ")?;
        match &self.select {
            SelectList::CountStar => f.write_str("COUNT(*)")?,
            SelectList::Star => f.write_str("*")?,
            SelectList::Columns(cols) => {
                let cols: Vec<String> = cols.iter().map(ToString::to_string).collect();
                f.write_str(&cols.join(", "))?;
            }
        }
        write!(f, " FROM {}", self.from.join(", "))?;
        if !self.predicates.is_empty() {
            let preds: Vec<String> = self.predicates.iter().map(ToString::to_string).collect();
            write!(f, " WHERE {}", preds.join(" AND "))?;
        }
        Ok(())
    }
}

impl fmt::Display for QueryAst {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            QueryAst::Select(q) => write!(f, "{q}"),
            QueryAst::Explain { analyze, query } => {
                let prefix = if *analyze {
                    "EXPLAIN ANALYZE"
                } else {
                    "EXPLAIN"
                };
                write!(f, "{prefix} {query}")
            }
            QueryAst::Insert(i) => {
                write!(f, "INSERT INTO {}", i.table)?;
                if let Some(cols) = &i.columns {
                    write!(f, " ({})", cols.join(", "))?;
                }
                let rows: Vec<String> = i
                    .rows
                    .iter()
                    .map(|r| {
                        let vals: Vec<String> = r.iter().map(Value::to_sql).collect();
                        format!("({})", vals.join(", "))
                    })
                    .collect();
                write!(f, " VALUES {}", rows.join(", "))
            }
        }
    }
}

impl fmt::Display for ControlCommand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let quote = |s: &str| format!("'{}'", s.replace('\'', "''"));
        match self.verb {
            ControlVerb::Set => {
                let var = self.args[0].as_str().unwrap_or_default();
                let val = self.args[1].as_str().unwrap_or_default();
                write!(f, "SET {var} = {}", quote(val))
            }
            ControlVerb::Show => write!(f, "SHOW {}", self.args[0].as_str().unwrap_or_default()),
            verb => {
                let args: Vec<String> = self
                    .args
                    .iter()
                    .map(|a| match a {
                        CallArg::Str(s) => quote(s),
                        CallArg::Set(items) => {
                            let items: Vec<String> = items.iter().map(|s| quote(s)).collect();
                            format!("{{{}}}", items.join(", "))
                        }
                    })
                    .collect();
                write!(f, "CALL {}({})", verb.name(), args.join(", "))
            }
        }
    }
}
