//! Typed scalars shared by storage, the SQL frontend and the executor.

use std::cmp::Ordering;
use std::fmt;
use std::hash::{Hash, Hasher};

use serde::{Deserialize, Serialize};

/// Storage kind of a column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Int64,
    Float64,
    Text,
}

impl ColumnKind {
    pub fn parse(s: &str) -> Option<ColumnKind> {
        match s.to_ascii_lowercase().as_str() {
            "int64" | "int" | "integer" | "bigint" => Some(ColumnKind::Int64),
            "float64" | "float" | "double" | "real" => Some(ColumnKind::Float64),
            "text" | "varchar" | "string" => Some(ColumnKind::Text),
            _ => None,
        }
    }

    pub fn is_numeric(self) -> bool {
        !matches!(self, ColumnKind::Text)
    }
}

impl fmt::Display for ColumnKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ColumnKind::Int64 => "int64",
            ColumnKind::Float64 => "float64",
            ColumnKind::Text => "text",
        })
    }
}

/// A single scalar. Floats are totally ordered (`f64::total_cmp`) so values
/// can live in ordered sets and hash maps.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Null,
    Int(i64),
    Float(f64),
    Text(String),
}

impl Value {
    pub fn is_null(&self) -> bool {
        matches!(self, Value::Null)
    }

    pub fn kind(&self) -> Option<ColumnKind> {
        match self {
            Value::Null => None,
            Value::Int(_) => Some(ColumnKind::Int64),
            Value::Float(_) => Some(ColumnKind::Float64),
            Value::Text(_) => Some(ColumnKind::Text),
        }
    }

    /// Numeric view used by histograms.
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Int(v) => Some(*v as f64),
            Value::Float(v) => Some(*v),
            _ => None,
        }
    }

    /// SQL comparison: `None` when either side is null or the kinds are
    /// incomparable.
    pub fn sql_cmp(&self, other: &Value) -> Option<Ordering> {
        match (self, other) {
            (Value::Int(a), Value::Int(b)) => Some(a.cmp(b)),
            (Value::Text(a), Value::Text(b)) => Some(a.cmp(b)),
            (Value::Null, _) | (_, Value::Null) => None,
            (a, b) => match (a.as_f64(), b.as_f64()) {
                (Some(x), Some(y)) => x.partial_cmp(&y),
                _ => None,
            },
        }
    }

    fn rank(&self) -> u8 {
        match self {
            Value::Null => 0,
            Value::Int(_) => 1,
            Value::Float(_) => 2,
            Value::Text(_) => 3,
        }
    }

    /// Coerce a literal to the given column kind. Integers widen to floats;
    /// nothing else converts.
    pub fn coerce(self, kind: ColumnKind) -> Option<Value> {
        match (self, kind) {
            (Value::Null, _) => Some(Value::Null),
            (Value::Int(v), ColumnKind::Int64) => Some(Value::Int(v)),
            (Value::Int(v), ColumnKind::Float64) => Some(Value::Float(v as f64)),
            (Value::Float(v), ColumnKind::Float64) => Some(Value::Float(v)),
            (Value::Text(s), ColumnKind::Text) => Some(Value::Text(s)),
            _ => None,
        }
    }

    /// Parse a CSV field into the given kind. Empty fields are null.
    pub fn parse_as(field: &str, kind: ColumnKind) -> Option<Value> {
        if field.is_empty() {
            return Some(Value::Null);
        }
        match kind {
            ColumnKind::Int64 => field.trim().parse().ok().map(Value::Int),
            ColumnKind::Float64 => field.trim().parse().ok().map(Value::Float),
            ColumnKind::Text => Some(Value::Text(field.to_string())),
        }
    }

    /// Render as a SQL literal.
    pub fn to_sql(&self) -> String {
        match self {
            Value::Null => "NULL".into(),
            Value::Int(v) => v.to_string(),
            Value::Float(v) => format!("{v:?}"),
            Value::Text(s) => format!("'{}'", s.replace('\'', "''")),
        }
    }
}

impl PartialEq for Value {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Value {}

impl PartialOrd for Value {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Value {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (Value::Int(a), Value::Int(b)) => a.cmp(b),
            (Value::Float(a), Value::Float(b)) => a.total_cmp(b),
            (Value::Text(a), Value::Text(b)) => a.cmp(b),
            (a, b) => a.rank().cmp(&b.rank()),
        }
    }
}

impl Hash for Value {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.rank().hash(state);
        match self {
            Value::Null => {}
            Value::Int(v) => v.hash(state),
            Value::Float(v) => v.to_bits().hash(state),
            Value::Text(s) => s.hash(state),
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Null => f.write_str("NULL"),
            Value::Int(v) => write!(f, "{v}"),
            Value::Float(v) => write!(f, "{v}"),
            Value::Text(s) => f.write_str(s),
        }
    }
}

pub type Row = Vec<Value>;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sql_cmp_treats_null_as_unknown() {
        assert_eq!(Value::Null.sql_cmp(&Value::Int(1)), None);
        assert_eq!(
            Value::Int(2).sql_cmp(&Value::Float(2.5)),
            Some(Ordering::Less)
        );
        assert_eq!(Value::Text("a".into()).sql_cmp(&Value::Int(1)), None);
    }

    #[test]
    fn coerce_widens_ints_only() {
        assert_eq!(
            Value::Int(3).coerce(ColumnKind::Float64),
            Some(Value::Float(3.0))
        );
        assert_eq!(Value::Float(3.0).coerce(ColumnKind::Int64), None);
        assert_eq!(Value::Text("x".into()).coerce(ColumnKind::Int64), None);
    }

    #[test]
    fn sql_literal_escapes_quotes() {
        assert_eq!(Value::Text("it's".into()).to_sql(), "'it''s'");
        assert_eq!(Value::Float(1.0).to_sql(), "1.0");
    }
}
