//! Table storage, CSV ingestion, snapshots and per-column statistics.
//!
//! Storage is row-oriented and fully in memory. Each table may declare one
//! `int64` primary-key column, for which a sorted index is maintained.

mod oracle;
mod stats;

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::value::{ColumnKind, Row, Value};

pub use stats::{ColumnStats, Histogram, TableStats, DEFAULT_HISTOGRAM_BUCKETS, DEFAULT_MCV_LIMIT};

/// Rows per synthesized page, used only for costing.
pub const ROWS_PER_PAGE: usize = 100;

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error("table \"{0}\" already exists")]
    DuplicateTable(String),
    #[error("invalid schema: {0}")]
    InvalidSchema(String),
    #[error("table \"{0}\" does not exist")]
    TableNotFound(String),
    #[error("column \"{column}\" does not exist in table \"{table}\"")]
    UnknownColumn { table: String, column: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    TypeError { line: u64, message: String },
    #[error("row has {got} values but table \"{table}\" has {expected} columns")]
    Arity {
        table: String,
        expected: usize,
        got: usize,
    },
    #[error("bad snapshot {path}: {message}")]
    Snapshot { path: PathBuf, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnDef {
    pub name: String,
    pub kind: ColumnKind,
}

impl ColumnDef {
    pub fn new(name: &str, kind: ColumnKind) -> Self {
        ColumnDef {
            name: name.to_ascii_lowercase(),
            kind,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableDef {
    pub name: String,
    pub columns: Vec<ColumnDef>,
    pub row_count: usize,
    /// Index into `columns` of the primary-key column, if declared.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub primary_key: Option<usize>,
}

impl TableDef {
    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn column(&self, name: &str) -> Option<&ColumnDef> {
        self.columns.iter().find(|c| c.name == name)
    }

    pub fn primary_key_column(&self) -> Option<&ColumnDef> {
        self.primary_key.map(|i| &self.columns[i])
    }

    /// Synthesized page count: `ceil(row_count / 100)`.
    pub fn pages(&self) -> usize {
        self.row_count.div_ceil(ROWS_PER_PAGE)
    }
}

#[derive(Debug, Clone)]
pub struct Table {
    def: TableDef,
    rows: Vec<Row>,
    /// (key, row position) sorted by key; present iff a primary key exists.
    index: Vec<(i64, usize)>,
    stats: Option<TableStats>,
}

impl Table {
    pub fn def(&self) -> &TableDef {
        &self.def
    }

    pub fn rows(&self) -> &[Row] {
        &self.rows
    }

    pub fn stats(&self) -> Option<&TableStats> {
        self.stats.as_ref()
    }

    pub fn column_stats(&self, column: &str) -> Option<&ColumnStats> {
        self.stats.as_ref().and_then(|s| s.columns.get(column))
    }

    /// Row positions whose primary key equals `key`, in insertion order.
    pub fn index_lookup(&self, key: i64) -> impl Iterator<Item = usize> + '_ {
        let start = self.index.partition_point(|(k, _)| *k < key);
        self.index[start..]
            .iter()
            .take_while(move |(k, _)| *k == key)
            .map(|(_, pos)| *pos)
    }

    fn rebuild_index(&mut self) {
        self.index.clear();
        if let Some(pk) = self.def.primary_key {
            for (pos, row) in self.rows.iter().enumerate() {
                if let Value::Int(k) = row[pk] {
                    self.index.push((k, pos));
                }
            }
            self.index.sort();
        }
    }
}

#[derive(Debug, Default, Clone)]
pub struct Catalog {
    tables: BTreeMap<String, Table>,
}

impl Catalog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn create_table(
        &mut self,
        name: &str,
        columns: Vec<ColumnDef>,
    ) -> Result<TableDef, CatalogError> {
        self.create_table_with_key(name, columns, None)
    }

    pub fn create_table_with_key(
        &mut self,
        name: &str,
        columns: Vec<ColumnDef>,
        primary_key: Option<&str>,
    ) -> Result<TableDef, CatalogError> {
        let name = name.to_ascii_lowercase();
        if self.tables.contains_key(&name) {
            return Err(CatalogError::DuplicateTable(name));
        }
        if columns.is_empty() {
            return Err(CatalogError::InvalidSchema(format!(
                "table \"{name}\" needs at least one column"
            )));
        }
        for (i, c) in columns.iter().enumerate() {
            if columns[..i].iter().any(|o| o.name == c.name) {
                return Err(CatalogError::InvalidSchema(format!(
                    "duplicate column \"{}\"",
                    c.name
                )));
            }
        }
        let primary_key = match primary_key {
            None => None,
            Some(pk) => {
                let pk = pk.to_ascii_lowercase();
                let pos = columns.iter().position(|c| c.name == pk).ok_or_else(|| {
                    CatalogError::InvalidSchema(format!("primary key \"{pk}\" is not a column"))
                })?;
                if columns[pos].kind != ColumnKind::Int64 {
                    return Err(CatalogError::InvalidSchema(
                        "primary key must be an int64 column".into(),
                    ));
                }
                Some(pos)
            }
        };
        let def = TableDef {
            name: name.clone(),
            columns,
            row_count: 0,
            primary_key,
        };
        self.tables.insert(
            name,
            Table {
                def: def.clone(),
                rows: Vec::new(),
                index: Vec::new(),
                stats: None,
            },
        );
        Ok(def)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.tables.contains_key(name)
    }

    pub fn table(&self, name: &str) -> Result<&Table, CatalogError> {
        self.tables
            .get(name)
            .ok_or_else(|| CatalogError::TableNotFound(name.to_string()))
    }

    fn table_mut(&mut self, name: &str) -> Result<&mut Table, CatalogError> {
        self.tables
            .get_mut(name)
            .ok_or_else(|| CatalogError::TableNotFound(name.to_string()))
    }

    pub fn table_names(&self) -> impl Iterator<Item = &str> {
        self.tables.keys().map(String::as_str)
    }

    pub fn scan(&self, name: &str) -> Result<&[Row], CatalogError> {
        Ok(self.table(name)?.rows())
    }

    /// Append rows after checking arity and coercing values to the column
    /// kinds. Either every row is appended or none is.
    pub fn append_rows(&mut self, name: &str, rows: Vec<Row>) -> Result<usize, CatalogError> {
        let table = self.table_mut(name)?;
        let mut checked = Vec::with_capacity(rows.len());
        for (i, row) in rows.into_iter().enumerate() {
            if row.len() != table.def.columns.len() {
                return Err(CatalogError::Arity {
                    table: table.def.name.clone(),
                    expected: table.def.columns.len(),
                    got: row.len(),
                });
            }
            let mut out = Vec::with_capacity(row.len());
            for (v, col) in row.into_iter().zip(&table.def.columns) {
                let shown = v.to_sql();
                let coerced = v.coerce(col.kind).ok_or_else(|| CatalogError::TypeError {
                    line: i as u64 + 1,
                    message: format!(
                        "value {shown} does not fit column \"{}\" ({})",
                        col.name, col.kind
                    ),
                })?;
                out.push(coerced);
            }
            checked.push(out);
        }
        let n = checked.len();
        table.rows.extend(checked);
        table.def.row_count = table.rows.len();
        table.rebuild_index();
        Ok(n)
    }

    /// Replace the full contents of a table. Used for small bookkeeping
    /// tables that are rewritten rather than appended to.
    pub fn replace_rows(&mut self, name: &str, rows: Vec<Row>) -> Result<usize, CatalogError> {
        let table = self.table_mut(name)?;
        let old = std::mem::take(&mut table.rows);
        table.def.row_count = 0;
        match self.append_rows(name, rows) {
            Ok(n) => Ok(n),
            Err(e) => {
                let table = self.table_mut(name)?;
                table.rows = old;
                table.def.row_count = table.rows.len();
                table.rebuild_index();
                Err(e)
            }
        }
    }

    /// Ingest a CSV file. Empty fields become nulls; the whole file is
    /// rejected on the first malformed record.
    pub fn load_csv(
        &mut self,
        name: &str,
        path: &Path,
        has_header: bool,
    ) -> Result<usize, CatalogError> {
        let def = self.table(name)?.def.clone();
        let io_err = |source| CatalogError::Io {
            path: path.to_path_buf(),
            source,
        };
        let file = File::open(path).map_err(io_err)?;
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(has_header)
            .flexible(true)
            .from_reader(file);
        let mut rows = Vec::new();
        for record in reader.records() {
            let record = record.map_err(|e| {
                let line = e.position().map(|p| p.line()).unwrap_or(0);
                match e.into_kind() {
                    csv::ErrorKind::Io(source) => io_err(source),
                    other => CatalogError::TypeError {
                        line,
                        message: format!("{other:?}"),
                    },
                }
            })?;
            let line = record.position().map(|p| p.line()).unwrap_or(0);
            if record.len() != def.columns.len() {
                return Err(CatalogError::TypeError {
                    line,
                    message: format!(
                        "expected {} fields, found {}",
                        def.columns.len(),
                        record.len()
                    ),
                });
            }
            let mut row = Vec::with_capacity(record.len());
            for (field, col) in record.iter().zip(&def.columns) {
                let v =
                    Value::parse_as(field, col.kind).ok_or_else(|| CatalogError::TypeError {
                        line,
                        message: format!(
                            "\"{field}\" is not a valid {} for column \"{}\"",
                            col.kind, col.name
                        ),
                    })?;
                row.push(v);
            }
            rows.push(row);
        }
        self.append_rows(name, rows)
    }

    /// Compute and store statistics for every column of `name`.
    pub fn analyze(
        &mut self,
        name: &str,
        histogram_buckets: usize,
        mcv_limit: usize,
    ) -> Result<BTreeMap<String, ColumnStats>, CatalogError> {
        let table = self.table_mut(name)?;
        let computed = stats::analyze_table(&table.def, &table.rows, histogram_buckets, mcv_limit);
        let columns = computed.columns.clone();
        table.stats = Some(computed);
        Ok(columns)
    }

    /// Write `<dir>/<table>.jsonl`: a header line with the definition followed
    /// by one JSON array per row.
    pub fn save_snapshot(&self, name: &str, dir: &Path) -> Result<PathBuf, CatalogError> {
        let table = self.table(name)?;
        let path = dir.join(format!("{name}.jsonl"));
        let io_err = |source| CatalogError::Io {
            path: path.clone(),
            source,
        };
        fs::create_dir_all(dir).map_err(io_err)?;
        let mut out = BufWriter::new(File::create(&path).map_err(io_err)?);
        let header = serde_json::to_string(&table.def).expect("table definition serializes");
        writeln!(out, "{header}").map_err(io_err)?;
        for row in &table.rows {
            let line = serde_json::to_string(row).expect("rows serialize");
            writeln!(out, "{line}").map_err(io_err)?;
        }
        out.flush().map_err(io_err)?;
        Ok(path)
    }

    /// Load a snapshot written by [`Catalog::save_snapshot`], replacing any
    /// table of the same name.
    pub fn load_snapshot(&mut self, path: &Path) -> Result<String, CatalogError> {
        let bad = |message: String| CatalogError::Snapshot {
            path: path.to_path_buf(),
            message,
        };
        let file = File::open(path).map_err(|source| CatalogError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut lines = BufReader::new(file).lines();
        let header = lines
            .next()
            .ok_or_else(|| bad("empty file".into()))?
            .map_err(|e| bad(e.to_string()))?;
        let def: TableDef = serde_json::from_str(&header).map_err(|e| bad(e.to_string()))?;
        let mut rows = Vec::with_capacity(def.row_count);
        for line in lines {
            let line = line.map_err(|e| bad(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let raw: Vec<serde_json::Value> =
                serde_json::from_str(&line).map_err(|e| bad(e.to_string()))?;
            if raw.len() != def.columns.len() {
                return Err(bad(format!(
                    "row arity {} != {}",
                    raw.len(),
                    def.columns.len()
                )));
            }
            let mut row = Vec::with_capacity(raw.len());
            for (v, col) in raw.into_iter().zip(&def.columns) {
                row.push(
                    json_to_value(v, col.kind)
                        .ok_or_else(|| bad(format!("bad value for {}", col.name)))?,
                );
            }
            rows.push(row);
        }
        let name = def.name.clone();
        let pk = def.primary_key_column().map(|c| c.name.clone());
        self.tables.remove(&name);
        self.create_table_with_key(&name, def.columns, pk.as_deref())?;
        self.append_rows(&name, rows)?;
        Ok(name)
    }
}

fn json_to_value(v: serde_json::Value, kind: ColumnKind) -> Option<Value> {
    match (v, kind) {
        (serde_json::Value::Null, _) => Some(Value::Null),
        (serde_json::Value::Number(n), ColumnKind::Int64) => n.as_i64().map(Value::Int),
        (serde_json::Value::Number(n), ColumnKind::Float64) => n.as_f64().map(Value::Float),
        (serde_json::Value::String(s), ColumnKind::Text) => Some(Value::Text(s)),
        _ => None,
    }
}
