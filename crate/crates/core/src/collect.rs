//! Versioned training-data collectors.
//!
//! A collector captures one record per executed statement whose class is in
//! its class filter and whose tables are a subset of its table filter.
//! Records are buffered in memory (spilling to disk past the buffer cap) and
//! written to a dataset file and a target table when the collector stops.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::{Catalog, CatalogError, ColumnDef};
use crate::exec::NodeRuntimeStats;
use crate::planner::{NodeType, PlanNode};
use crate::sql::{QueryClass, TableSet};
use crate::value::{ColumnKind, Value};

pub const DEFAULT_BUFFER_CAP: usize = 10_000;
pub const RECORD_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CollectError {
    #[error("collector \"{0}\" already exists")]
    DuplicateCollector(String),
    #[error("collector \"{0}\" needs a non-empty {1} filter")]
    EmptyFilter(String, &'static str),
    #[error("unknown feature \"{0}\"; expected query_text, plan, est_costs or actual_runtimes")]
    UnknownFeature(String),
    #[error("unknown query class \"{0}\"")]
    UnknownClass(String),
    #[error("collector \"{0}\" does not exist")]
    UnknownCollector(String),
    #[error("collector \"{0}\" is already running")]
    AlreadyRunning(String),
    #[error("no running collector writes dataset \"{0}\"")]
    UnknownDataset(String),
    #[error("dataset \"{0}\" is written by more than one running collector: {1}")]
    AmbiguousDataset(String, String),
    #[error("target table \"{0}\" exists with a different schema")]
    TargetSchema(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: bad record: {message}")]
    BadRecord { path: PathBuf, message: String },
    #[error(transparent)]
    Catalog(#[from] CatalogError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CollectError + '_ {
    move |source| CollectError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Feature {
    QueryText,
    Plan,
    EstCosts,
    ActualRuntimes,
}

impl Feature {
    pub const ALL: [Feature; 4] = [
        Feature::QueryText,
        Feature::Plan,
        Feature::EstCosts,
        Feature::ActualRuntimes,
    ];

    pub fn parse(s: &str) -> Option<Feature> {
        Some(match s.to_ascii_lowercase().as_str() {
            "query_text" => Feature::QueryText,
            "plan" => Feature::Plan,
            "est_costs" => Feature::EstCosts,
            "actual_runtimes" => Feature::ActualRuntimes,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Feature::QueryText => "query_text",
            Feature::Plan => "plan",
            Feature::EstCosts => "est_costs",
            Feature::ActualRuntimes => "actual_runtimes",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CollectorDef {
    pub name: String,
    pub table_filter: TableSet,
    pub class_filter: BTreeSet<QueryClass>,
    pub features: BTreeSet<Feature>,
}

impl CollectorDef {
    pub fn matches(&self, class: QueryClass, tables: &TableSet) -> bool {
        self.class_filter.contains(&class) && tables.is_subset(&self.table_filter)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CollectorStatus {
    Defined,
    Running,
    Stopped,
}

impl fmt::Display for CollectorStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CollectorStatus::Defined => "defined",
            CollectorStatus::Running => "running",
            CollectorStatus::Stopped => "stopped",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeEstimate {
    pub node_id: usize,
    pub node_type: NodeType,
    pub est_rows: f64,
    pub est_cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Runtimes {
    pub total_time_ns: u64,
    pub nodes: Vec<NodeRuntimeStats>,
}

/// One captured statement. Optional fields follow the collector's features
/// and are omitted entirely when not collected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetRecord {
    pub schema: u32,
    pub dataset_id: String,
    pub version: u32,
    /// Unix time in milliseconds.
    pub timestamp: u64,
    pub query_class: QueryClass,
    pub tables: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub query_text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plan: Option<serde_json::Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub est_costs: Option<Vec<NodeEstimate>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub actual_runtimes: Option<Runtimes>,
}

/// What the engine knows about a statement after running it.
#[derive(Debug, Clone, Copy)]
pub struct Capture<'a> {
    pub class: QueryClass,
    pub tables: &'a TableSet,
    pub query_text: &'a str,
    pub plan: Option<&'a PlanNode>,
    pub runtimes: Option<(&'a [NodeRuntimeStats], u64)>,
}

#[derive(Debug)]
pub struct CollectorState {
    pub def: CollectorDef,
    pub status: CollectorStatus,
    pub dataset_id: Option<String>,
    pub version: u32,
    pub target_table: Option<String>,
    buffer: Vec<DatasetRecord>,
    spilled: usize,
}

impl CollectorState {
    /// Records captured since the last start.
    pub fn captured(&self) -> usize {
        self.buffer.len() + self.spilled
    }
}

/// Columns of a collector's target table.
pub fn target_schema() -> Vec<ColumnDef> {
    vec![
        ColumnDef::new("dataset_id", ColumnKind::Text),
        ColumnDef::new("version", ColumnKind::Int64),
        ColumnDef::new("record_no", ColumnKind::Int64),
        ColumnDef::new("query_class", ColumnKind::Text),
        ColumnDef::new("query_text", ColumnKind::Text),
        ColumnDef::new("record", ColumnKind::Text),
    ]
}

pub fn dataset_path(data_dir: &Path, dataset_id: &str, version: u32) -> PathBuf {
    data_dir
        .join("datasets")
        .join(format!("{dataset_id}.v{version}.jsonl"))
}

fn spill_path(data_dir: &Path, dataset_id: &str, version: u32) -> PathBuf {
    data_dir
        .join("datasets")
        .join(format!("{dataset_id}.v{version}.spill.jsonl"))
}

pub fn read_dataset(path: &Path) -> Result<Vec<DatasetRecord>, CollectError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line).map_err(|e| CollectError::BadRecord {
                path: path.to_path_buf(),
                message: e.to_string(),
            })?,
        );
    }
    Ok(out)
}

fn write_records(path: &Path, records: &[DatasetRecord], append: bool) -> Result<(), CollectError> {
    let file = OpenOptions::new()
        .create(true)
        .write(true)
        .append(append)
        .truncate(!append)
        .open(path)
        .map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    for r in records {
        serde_json::to_writer(&mut w, r).expect("records serialize");
        w.write_all(b"\n").map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

/// All collectors of an engine plus the persisted version counters.
#[derive(Debug)]
pub struct Collectors {
    data_dir: PathBuf,
    buffer_cap: usize,
    collectors: BTreeMap<String, CollectorState>,
    /// Last version handed out per `collector/dataset_id`.
    versions: BTreeMap<String, u32>,
}

impl Collectors {
    pub fn new(data_dir: &Path, buffer_cap: usize) -> Result<Self, CollectError> {
        let dir = data_dir.join("datasets");
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        let vpath = dir.join("versions.json");
        let versions = match fs::read_to_string(&vpath) {
            Ok(text) => serde_json::from_str(&text).map_err(|e| CollectError::BadRecord {
                path: vpath.clone(),
                message: e.to_string(),
            })?,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => BTreeMap::new(),
            Err(e) => return Err(io_err(&vpath)(e)),
        };
        Ok(Collectors {
            data_dir: data_dir.to_path_buf(),
            buffer_cap: buffer_cap.max(1),
            collectors: BTreeMap::new(),
            versions,
        })
    }

    pub fn data_dir(&self) -> &Path {
        &self.data_dir
    }

    pub fn get(&self, name: &str) -> Option<&CollectorState> {
        self.collectors.get(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = &CollectorState> {
        self.collectors.values()
    }

    pub fn define(
        &mut self,
        name: &str,
        tables: &[String],
        classes: &[String],
        features: Option<&[String]>,
    ) -> Result<&CollectorDef, CollectError> {
        if self.collectors.contains_key(name) {
            return Err(CollectError::DuplicateCollector(name.into()));
        }
        if tables.is_empty() {
            return Err(CollectError::EmptyFilter(name.into(), "table"));
        }
        if classes.is_empty() {
            return Err(CollectError::EmptyFilter(name.into(), "query class"));
        }
        let class_filter = classes
            .iter()
            .map(|c| QueryClass::parse(c).ok_or_else(|| CollectError::UnknownClass(c.clone())))
            .collect::<Result<_, _>>()?;
        let features = match features {
            None => Feature::ALL.into_iter().collect(),
            Some([]) => return Err(CollectError::EmptyFilter(name.into(), "feature")),
            Some(fs) => fs
                .iter()
                .map(|f| Feature::parse(f).ok_or_else(|| CollectError::UnknownFeature(f.clone())))
                .collect::<Result<_, _>>()?,
        };
        let def = CollectorDef {
            name: name.into(),
            table_filter: tables.iter().map(|t| t.to_ascii_lowercase()).collect(),
            class_filter,
            features,
        };
        let state = CollectorState {
            def,
            status: CollectorStatus::Defined,
            dataset_id: None,
            version: 0,
            target_table: None,
            buffer: Vec::new(),
            spilled: 0,
        };
        Ok(&self.collectors.entry(name.into()).or_insert(state).def)
    }

    /// Start capturing into `dataset_id`; returns the new version.
    pub fn start(
        &mut self,
        name: &str,
        dataset_id: &str,
        target_table: &str,
        catalog: &mut Catalog,
    ) -> Result<u32, CollectError> {
        let state = self
            .collectors
            .get(name)
            .ok_or_else(|| CollectError::UnknownCollector(name.into()))?;
        if state.status == CollectorStatus::Running {
            return Err(CollectError::AlreadyRunning(name.into()));
        }
        let target = target_table.to_ascii_lowercase();
        match catalog.table(&target) {
            Ok(t) if t.def().columns != target_schema() => {
                return Err(CollectError::TargetSchema(target))
            }
            Ok(_) => {}
            Err(CatalogError::TableNotFound(_)) => {
                catalog.create_table(&target, target_schema())?;
            }
            Err(e) => return Err(e.into()),
        }
        let key = format!("{name}/{dataset_id}");
        let version = self.versions.get(&key).copied().unwrap_or(0) + 1;
        self.versions.insert(key, version);
        self.save_versions()?;

        let state = self.collectors.get_mut(name).expect("checked above");
        state.status = CollectorStatus::Running;
        state.dataset_id = Some(dataset_id.into());
        state.version = version;
        state.target_table = Some(target);
        state.buffer.clear();
        state.spilled = 0;
        Ok(version)
    }

    fn save_versions(&self) -> Result<(), CollectError> {
        let path = self.data_dir.join("datasets").join("versions.json");
        let tmp = path.with_extension("json.tmp");
        let text = serde_json::to_string_pretty(&self.versions).expect("map serializes");
        fs::write(&tmp, text).map_err(io_err(&tmp))?;
        fs::rename(&tmp, &path).map_err(io_err(&path))
    }

    /// Record a finished statement with every running collector that matches
    /// it; returns how many records were appended. Never fails the caller:
    /// spill errors are logged.
    pub fn capture(&mut self, c: &Capture<'_>) -> usize {
        let mut appended = 0;
        let cap = self.buffer_cap;
        for state in self.collectors.values_mut() {
            if state.status != CollectorStatus::Running || !state.def.matches(c.class, c.tables) {
                continue;
            }
            let f = &state.def.features;
            let record = DatasetRecord {
                schema: RECORD_SCHEMA_VERSION,
                dataset_id: state
                    .dataset_id
                    .clone()
                    .expect("running collector has a dataset"),
                version: state.version,
                timestamp: now_ms(),
                query_class: c.class,
                tables: c.tables.iter().cloned().collect(),
                query_text: f
                    .contains(&Feature::QueryText)
                    .then(|| c.query_text.to_string()),
                plan: c
                    .plan
                    .filter(|_| f.contains(&Feature::Plan))
                    .map(PlanNode::to_json),
                est_costs: c.plan.filter(|_| f.contains(&Feature::EstCosts)).map(|p| {
                    p.preorder()
                        .into_iter()
                        .map(|n| NodeEstimate {
                            node_id: n.node_id,
                            node_type: n.node_type,
                            est_rows: n.est_rows,
                            est_cost: n.est_cost,
                        })
                        .collect()
                }),
                actual_runtimes: c
                    .runtimes
                    .filter(|_| f.contains(&Feature::ActualRuntimes))
                    .map(|(nodes, total)| Runtimes {
                        total_time_ns: total,
                        nodes: nodes.to_vec(),
                    }),
            };
            if state.buffer.len() >= cap {
                let path = spill_path(&self.data_dir, &record.dataset_id, state.version);
                match write_records(&path, &state.buffer, true) {
                    Ok(()) => {
                        state.spilled += state.buffer.len();
                        state.buffer.clear();
                    }
                    Err(e) => {
                        tracing::warn!(error = %e, "collector spill failed; keeping records in memory")
                    }
                }
            }
            state.buffer.push(record);
            appended += 1;
        }
        appended
    }

    /// Stop the running collector writing `dataset_id`, flush its records to
    /// the dataset file and target table, and return the record count.
    pub fn stop(&mut self, dataset_id: &str, catalog: &mut Catalog) -> Result<usize, CollectError> {
        let running: Vec<&String> = self
            .collectors
            .iter()
            .filter(|(_, s)| {
                s.status == CollectorStatus::Running && s.dataset_id.as_deref() == Some(dataset_id)
            })
            .map(|(n, _)| n)
            .collect();
        let name = match running.as_slice() {
            [] => return Err(CollectError::UnknownDataset(dataset_id.into())),
            [one] => (*one).clone(),
            many => {
                let names: Vec<&str> = many.iter().map(|s| s.as_str()).collect();
                return Err(CollectError::AmbiguousDataset(
                    dataset_id.into(),
                    names.join(", "),
                ));
            }
        };
        let data_dir = self.data_dir.clone();
        let state = self.collectors.get_mut(&name).expect("found above");
        let version = state.version;
        let target = state
            .target_table
            .clone()
            .expect("running collector has a target");

        let spill = spill_path(&data_dir, dataset_id, version);
        let mut records = if state.spilled > 0 {
            read_dataset(&spill)?
        } else {
            Vec::new()
        };
        records.extend(state.buffer.iter().cloned());

        let out = dataset_path(&data_dir, dataset_id, version);
        write_records(&out, &records, false)?;
        let rows = records
            .iter()
            .enumerate()
            .map(|(i, r)| {
                vec![
                    Value::Text(r.dataset_id.clone()),
                    Value::Int(r.version as i64),
                    Value::Int(i as i64 + 1),
                    Value::Text(r.query_class.as_str().into()),
                    r.query_text.clone().map_or(Value::Null, Value::Text),
                    Value::Text(serde_json::to_string(r).expect("records serialize")),
                ]
            })
            .collect();
        catalog.append_rows(&target, rows)?;
        if state.spilled > 0 {
            let _ = fs::remove_file(&spill);
        }
        state.status = CollectorStatus::Stopped;
        state.buffer.clear();
        state.spilled = 0;
        Ok(records.len())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn strs(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    fn tables(v: &[&str]) -> TableSet {
        v.iter().map(|s| s.to_string()).collect()
    }

    fn capture<'a>(class: QueryClass, t: &'a TableSet) -> Capture<'a> {
        Capture {
            class,
            tables: t,
            query_text: "SELECT 1",
            plan: None,
            runtimes: None,
        }
    }

    #[test]
    fn define_validates() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = Collectors::new(dir.path(), 10).unwrap();
        c.define("c", &strs(&["t1", "t2"]), &strs(&["SELECT"]), None)
            .unwrap();
        assert!(matches!(
            c.define("c", &strs(&["t1"]), &strs(&["SELECT"]), None),
            Err(CollectError::DuplicateCollector(_))
        ));
        assert!(matches!(
            c.define("d", &[], &strs(&["SELECT"]), None),
            Err(CollectError::EmptyFilter(..))
        ));
        assert!(c
            .define("e", &strs(&["t"]), &strs(&["DELETE"]), None)
            .is_err());
        assert!(c
            .define(
                "f",
                &strs(&["t"]),
                &strs(&["SELECT"]),
                Some(&strs(&["bogus"]))
            )
            .is_err());
    }

    #[test]
    fn matching_uses_subset_rule() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = Collectors::new(dir.path(), 10).unwrap();
        let def = c
            .define("c", &strs(&["t1", "t2"]), &strs(&["SELECT"]), None)
            .unwrap()
            .clone();
        assert!(def.matches(QueryClass::Select, &tables(&["t1"])));
        assert!(!def.matches(QueryClass::Select, &tables(&["t1", "t3"])));
        assert!(!def.matches(QueryClass::Insert, &tables(&["t1"])));
    }

    #[test]
    fn versions_increase_and_survive_reopen() {
        let dir = tempfile::tempdir().unwrap();
        let mut cat = Catalog::new();
        let mut c = Collectors::new(dir.path(), 10).unwrap();
        c.define("c", &strs(&["t"]), &strs(&["SELECT"]), None)
            .unwrap();
        assert_eq!(c.start("c", "ds", "train", &mut cat).unwrap(), 1);
        assert!(matches!(
            c.start("c", "ds", "train", &mut cat),
            Err(CollectError::AlreadyRunning(_))
        ));
        assert_eq!(c.stop("ds", &mut cat).unwrap(), 0);
        assert_eq!(c.start("c", "ds", "train", &mut cat).unwrap(), 2);
        c.stop("ds", &mut cat).unwrap();
        assert!(matches!(
            c.stop("ds", &mut cat),
            Err(CollectError::UnknownDataset(_))
        ));

        let mut c = Collectors::new(dir.path(), 10).unwrap();
        c.define("c", &strs(&["t"]), &strs(&["SELECT"]), None)
            .unwrap();
        assert_eq!(c.start("c", "ds", "train", &mut cat).unwrap(), 3);
    }

    #[test]
    fn overflow_spills_and_loses_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let mut cat = Catalog::new();
        let mut c = Collectors::new(dir.path(), 3).unwrap();
        c.define("c", &strs(&["t"]), &strs(&["SELECT"]), None)
            .unwrap();
        c.start("c", "ds", "train", &mut cat).unwrap();
        let t = tables(&["t"]);
        for _ in 0..7 {
            assert_eq!(c.capture(&capture(QueryClass::Select, &t)), 1);
        }
        assert_eq!(c.get("c").unwrap().captured(), 7);
        assert_eq!(c.stop("ds", &mut cat).unwrap(), 7);
        assert_eq!(
            read_dataset(&dataset_path(dir.path(), "ds", 1))
                .unwrap()
                .len(),
            7
        );
        assert_eq!(cat.table("train").unwrap().def().row_count, 7);
        assert!(!spill_path(dir.path(), "ds", 1).exists());
    }

    #[test]
    fn shared_dataset_id_is_ambiguous() {
        let dir = tempfile::tempdir().unwrap();
        let mut cat = Catalog::new();
        let mut c = Collectors::new(dir.path(), 10).unwrap();
        c.define("a", &strs(&["t"]), &strs(&["SELECT"]), None)
            .unwrap();
        c.define("b", &strs(&["t"]), &strs(&["SELECT"]), None)
            .unwrap();
        c.start("a", "ds", "train", &mut cat).unwrap();
        c.start("b", "ds", "train", &mut cat).unwrap();
        assert!(matches!(
            c.stop("ds", &mut cat),
            Err(CollectError::AmbiguousDataset(..))
        ));
    }

    #[test]
    fn absent_features_are_omitted() {
        let dir = tempfile::tempdir().unwrap();
        let mut cat = Catalog::new();
        let mut c = Collectors::new(dir.path(), 10).unwrap();
        c.define(
            "c",
            &strs(&["t"]),
            &strs(&["SELECT"]),
            Some(&strs(&["plan"])),
        )
        .unwrap();
        c.start("c", "ds", "train", &mut cat).unwrap();
        c.capture(&capture(QueryClass::Select, &tables(&["t"])));
        c.stop("ds", &mut cat).unwrap();
        let line = fs::read_to_string(dataset_path(dir.path(), "ds", 1)).unwrap();
        let v: serde_json::Value = serde_json::from_str(line.trim()).unwrap();
        let obj = v.as_object().unwrap();
        assert_eq!(obj["schema"], 1);
        assert!(!obj.contains_key("query_text"));
        assert!(!obj.contains_key("plan"));
    }

    #[test]
    fn target_table_schema_is_checked() {
        let dir = tempfile::tempdir().unwrap();
        let mut cat = Catalog::new();
        cat.create_table("train", vec![ColumnDef::new("x", ColumnKind::Int64)])
            .unwrap();
        let mut c = Collectors::new(dir.path(), 10).unwrap();
        c.define("c", &strs(&["t"]), &strs(&["SELECT"]), None)
            .unwrap();
        assert!(matches!(
            c.start("c", "ds", "train", &mut cat),
            Err(CollectError::TargetSchema(_))
        ));
    }
}
