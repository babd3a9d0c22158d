use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use thiserror::Error;

use super::manifest::Manifest;
use super::protocol::Task;
use super::worker::{StartError, TraceEvent, TransportError, Worker};
use crate::catalog::{Catalog, CatalogError, ColumnDef};
use crate::sql::TableSet;
use crate::value::{ColumnKind, Value};

pub const DEFAULT_STARTUP_TIMEOUT_MS: u64 = 2000;

#[derive(Debug, Error)]
pub enum RegistryError {
    #[error("model \"{0}\" is already registered")]
    DuplicateModel(String),
    #[error("model \"{0}\" is not registered")]
    UnknownModel(String),
    #[error("unknown task \"{0}\"; expected CARDEST, COST, RUNTIME or STEER")]
    UnknownTask(String),
    #[error("bad manifest for model \"{0}\": {1}")]
    BadManifest(String, String),
    #[error("model \"{name}\" registered for {registered} but its manifest declares {manifest}")]
    TaskMismatch {
        name: String,
        registered: Task,
        manifest: Task,
    },
    #[error("model \"{0}\" is already running")]
    AlreadyRunning(String),
    #[error("starting model \"{0}\" failed: {1}")]
    Start(String, StartError),
    #[error("stats table \"{0}\" exists with a different schema")]
    StatsSchema(String),
    #[error(transparent)]
    Catalog(#[from] CatalogError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelState {
    Registered,
    Running,
    Stopped,
    Failed,
}

impl fmt::Display for ModelState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelState::Registered => "registered",
            ModelState::Running => "running",
            ModelState::Stopped => "stopped",
            ModelState::Failed => "failed",
        })
    }
}

/// Per-model accounting mirrored into the model's stats table.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ModelStats {
    /// Requests answered without a transport error.
    pub request_count: u64,
    /// Transport errors plus answers the engine rejected.
    pub fallback_count: u64,
    total_latency: Duration,
}

impl ModelStats {
    pub fn mean_latency_ms(&self) -> f64 {
        if self.request_count == 0 {
            0.0
        } else {
            self.total_latency.as_secs_f64() * 1e3 / self.request_count as f64
        }
    }
}

#[derive(Debug)]
pub struct ModelEntry {
    pub name: String,
    pub task: Task,
    pub table_scope: TableSet,
    pub stats_table: String,
    pub model_dir: PathBuf,
    pub state: ModelState,
    pub manifest: Manifest,
    pub stats: ModelStats,
    worker: Option<Worker>,
}

impl ModelEntry {
    pub fn worker(&self) -> Option<&Worker> {
        self.worker.as_ref()
    }

    pub fn trace(&self) -> Vec<TraceEvent> {
        self.worker
            .as_ref()
            .map(|w| w.trace().copied().collect())
            .unwrap_or_default()
    }

    /// Kill the worker process without telling the registry, as an external
    /// failure would.
    pub fn kill_worker(&mut self) {
        if let Some(w) = self.worker.as_mut() {
            w.kill();
        }
    }

    /// Count an answer that arrived but was unusable.
    pub fn record_rejected(&mut self) {
        self.stats.fallback_count += 1;
    }

    pub fn infer(
        &mut self,
        payload: serde_json::Value,
        deadline_ms: u64,
    ) -> Result<serde_json::Value, TransportError> {
        let Some(worker) = self
            .worker
            .as_mut()
            .filter(|_| self.state == ModelState::Running)
        else {
            self.stats.fallback_count += 1;
            return Err(TransportError::Crashed(format!(
                "model {} is {}",
                self.name, self.state
            )));
        };
        let start = Instant::now();
        let result = worker.infer(self.task, payload, deadline_ms);
        match &result {
            Ok(_) => {
                self.stats.request_count += 1;
                self.stats.total_latency += start.elapsed();
            }
            Err(e) => {
                self.stats.fallback_count += 1;
                tracing::debug!(model = %self.name, error = %e, "inference failed");
                if matches!(e, TransportError::Crashed(_)) {
                    self.state = ModelState::Failed;
                }
            }
        }
        result
    }
}

pub fn stats_schema() -> Vec<ColumnDef> {
    vec![
        ColumnDef::new("model", ColumnKind::Text),
        ColumnDef::new("request_count", ColumnKind::Int64),
        ColumnDef::new("fallback_count", ColumnKind::Int64),
        ColumnDef::new("mean_latency_ms", ColumnKind::Float64),
    ]
}

/// Registered models and their worker processes.
#[derive(Debug)]
pub struct Registry {
    data_dir: PathBuf,
    pub startup_timeout: Duration,
    models: BTreeMap<String, ModelEntry>,
}

impl Registry {
    pub fn new(data_dir: &Path, startup_timeout_ms: u64) -> Self {
        Registry {
            data_dir: data_dir.to_path_buf(),
            startup_timeout: Duration::from_millis(startup_timeout_ms),
            models: BTreeMap::new(),
        }
    }

    pub fn get(&self, name: &str) -> Option<&ModelEntry> {
        self.models.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut ModelEntry> {
        self.models.get_mut(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = &ModelEntry> {
        self.models.values()
    }

    /// Register a model directory. Without an explicit directory the model
    /// is looked up in `<data_dir>/models/<name>`.
    pub fn register(
        &mut self,
        name: &str,
        task: &str,
        table_scope: &[String],
        stats_table: &str,
        model_dir: Option<&Path>,
        catalog: &mut Catalog,
    ) -> Result<&ModelEntry, RegistryError> {
        if self.models.contains_key(name) {
            return Err(RegistryError::DuplicateModel(name.into()));
        }
        let task = Task::parse(task).ok_or_else(|| RegistryError::UnknownTask(task.into()))?;
        let model_dir = match model_dir {
            Some(d) if d.is_relative() => std::env::current_dir()
                .map(|c| c.join(d))
                .unwrap_or(d.to_path_buf()),
            Some(d) => d.to_path_buf(),
            None => self.data_dir.join("models").join(name),
        };
        let manifest =
            Manifest::load(&model_dir).map_err(|e| RegistryError::BadManifest(name.into(), e))?;
        if manifest.task != task {
            return Err(RegistryError::TaskMismatch {
                name: name.into(),
                registered: task,
                manifest: manifest.task,
            });
        }
        let stats_table = stats_table.to_ascii_lowercase();
        match catalog.table(&stats_table) {
            Ok(t) if t.def().columns != stats_schema() => {
                return Err(RegistryError::StatsSchema(stats_table))
            }
            Ok(_) => {}
            Err(CatalogError::TableNotFound(_)) => {
                catalog.create_table(&stats_table, stats_schema())?;
            }
            Err(e) => return Err(e.into()),
        }
        let entry = ModelEntry {
            name: name.into(),
            task,
            table_scope: table_scope.iter().map(|t| t.to_ascii_lowercase()).collect(),
            stats_table,
            model_dir,
            state: ModelState::Registered,
            manifest,
            stats: ModelStats::default(),
            worker: None,
        };
        let entry = self.models.entry(name.into()).or_insert(entry);
        Ok(entry)
    }

    pub fn start(&mut self, name: &str) -> Result<&ModelEntry, RegistryError> {
        self.reap();
        let logs = self.data_dir.join("logs");
        let timeout = self.startup_timeout;
        let entry = self
            .models
            .get_mut(name)
            .ok_or_else(|| RegistryError::UnknownModel(name.into()))?;
        if entry.state == ModelState::Running {
            return Err(RegistryError::AlreadyRunning(name.into()));
        }
        if let Some(mut old) = entry.worker.take() {
            old.kill();
        }
        let _ = std::fs::create_dir_all(&logs);
        let log = logs.join(format!("{name}.log"));
        match Worker::spawn(&entry.manifest, &entry.model_dir, &log, timeout) {
            Ok(w) => {
                tracing::info!(model = name, pid = w.pid(), "worker started");
                entry.worker = Some(w);
                entry.state = ModelState::Running;
                Ok(entry)
            }
            Err(e) => {
                entry.state = ModelState::Failed;
                Err(RegistryError::Start(name.into(), e))
            }
        }
    }

    /// Stop a model's worker; stopping a model that is not running succeeds.
    pub fn reset(&mut self, name: &str) -> Result<(), RegistryError> {
        let entry = self
            .models
            .get_mut(name)
            .ok_or_else(|| RegistryError::UnknownModel(name.into()))?;
        if let Some(w) = entry.worker.take() {
            w.shutdown();
        }
        entry.state = ModelState::Stopped;
        Ok(())
    }

    /// Mark running models whose worker has exited as failed.
    pub fn reap(&mut self) {
        for e in self.models.values_mut() {
            if e.state == ModelState::Running && !e.worker.as_ref().is_some_and(Worker::is_alive) {
                tracing::warn!(model = %e.name, "worker exited");
                e.state = ModelState::Failed;
            }
        }
    }

    /// The model configured for `task` if it is running and its table scope
    /// covers `tables`.
    pub fn route(&self, model: Option<&str>, task: Task, tables: &TableSet) -> Option<&str> {
        let e = self.models.get(model?)?;
        (e.task == task && e.state == ModelState::Running && tables.is_subset(&e.table_scope))
            .then_some(e.name.as_str())
    }

    /// Write every model's counters into its stats table.
    pub fn sync_stats(&self, catalog: &mut Catalog) -> Result<(), CatalogError> {
        let mut by_table: BTreeMap<&str, Vec<Vec<Value>>> = BTreeMap::new();
        for e in self.models.values() {
            by_table
                .entry(e.stats_table.as_str())
                .or_default()
                .push(vec![
                    Value::Text(e.name.clone()),
                    Value::Int(e.stats.request_count as i64),
                    Value::Int(e.stats.fallback_count as i64),
                    Value::Float(e.stats.mean_latency_ms()),
                ]);
        }
        for (table, rows) in by_table {
            if catalog.contains(table) {
                catalog.replace_rows(table, rows)?;
            }
        }
        Ok(())
    }

    /// Stop every worker.
    pub fn shutdown_all(&mut self) {
        for e in self.models.values_mut() {
            if let Some(w) = e.worker.take() {
                w.shutdown();
                e.state = ModelState::Stopped;
            }
        }
    }
}
