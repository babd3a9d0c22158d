//! Statement dispatch: parsing, planning with routed models, execution,
//! capture and control commands.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::catalog::{Catalog, CatalogError, ColumnDef};
use crate::collect::{Capture, CollectError, Collectors};
use crate::config::EngineConfig;
use crate::exec::{execute, render_plan, ExecError, QueryOutput};
use crate::ipc::{ModelHooks, Registry, RegistryError};
use crate::planner::{HookProvider, PlanError, PlanNode, Planner};
use crate::session::SessionState;
use crate::sql::{
    bind, parse, BindError, CallArg, ControlCommand, ControlVerb, DdlStatement, ParseError, QueryAst,
    QueryClass, SelectQuery, Statement,
};
use crate::value::Value;

const ANALYZED_MARKER: &str = "analyzed.json";

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Bind(#[from] BindError),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Exec(#[from] ExecError),
    #[error(transparent)]
    Catalog(#[from] CatalogError),
    #[error(transparent)]
    Collect(#[from] CollectError),
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error("{0}")]
    Session(String),
    #[error("{0}: {1}")]
    Io(PathBuf, std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub enum StatementResult {
    Rows(QueryOutput),
    /// EXPLAIN text, one line per plan node plus optional annotations.
    Explain(String),
    Inserted(usize),
    Message(String),
}

/// An engine instance: catalog, collectors and model workers shared by the
/// sessions that run statements against it, one statement at a time.
pub struct Engine {
    config: EngineConfig,
    catalog: Catalog,
    collectors: Collectors,
    models: Registry,
}

impl Engine {
    /// Open (creating if needed) the data directory and load saved tables.
    pub fn open(config: EngineConfig) -> Result<Engine, EngineError> {
        let dir = &config.data_dir;
        for sub in ["tables", "datasets", "logs", "models"] {
            let p = dir.join(sub);
            fs::create_dir_all(&p).map_err(|e| EngineError::Io(p.clone(), e))?;
        }
        let mut catalog = Catalog::new();
        let tables_dir = dir.join("tables");
        let mut entries: Vec<PathBuf> = fs::read_dir(&tables_dir)
            .map_err(|e| EngineError::Io(tables_dir.clone(), e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
            .collect();
        entries.sort();
        for p in entries {
            catalog.load_snapshot(&p)?;
        }
        let analyzed: Vec<String> = fs::read_to_string(tables_dir.join(ANALYZED_MARKER))
            .ok()
            .and_then(|t| serde_json::from_str(&t).ok())
            .unwrap_or_default();
        for t in analyzed {
            if catalog.contains(&t) {
                catalog.analyze(&t, config.histogram_buckets, config.mcv_limit)?;
            }
        }
        let collectors = Collectors::new(dir, config.collector_buffer_cap)?;
        let models = Registry::new(dir, config.startup_timeout_ms);
        Ok(Engine {
            config,
            catalog,
            collectors,
            models,
        })
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn data_dir(&self) -> &Path {
        &self.config.data_dir
    }

    pub fn catalog(&self) -> &Catalog {
        &self.catalog
    }

    pub fn catalog_mut(&mut self) -> &mut Catalog {
        &mut self.catalog
    }

    pub fn collectors(&self) -> &Collectors {
        &self.collectors
    }

    pub fn models(&self) -> &Registry {
        &self.models
    }

    pub fn models_mut(&mut self) -> &mut Registry {
        &mut self.models
    }

    pub fn new_session(&self) -> SessionState {
        SessionState::with_timeout(self.config.worker_timeout_ms)
    }

    /// Write every table to the data directory.
    pub fn save(&self) -> Result<(), EngineError> {
        let dir = self.config.data_dir.join("tables");
        let mut analyzed = Vec::new();
        for name in self.catalog.table_names() {
            self.catalog.save_snapshot(name, &dir)?;
            if self.catalog.table(name)?.stats().is_some() {
                analyzed.push(name.to_string());
            }
        }
        let marker = dir.join(ANALYZED_MARKER);
        fs::write(&marker, serde_json::to_string(&analyzed).expect("names serialize"))
            .map_err(|e| EngineError::Io(marker, e))
    }

    /// Save tables and stop all workers.
    pub fn close(mut self) -> Result<(), EngineError> {
        self.models.shutdown_all();
        self.save()
    }

    /// Parse and run one statement.
    pub fn execute(&mut self, session: &mut SessionState, text: &str) -> Result<StatementResult, EngineError> {
        let stmt = parse(text)?;
        let result = match stmt {
            Statement::Query(ast) => self.run_query(session, &ast, text.trim()),
            Statement::Control(cmd) => self.run_control(session, &cmd),
            Statement::Ddl(ddl) => self.run_ddl(&ddl),
        };
        if let Err(e) = self.models.sync_stats(&mut self.catalog) {
            tracing::warn!(error = %e, "could not update model stats tables");
        }
        result
    }

    /// Plan a SELECT the way `execute` would, without running it.
    pub fn plan(&mut self, session: &mut SessionState, text: &str) -> Result<PlanNode, EngineError> {
        let Statement::Query(ast) = parse(text)? else {
            return Err(EngineError::Session("not a query".into()));
        };
        let bound = bind(&ast, &self.catalog)?;
        let q = bound
            .select()
            .ok_or_else(|| EngineError::Session("not a SELECT".into()))?;
        let plan = self.plan_select(session, q)?.0;
        let _ = self.models.sync_stats(&mut self.catalog);
        Ok(plan)
    }

    fn plan_select(
        &mut self,
        session: &mut SessionState,
        q: &SelectQuery,
    ) -> Result<(PlanNode, Option<f64>), EngineError> {
        let tables = q.from.iter().cloned().collect();
        let mut hooks = ModelHooks::route(&mut self.models, session, &tables);
        let planner = Planner::new(&self.catalog, &self.config.planner);
        let plan = if hooks.steering() {
            planner.steer(q, session, &mut hooks)?
        } else {
            planner.plan(q, session, &mut hooks)?
        };
        let latency = if hooks.predicts_runtime() {
            planner.predict_runtime(&plan, session, &mut hooks as &mut dyn HookProvider)
        } else {
            None
        };
        Ok((plan, latency))
    }

    fn run_query(
        &mut self,
        session: &mut SessionState,
        ast: &QueryAst,
        text: &str,
    ) -> Result<StatementResult, EngineError> {
        let bound = bind(ast, &self.catalog)?;
        let class = bound.query_class();
        let tables = bound.tables();
        match &bound {
            QueryAst::Insert(ins) => {
                let def = self.catalog.table(&ins.table)?.def().clone();
                let rows = ins
                    .rows
                    .iter()
                    .map(|r| arrange_row(&def.columns, ins.columns.as_deref(), r, &ins.table))
                    .collect::<Result<Vec<_>, _>>()?;
                let n = self.catalog.append_rows(&ins.table, rows)?;
                self.collectors.capture(&Capture {
                    class,
                    tables: &tables,
                    query_text: text,
                    plan: None,
                    runtimes: None,
                });
                Ok(StatementResult::Inserted(n))
            }
            QueryAst::Select(q) | QueryAst::Explain { query: q, .. } => {
                let (plan, latency) = self.plan_select(session, q)?;
                let (result, runtimes) = match class {
                    QueryClass::Explain => {
                        let mut text = render_plan(&plan, None);
                        if let Some(ms) = latency {
                            let _ = writeln!(text, "Predicted latency: {ms:.3} ms");
                        }
                        (StatementResult::Explain(text), None)
                    }
                    _ => {
                        let (output, report) = execute(&self.catalog, &plan, q, text)?;
                        let result = if class == QueryClass::ExplainAnalyze {
                            let mut text = render_plan(&plan, Some(&report.nodes));
                            if let Some(ms) = latency {
                                let _ = writeln!(text, "Predicted latency: {ms:.3} ms");
                            }
                            let _ = writeln!(text, "Execution time: {:.3} ms", report.total_time_ns as f64 / 1e6);
                            StatementResult::Explain(text)
                        } else {
                            StatementResult::Rows(output)
                        };
                        (result, Some((report.nodes, report.total_time_ns)))
                    }
                };
                self.collectors.capture(&Capture {
                    class,
                    tables: &tables,
                    query_text: text,
                    plan: Some(&plan),
                    runtimes: runtimes.as_ref().map(|(n, t)| (n.as_slice(), *t)),
                });
                Ok(result)
            }
        }
    }

    fn run_ddl(&mut self, ddl: &DdlStatement) -> Result<StatementResult, EngineError> {
        match ddl {
            DdlStatement::CreateTable {
                name,
                columns,
                primary_key,
            } => {
                let cols = columns.iter().map(|(n, k)| ColumnDef::new(n, *k)).collect();
                self.catalog.create_table_with_key(name, cols, primary_key.as_deref())?;
                Ok(StatementResult::Message(format!("CREATE TABLE {name}")))
            }
            DdlStatement::Copy { table, path, header } => {
                let n = self.catalog.load_csv(table, Path::new(path), *header)?;
                Ok(StatementResult::Message(format!("COPY {n}")))
            }
            DdlStatement::Analyze { table } => {
                self.catalog
                    .analyze(table, self.config.histogram_buckets, self.config.mcv_limit)?;
                Ok(StatementResult::Message(format!("ANALYZE {table}")))
            }
        }
    }

    fn run_control(&mut self, session: &mut SessionState, cmd: &ControlCommand) -> Result<StatementResult, EngineError> {
        let a = &cmd.args;
        let msg = |s: String| Ok(StatementResult::Message(s));
        match cmd.verb {
            ControlVerb::DefineDataCollector => {
                let features = a.get(3).map(list);
                let def = self
                    .collectors
                    .define(&text(&a[0]), &list(&a[1]), &list(&a[2]), features.as_deref())?;
                msg(format!("collector {} defined", def.name))
            }
            ControlVerb::StartDataCollector => {
                let name = text(&a[0]);
                let dataset = text(&a[1]);
                let v = self.collectors.start(&name, &dataset, &text(&a[2]), &mut self.catalog)?;
                msg(format!("collector {name} started: dataset {dataset} version {v}"))
            }
            ControlVerb::StopDataCollector => {
                let dataset = text(&a[0]);
                let n = self.collectors.stop(&dataset, &mut self.catalog)?;
                msg(format!("dataset {dataset}: {n} records written"))
            }
            ControlVerb::RegisterModel => {
                let dir = a.get(4).map(|d| PathBuf::from(text(d)));
                let e = self.models.register(
                    &text(&a[0]),
                    &text(&a[1]),
                    &list(&a[2]),
                    &text(&a[3]),
                    dir.as_deref(),
                    &mut self.catalog,
                )?;
                msg(format!("model {} registered for {}", e.name, e.task))
            }
            ControlVerb::StartModel => {
                let e = self.models.start(&text(&a[0]))?;
                let pid = e.worker().map(|w| w.pid()).unwrap_or_default();
                msg(format!("model {} running (pid {pid})", e.name))
            }
            ControlVerb::ResetModel => {
                let name = text(&a[0]);
                self.models.reset(&name)?;
                msg(format!("model {name} stopped"))
            }
            ControlVerb::Set => {
                let var = text(&a[0]);
                session.set(&var, &text(&a[1])).map_err(EngineError::Session)?;
                msg("SET".into())
            }
            ControlVerb::Show => self.show(session, &text(&a[0])),
        }
    }

    fn show(&mut self, session: &SessionState, what: &str) -> Result<StatementResult, EngineError> {
        let out = |columns: &[&str], rows: Vec<Vec<Value>>| {
            Ok(StatementResult::Rows(QueryOutput {
                columns: columns.iter().map(|c| c.to_string()).collect(),
                rows,
            }))
        };
        let t = |s: &str| Value::Text(s.to_string());
        match what.to_ascii_lowercase().as_str() {
            "all" => out(
                &["name", "setting"],
                session.variables().into_iter().map(|(k, v)| vec![t(&k), t(&v)]).collect(),
            ),
            "tables" => {
                let mut rows = Vec::new();
                for name in self.catalog.table_names() {
                    let table = self.catalog.table(name)?;
                    rows.push(vec![
                        t(name),
                        Value::Int(table.def().row_count as i64),
                        t(if table.stats().is_some() { "yes" } else { "no" }),
                    ]);
                }
                out(&["table", "rows", "analyzed"], rows)
            }
            "models" => {
                self.models.reap();
                let rows = self
                    .models
                    .iter()
                    .map(|e| {
                        let scope: Vec<&str> = e.table_scope.iter().map(String::as_str).collect();
                        vec![
                            t(&e.name),
                            t(e.task.as_str()),
                            t(&e.state.to_string()),
                            t(&scope.join(",")),
                            Value::Int(e.stats.request_count as i64),
                            Value::Int(e.stats.fallback_count as i64),
                        ]
                    })
                    .collect();
                out(&["model", "task", "state", "scope", "requests", "fallbacks"], rows)
            }
            "collectors" => {
                let rows = self
                    .collectors
                    .iter()
                    .map(|c| {
                        vec![
                            t(&c.def.name),
                            t(&c.status.to_string()),
                            c.dataset_id.as_deref().map_or(Value::Null, t),
                            Value::Int(c.version as i64),
                            Value::Int(c.captured() as i64),
                        ]
                    })
                    .collect();
                out(&["collector", "status", "dataset", "version", "captured"], rows)
            }
            "fallbacks" => {
                let f = session.fallbacks;
                out(
                    &["hook", "fallbacks"],
                    [("cardest", f.cardest), ("cost", f.cost), ("steer", f.steer), ("runtime", f.runtime)]
                        .into_iter()
                        .map(|(k, v)| vec![t(k), Value::Int(v as i64)])
                        .collect(),
                )
            }
            var => match session.get(var) {
                Some(v) => out(&[var], vec![vec![t(&v)]]),
                None => Err(EngineError::Session(format!("unknown setting \"{var}\""))),
            },
        }
    }
}

impl Drop for Engine {
    fn drop(&mut self) {
        self.models.shutdown_all();
    }
}

fn text(arg: &CallArg) -> String {
    match arg {
        CallArg::Str(s) => s.clone(),
        CallArg::Set(items) => items.join(","),
    }
}

fn list(arg: &CallArg) -> Vec<String> {
    match arg {
        CallArg::Str(s) => s.split(',').map(|x| x.trim().to_string()).filter(|x| !x.is_empty()).collect(),
        CallArg::Set(items) => items.clone(),
    }
}

/// Place INSERT values into table column order, filling unnamed columns with
/// NULL.
fn arrange_row(
    columns: &[ColumnDef],
    named: Option<&[String]>,
    values: &[Value],
    table: &str,
) -> Result<Vec<Value>, CatalogError> {
    let Some(named) = named else {
        return Ok(values.to_vec());
    };
    if named.len() != values.len() {
        return Err(CatalogError::Arity {
            table: table.into(),
            expected: named.len(),
            got: values.len(),
        });
    }
    let mut seen = BTreeSet::new();
    let mut row = vec![Value::Null; columns.len()];
    for (name, v) in named.iter().zip(values) {
        let idx = columns
            .iter()
            .position(|c| &c.name == name)
            .ok_or_else(|| CatalogError::UnknownColumn {
                table: table.into(),
                column: name.clone(),
            })?;
        if !seen.insert(idx) {
            return Err(CatalogError::InvalidSchema(format!("column \"{name}\" listed twice")));
        }
        row[idx] = v.clone();
    }
    Ok(row)
}
