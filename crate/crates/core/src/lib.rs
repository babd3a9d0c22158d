//! Baihe: a miniature relational engine whose planner can delegate
//! cardinality, cost and plan-steering decisions to learned models running
//! in isolated worker processes.

pub mod catalog;
pub mod collect;
pub mod config;
pub mod engine;
pub mod exec;
pub mod ipc;
pub mod planner;
pub mod repl;
pub mod session;
pub mod sql;
pub mod value;
