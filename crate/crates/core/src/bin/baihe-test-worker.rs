//! Fixture worker for exercising the engine's side of the model protocol.
//! Each mode answers (or misbehaves) in one specific way.

use std::collections::HashMap;
use std::io::{self, BufRead, Write};
use std::path::PathBuf;
use std::time::Duration;

use clap::{Parser, ValueEnum};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde_json::{json, Value};

use baihe::ipc::{Hello, Request, Response, Task, MAX_FRAME_BYTES, PROTOCOL_VERSION};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    /// Answer every request with `--value`.
    Constant,
    /// Answer from a table of `{"key": payload, "result": result}` lines.
    Lookup,
    /// Sleep `--sleep-ms` before answering with `--value`.
    Sleep,
    /// Exit without answering once `--after` requests have been served.
    Crash,
    /// Exit before the handshake.
    ExitImmediately,
    /// Never send a handshake.
    Silent,
    /// Handshake with an unsupported protocol version.
    BadHello,
    /// Answer with lines that are not JSON.
    Garbage,
    /// Answer with an id that was never sent.
    WrongId,
    /// Answer with a line longer than the frame limit.
    Oversize,
    /// Answer with the first half of a valid response.
    Truncated,
    /// Answer with values outside their valid range.
    OutOfRange,
    /// Answer `ok: false`.
    ModelError,
    /// Pick one of the behaviours above at random for every request.
    Fuzz,
}

#[derive(Debug, Parser)]
struct Args {
    #[arg(long, value_enum)]
    mode: Mode,
    /// Tasks announced in the handshake; defaults to all four.
    #[arg(long, value_delimiter = ',')]
    tasks: Vec<String>,
    #[arg(long, default_value_t = 0.5)]
    value: f64,
    #[arg(long)]
    table: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    sleep_ms: u64,
    #[arg(long, default_value_t = 0)]
    after: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn send(out: &mut impl Write, line: &str) {
    // A closed pipe means the engine is gone; nothing left to do.
    if out.write_all(line.as_bytes()).and_then(|_| out.write_all(b"\n")).and_then(|_| out.flush()).is_err() {
        std::process::exit(0);
    }
}

fn constant(task: Task, v: f64) -> Value {
    match task {
        Task::Cardest => json!({ "selectivity": v }),
        Task::Cost => json!({ "cost": v }),
        Task::Runtime => json!({ "latency_ms": v }),
        Task::Steer => json!({ "choice": v as u64 }),
    }
}

fn out_of_range(task: Task) -> Value {
    match task {
        Task::Cardest => json!({ "selectivity": 1.5 }),
        Task::Cost => json!({ "cost": -1.0 }),
        Task::Runtime => json!({ "latency_ms": -3.0 }),
        Task::Steer => json!({ "choice": 999 }),
    }
}

fn ok(id: u64, result: Value) -> String {
    serde_json::to_string(&Response {
        id,
        ok: true,
        result: Some(result),
        error: None,
    })
    .expect("response serializes")
}

fn load_table(path: &PathBuf) -> HashMap<String, Value> {
    let file = std::fs::File::open(path).unwrap_or_else(|e| {
        eprintln!("cannot open {}: {e}", path.display());
        std::process::exit(4);
    });
    io::BufReader::new(file)
        .lines()
        .map_while(Result::ok)
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let v: Value = serde_json::from_str(&l).expect("table line is JSON");
            (v["key"].to_string(), v["result"].clone())
        })
        .collect()
}

/// Steering answers are keyed by the query alone; other tasks by the whole
/// payload.
fn lookup_key(task: Task, payload: &Value) -> String {
    match task {
        Task::Steer => payload["query"].to_string(),
        _ => payload.to_string(),
    }
}

fn main() {
    let args = Args::parse();
    let stdout = io::stdout();
    let mut out = stdout.lock();

    match args.mode {
        Mode::ExitImmediately => std::process::exit(3),
        Mode::Silent => {
            // Hold stdin open until the engine gives up on us.
            for _ in io::stdin().lock().lines() {}
            return;
        }
        _ => {}
    }

    let tasks: Vec<Task> = if args.tasks.is_empty() {
        vec![Task::Cardest, Task::Cost, Task::Runtime, Task::Steer]
    } else {
        args.tasks.iter().filter_map(|t| Task::parse(t)).collect()
    };
    let hello = Hello {
        hello: "baihe-test-worker".into(),
        protocol_version: if args.mode == Mode::BadHello { PROTOCOL_VERSION + 1 } else { PROTOCOL_VERSION },
        tasks,
    };
    send(&mut out, &serde_json::to_string(&hello).expect("hello serializes"));

    let table = match args.mode {
        Mode::Lookup => load_table(args.table.as_ref().expect("--table is required for lookup")),
        _ => HashMap::new(),
    };
    let mut rng = StdRng::seed_from_u64(args.seed);
    let mut served = 0u64;

    for line in io::stdin().lock().lines() {
        let Ok(line) = line else { break };
        let msg: Value = match serde_json::from_str(&line) {
            Ok(v) => v,
            Err(_) => continue,
        };
        if msg.get("shutdown").is_some() {
            return;
        }
        let Ok(req) = serde_json::from_value::<Request>(msg) else {
            continue;
        };
        let id = req.id;
        let mode = if args.mode == Mode::Fuzz {
            const CHOICES: [Mode; 8] = [
                Mode::Constant,
                Mode::Garbage,
                Mode::WrongId,
                Mode::Oversize,
                Mode::Truncated,
                Mode::OutOfRange,
                Mode::ModelError,
                Mode::Sleep,
            ];
            CHOICES[rng.gen_range(0..CHOICES.len())]
        } else {
            args.mode
        };
        match mode {
            Mode::Constant => send(&mut out, &ok(id, constant(req.task, args.value))),
            Mode::Lookup => match table.get(&lookup_key(req.task, &req.payload)) {
                Some(r) => send(&mut out, &ok(id, r.clone())),
                None => {
                    let resp = Response {
                        id,
                        ok: false,
                        result: None,
                        error: Some("no entry for payload".into()),
                    };
                    send(&mut out, &serde_json::to_string(&resp).expect("response serializes"));
                }
            },
            Mode::Sleep => {
                // Fuzzing sleeps just past the request's own deadline.
                let ms = if args.mode == Mode::Fuzz { req.deadline_ms + 20 } else { args.sleep_ms };
                std::thread::sleep(Duration::from_millis(ms));
                send(&mut out, &ok(id, constant(req.task, args.value)));
            }
            Mode::Crash => {
                if served >= args.after {
                    std::process::exit(3);
                }
                send(&mut out, &ok(id, constant(req.task, args.value)));
            }
            Mode::Garbage => send(&mut out, "this is not json {"),
            Mode::WrongId => send(&mut out, &ok(id + 1000, constant(req.task, args.value))),
            Mode::Oversize => {
                let pad = "x".repeat(MAX_FRAME_BYTES + 16);
                send(&mut out, &format!("{{\"id\":{id},\"ok\":true,\"pad\":\"{pad}\"}}"));
            }
            Mode::Truncated => {
                let full = ok(id, constant(req.task, args.value));
                send(&mut out, &full[..full.len() / 2]);
            }
            Mode::OutOfRange => send(&mut out, &ok(id, out_of_range(req.task))),
            Mode::ModelError => {
                let resp = Response {
                    id,
                    ok: false,
                    result: None,
                    error: Some("model failure".into()),
                };
                send(&mut out, &serde_json::to_string(&resp).expect("response serializes"));
            }
            Mode::ExitImmediately | Mode::Silent | Mode::BadHello | Mode::Fuzz => unreachable!(),
        }
        served += 1;
    }
}
