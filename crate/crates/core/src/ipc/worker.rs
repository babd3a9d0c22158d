//! One model worker process and its request channel.
//!
//! A reader thread turns the worker's stdout into frames. At most one request
//! is outstanding: a request that times out stays outstanding until its
//! response arrives (and is discarded), and until then further requests are
//! refused without touching the worker.

use std::collections::VecDeque;
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, TryRecvError};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use thiserror::Error;

use super::manifest::Manifest;
use super::protocol::{
    Hello, Request, Response, Shutdown, Task, MAX_FRAME_BYTES, PROTOCOL_VERSION,
};

const TRACE_LIMIT: usize = 1 << 16;
pub const SHUTDOWN_GRACE: Duration = Duration::from_millis(500);

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TransportError {
    #[error("no response within {0} ms")]
    Timeout(u64),
    #[error("worker is gone: {0}")]
    Crashed(String),
    #[error("protocol violation: {0}")]
    Protocol(String),
    #[error("an earlier request is still outstanding")]
    Busy,
    #[error("model error: {0}")]
    Model(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StartError {
    #[error("cannot spawn {0}")]
    Spawn(String),
    #[error("no handshake within {0} ms")]
    HandshakeTimeout(u64),
    #[error("bad handshake: {0}")]
    Handshake(String),
}

/// Observable channel events, kept for auditing the one-in-flight rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceEvent {
    Sent(u64),
    Received(u64),
    /// A response that arrived after its request was given up on.
    Discarded(u64),
    /// Request given up on at its deadline.
    Abandoned(u64),
    /// An unparseable or oversize frame.
    Garbled,
}

enum Event {
    Frame(Vec<u8>),
    Oversize,
    Closed(String),
}

fn reader_loop(stdout: impl Read, tx: mpsc::Sender<Event>, alive: Arc<AtomicBool>) {
    let mut reader = BufReader::with_capacity(64 * 1024, stdout);
    let mut line = Vec::new();
    let mut oversize = false;
    let reason = loop {
        let chunk = match reader.fill_buf() {
            Ok([]) => break "end of stream".to_string(),
            Ok(c) => c,
            Err(e) if e.kind() == std::io::ErrorKind::Interrupted => continue,
            Err(e) => break e.to_string(),
        };
        let (taken, complete) = match chunk.iter().position(|b| *b == b'\n') {
            Some(i) => (i + 1, true),
            None => (chunk.len(), false),
        };
        if !oversize {
            let body = if complete { &chunk[..taken - 1] } else { chunk };
            if line.len() + body.len() > MAX_FRAME_BYTES {
                oversize = true;
                line.clear();
            } else {
                line.extend_from_slice(body);
            }
        }
        reader.consume(taken);
        if complete {
            let event = if oversize {
                Event::Oversize
            } else {
                Event::Frame(std::mem::take(&mut line))
            };
            oversize = false;
            if tx.send(event).is_err() {
                return;
            }
        }
    };
    alive.store(false, Ordering::SeqCst);
    let _ = tx.send(Event::Closed(reason));
}

#[derive(Debug)]
pub struct Worker {
    child: Child,
    stdin: Option<ChildStdin>,
    events: Receiver<Event>,
    alive: Arc<AtomicBool>,
    hello: Hello,
    next_id: u64,
    /// Request whose deadline passed but whose response has not arrived.
    abandoned: Option<u64>,
    trace: VecDeque<TraceEvent>,
    last_heartbeat: Instant,
}

impl std::fmt::Debug for Event {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Event::Frame(b) => write!(f, "Frame({} bytes)", b.len()),
            Event::Oversize => f.write_str("Oversize"),
            Event::Closed(r) => write!(f, "Closed({r})"),
        }
    }
}

impl Worker {
    /// Launch the manifest's entry in `model_dir` and wait for its handshake.
    pub fn spawn(
        manifest: &Manifest,
        model_dir: &Path,
        stderr_log: &Path,
        startup_timeout: Duration,
    ) -> Result<Worker, StartError> {
        let entry = manifest.entry_path(model_dir);
        let log = File::options()
            .create(true)
            .append(true)
            .open(stderr_log)
            .map_err(|e| StartError::Spawn(format!("{}: {e}", stderr_log.display())))?;
        let mut child = Command::new(&entry)
            .args(&manifest.args)
            .current_dir(model_dir)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::from(log))
            .spawn()
            .map_err(|e| StartError::Spawn(format!("{}: {e}", entry.display())))?;
        let stdout = child.stdout.take().expect("stdout is piped");
        let stdin = child.stdin.take();
        let alive = Arc::new(AtomicBool::new(true));
        let (tx, rx) = mpsc::channel();
        let flag = Arc::clone(&alive);
        thread::Builder::new()
            .name(format!("worker-{}", manifest.name))
            .spawn(move || reader_loop(stdout, tx, flag))
            .map_err(|e| StartError::Spawn(e.to_string()))?;

        let fail = |mut child: Child, err: StartError| {
            let _ = child.kill();
            let _ = child.wait();
            Err(err)
        };
        let hello = match rx.recv_timeout(startup_timeout) {
            Ok(Event::Frame(bytes)) => match serde_json::from_slice::<Hello>(&bytes) {
                Ok(h) => h,
                Err(e) => return fail(child, StartError::Handshake(e.to_string())),
            },
            Ok(Event::Oversize) => {
                return fail(child, StartError::Handshake("oversize frame".into()))
            }
            Ok(Event::Closed(_)) | Err(RecvTimeoutError::Disconnected) => {
                let _ = child.kill();
                let status = child.wait().map(|s| s.to_string()).unwrap_or_default();
                return Err(StartError::Spawn(format!(
                    "worker exited before handshake ({status})"
                )));
            }
            Err(RecvTimeoutError::Timeout) => {
                return fail(
                    child,
                    StartError::HandshakeTimeout(startup_timeout.as_millis() as u64),
                )
            }
        };
        if hello.protocol_version != PROTOCOL_VERSION {
            return fail(
                child,
                StartError::Handshake(format!("protocol_version {}", hello.protocol_version)),
            );
        }
        if !hello.tasks.contains(&manifest.task) {
            return fail(
                child,
                StartError::Handshake(format!("worker does not serve {}", manifest.task)),
            );
        }
        Ok(Worker {
            child,
            stdin,
            events: rx,
            alive,
            hello,
            next_id: 1,
            abandoned: None,
            trace: VecDeque::new(),
            last_heartbeat: Instant::now(),
        })
    }

    pub fn pid(&self) -> u32 {
        self.child.id()
    }

    pub fn hello(&self) -> &Hello {
        &self.hello
    }

    /// False once the worker's output stream has closed.
    pub fn is_alive(&self) -> bool {
        self.alive.load(Ordering::SeqCst)
    }

    pub fn last_heartbeat(&self) -> Instant {
        self.last_heartbeat
    }

    pub fn trace(&self) -> impl Iterator<Item = &TraceEvent> {
        self.trace.iter()
    }

    fn log(&mut self, e: TraceEvent) {
        if self.trace.len() == TRACE_LIMIT {
            self.trace.pop_front();
        }
        self.trace.push_back(e);
    }

    /// Consume frames that arrived while no request was waiting.
    fn drain(&mut self) {
        loop {
            match self.events.try_recv() {
                Ok(Event::Frame(bytes)) => {
                    self.last_heartbeat = Instant::now();
                    match serde_json::from_slice::<Response>(&bytes) {
                        Ok(r) => {
                            if self.abandoned == Some(r.id) {
                                self.abandoned = None;
                            }
                            self.log(TraceEvent::Discarded(r.id));
                        }
                        Err(_) => self.log(TraceEvent::Garbled),
                    }
                }
                Ok(Event::Oversize) => self.log(TraceEvent::Garbled),
                Ok(Event::Closed(_)) | Err(TryRecvError::Disconnected) => {
                    self.alive.store(false, Ordering::SeqCst);
                    return;
                }
                Err(TryRecvError::Empty) => return,
            }
        }
    }

    /// Send one request and wait up to `deadline_ms` for its result.
    pub fn infer(
        &mut self,
        task: Task,
        payload: serde_json::Value,
        deadline_ms: u64,
    ) -> Result<serde_json::Value, TransportError> {
        self.drain();
        if !self.is_alive() {
            return Err(TransportError::Crashed("output stream closed".into()));
        }
        if self.abandoned.is_some() {
            return Err(TransportError::Busy);
        }
        let id = self.next_id;
        self.next_id += 1;
        let request = Request {
            id,
            task,
            deadline_ms,
            payload,
        };
        let mut line = serde_json::to_vec(&request).expect("requests serialize");
        line.push(b'\n');
        let start = Instant::now();
        let deadline = Duration::from_millis(deadline_ms);
        let write = match self.stdin.as_mut() {
            Some(w) => w.write_all(&line).and_then(|_| w.flush()),
            None => Err(std::io::Error::other("stdin closed")),
        };
        if let Err(e) = write {
            self.alive.store(false, Ordering::SeqCst);
            return Err(TransportError::Crashed(e.to_string()));
        }
        self.log(TraceEvent::Sent(id));

        loop {
            let remaining = deadline.saturating_sub(start.elapsed());
            match self.events.recv_timeout(remaining) {
                Ok(Event::Frame(bytes)) => {
                    self.last_heartbeat = Instant::now();
                    let response = match serde_json::from_slice::<Response>(&bytes) {
                        Ok(r) => r,
                        Err(e) => {
                            self.log(TraceEvent::Garbled);
                            return Err(TransportError::Protocol(format!(
                                "unparseable frame: {e}"
                            )));
                        }
                    };
                    if response.id < id {
                        self.log(TraceEvent::Discarded(response.id));
                        continue;
                    }
                    if response.id != id {
                        self.log(TraceEvent::Garbled);
                        return Err(TransportError::Protocol(format!(
                            "response id {} does not match request {id}",
                            response.id
                        )));
                    }
                    self.log(TraceEvent::Received(id));
                    return match (response.ok, response.result, response.error) {
                        (true, Some(result), _) => Ok(result),
                        (true, None, _) => Err(TransportError::Protocol(
                            "ok response without result".into(),
                        )),
                        (false, _, err) => Err(TransportError::Model(err.unwrap_or_default())),
                    };
                }
                Ok(Event::Oversize) => {
                    self.log(TraceEvent::Garbled);
                    return Err(TransportError::Protocol(format!(
                        "frame exceeds {MAX_FRAME_BYTES} bytes"
                    )));
                }
                Ok(Event::Closed(reason)) => {
                    self.alive.store(false, Ordering::SeqCst);
                    return Err(TransportError::Crashed(reason));
                }
                Err(RecvTimeoutError::Disconnected) => {
                    self.alive.store(false, Ordering::SeqCst);
                    return Err(TransportError::Crashed("reader stopped".into()));
                }
                Err(RecvTimeoutError::Timeout) => {
                    self.abandoned = Some(id);
                    self.log(TraceEvent::Abandoned(id));
                    return Err(TransportError::Timeout(deadline_ms));
                }
            }
        }
    }

    /// Ask the worker to exit, then kill it if it is still running after the
    /// grace period.
    pub fn shutdown(mut self) {
        self.stop(SHUTDOWN_GRACE);
    }

    fn stop(&mut self, grace: Duration) {
        if let Some(mut w) = self.stdin.take() {
            let mut line = serde_json::to_vec(&Shutdown { shutdown: true }).expect("serializes");
            line.push(b'\n');
            let _ = w.write_all(&line).and_then(|_| w.flush());
        }
        let start = Instant::now();
        while start.elapsed() < grace {
            if let Ok(Some(_)) = self.child.try_wait() {
                return;
            }
            thread::sleep(Duration::from_millis(5));
        }
        let _ = self.child.kill();
        let _ = self.child.wait();
    }

    /// Kill the process without a shutdown message.
    pub fn kill(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

impl Drop for Worker {
    fn drop(&mut self) {
        if let Ok(None) = self.child.try_wait() {
            self.stop(Duration::from_millis(50));
        }
    }
}
