//! TCP worker: executes tasks pushed by a coordinator.

use std::io::BufReader;
use std::net::TcpStream;
use std::path::Path;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::mpsc::{self, Receiver};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use log::{debug, info, warn};

use crate::error::{Error, Result};
use crate::farm::exec::execute_task;
use crate::farm::protocol::{recv, send, Message};
use crate::farm::task::Task;

#[derive(Clone, Debug)]
pub struct WorkerConfig {
    pub worker_id: String,
    /// Tasks executed concurrently.
    pub slots: usize,
    pub heartbeat_interval: Duration,
    /// Connection attempts before giving up, counted per (re)connect.
    pub connect_attempts: u32,
    /// Delay after the first failed attempt; doubles on each further failure.
    pub initial_backoff: Duration,
}

impl WorkerConfig {
    pub fn new(slots: usize) -> Self {
        WorkerConfig {
            worker_id: default_worker_id(),
            slots,
            heartbeat_interval: Duration::from_secs(2),
            connect_attempts: 5,
            initial_backoff: Duration::from_millis(200),
        }
    }
}

fn default_worker_id() -> String {
    let host = std::fs::read_to_string("/proc/sys/kernel/hostname")
        .ok()
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .or_else(|| std::env::var("HOSTNAME").ok())
        .unwrap_or_else(|| "worker".into());
    format!("{host}-{}", std::process::id())
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WorkerReport {
    pub tasks_executed: usize,
}

fn connect(addr: &str, config: &WorkerConfig) -> Result<TcpStream> {
    let mut delay = config.initial_backoff;
    let attempts = config.connect_attempts.max(1);
    for attempt in 1..=attempts {
        match TcpStream::connect(addr) {
            Ok(stream) => return Ok(stream),
            Err(e) => {
                debug!("connect attempt {attempt}/{attempts} to {addr} failed: {e}");
                if attempt < attempts {
                    thread::sleep(delay);
                    delay *= 2;
                }
            }
        }
    }
    Err(Error::ConnectFailure {
        addr: addr.to_string(),
        attempts,
    })
}

type Link = Arc<Mutex<Option<TcpStream>>>;

fn send_on(link: &Link, msg: &Message) -> bool {
    match link.lock().unwrap().as_mut() {
        Some(stream) => send(stream, msg).is_ok(),
        None => false,
    }
}

fn executor(
    jobs: Arc<Mutex<Receiver<Task>>>,
    link: Link,
    closing: Arc<AtomicBool>,
    executed: Arc<AtomicUsize>,
) {
    loop {
        let job = jobs.lock().unwrap().recv();
        let Ok(task) = job else { return };
        if closing.load(Ordering::SeqCst) {
            continue;
        }
        let outcome = execute_task(&task, Path::new(""));
        executed.fetch_add(1, Ordering::SeqCst);
        let (ok, message) = match outcome.result {
            Ok(()) => (true, String::new()),
            Err(m) => (false, m),
        };
        let msg = Message::Result {
            id: task.id.clone(),
            cpu_seconds: outcome.cpu_seconds,
            ok,
            message,
        };
        if !send_on(&link, &msg) {
            // The coordinator requeues tasks of a lost connection, so the
            // result is simply dropped.
            debug!("result for {} not delivered", task.id);
        }
    }
}

/// Connects to the coordinator at `addr` and executes tasks until it sends
/// `DONE`. A lost connection is retried with exponential backoff; running out
/// of attempts returns [`Error::ConnectFailure`].
pub fn run_worker(addr: &str, config: &WorkerConfig) -> Result<WorkerReport> {
    if config.slots == 0 {
        return Err(Error::InvalidParams(
            "worker needs at least one slot".into(),
        ));
    }
    let (job_tx, job_rx) = mpsc::channel::<Task>();
    let jobs = Arc::new(Mutex::new(job_rx));
    let link: Link = Arc::new(Mutex::new(None));
    let closing = Arc::new(AtomicBool::new(false));
    let executed = Arc::new(AtomicUsize::new(0));
    let pool: Vec<_> = (0..config.slots)
        .map(|_| {
            let (jobs, link, closing, executed) = (
                Arc::clone(&jobs),
                Arc::clone(&link),
                Arc::clone(&closing),
                Arc::clone(&executed),
            );
            thread::spawn(move || executor(jobs, link, closing, executed))
        })
        .collect();

    let outcome = serve(addr, config, &job_tx, &link, &closing);
    closing.store(true, Ordering::SeqCst);
    drop(job_tx);
    *link.lock().unwrap() = None;
    for handle in pool {
        let _ = handle.join();
    }
    outcome.map(|()| WorkerReport {
        tasks_executed: executed.load(Ordering::SeqCst),
    })
}

fn serve(
    addr: &str,
    config: &WorkerConfig,
    jobs: &mpsc::Sender<Task>,
    link: &Link,
    closing: &Arc<AtomicBool>,
) -> Result<()> {
    loop {
        let stream = connect(addr, config)?;
        let _ = stream.set_nodelay(true);
        let reader = stream.try_clone().map_err(|e| Error::io(addr, e))?;
        *link.lock().unwrap() = Some(stream);
        let hello = Message::Hello {
            worker_id: config.worker_id.clone(),
            slots: config.slots,
        };
        if !send_on(link, &hello) {
            warn!("could not greet coordinator at {addr}; reconnecting");
            continue;
        }
        info!("worker {} connected to {addr}", config.worker_id);

        let alive = Arc::new(AtomicBool::new(true));
        {
            let (alive, link, interval) = (
                Arc::clone(&alive),
                Arc::clone(link),
                config.heartbeat_interval,
            );
            let beat = Message::Heartbeat {
                worker_id: config.worker_id.clone(),
            };
            thread::spawn(move || loop {
                thread::sleep(interval);
                if !alive.load(Ordering::SeqCst) || !send_on(&link, &beat) {
                    return;
                }
            });
        }

        let mut reader = BufReader::new(reader);
        let finished = loop {
            match recv(&mut reader) {
                Ok(Some(Message::Task { task })) => {
                    if jobs.send(task).is_err() {
                        break false;
                    }
                }
                Ok(Some(Message::Done {})) => break true,
                Ok(Some(other)) => warn!("ignoring unexpected message {other:?}"),
                Ok(None) => break false,
                Err(e) => {
                    warn!("connection error: {e}");
                    break false;
                }
            }
        };
        alive.store(false, Ordering::SeqCst);
        if finished {
            closing.store(true, Ordering::SeqCst);
            info!("coordinator reports all tasks finished");
            return Ok(());
        }
        *link.lock().unwrap() = None;
        warn!("lost connection to {addr}; reconnecting");
    }
}
