//! TCP coordinator: hands tasks to connected workers and collects results.
//!
//! Delivery is at-least-once. A task held by a worker that disconnects or
//! stops heartbeating goes back to the front of the queue, and the first
//! result received for a task id is the one recorded; later copies are
//! counted and dropped. Scheduling state lives behind a single mutex.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::io::{BufReader, ErrorKind};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream};
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use log::{debug, info, warn};

use crate::error::{Error, Result};
use crate::farm::protocol::{recv, send, Message};
use crate::farm::stats::FarmStats;
use crate::farm::task::{Task, TaskManifest, TaskStatus};

#[derive(Clone, Debug)]
pub struct CoordinatorConfig {
    /// A worker silent for longer than this loses its tasks.
    pub heartbeat_timeout: Duration,
    /// How often the accept loop and the timeout check wake up.
    pub poll_interval: Duration,
}

impl Default for CoordinatorConfig {
    fn default() -> Self {
        CoordinatorConfig {
            heartbeat_timeout: Duration::from_secs(10),
            poll_interval: Duration::from_millis(50),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ServeReport {
    pub stats: FarmStats,
    /// Tasks taken back from a lost worker and queued again.
    pub reassignments: usize,
    /// Results received for tasks that already had one.
    pub duplicate_results: usize,
    pub protocol_violations: usize,
    /// Most tasks simultaneously held by each worker id.
    pub peak_in_flight: BTreeMap<String, usize>,
}

struct Conn {
    worker_id: String,
    slots: usize,
    in_flight: BTreeSet<usize>,
    last_seen: Instant,
    stream: TcpStream,
}

struct State {
    tasks: Vec<Task>,
    by_id: HashMap<String, usize>,
    base: PathBuf,
    pending: VecDeque<usize>,
    owner: HashMap<usize, u64>,
    conns: BTreeMap<u64, Conn>,
    remaining: usize,
    cpu_total: f64,
    done: usize,
    reassignments: usize,
    duplicates: usize,
    violations: usize,
    peak: BTreeMap<String, usize>,
    finished: bool,
    checkpoint: Option<PathBuf>,
}

impl State {
    /// Fills every connection's free slots from the queue.
    fn dispatch(&mut self) {
        loop {
            let mut broken = Vec::new();
            for (&id, conn) in self.conns.iter_mut() {
                while conn.in_flight.len() < conn.slots {
                    let Some(i) = self.pending.pop_front() else {
                        break;
                    };
                    let msg = Message::Task {
                        task: self.tasks[i].resolved(&self.base),
                    };
                    if let Err(e) = send(&mut conn.stream, &msg) {
                        debug!("send to {} failed: {e}", conn.worker_id);
                        self.pending.push_front(i);
                        broken.push(id);
                        break;
                    }
                    let task = &mut self.tasks[i];
                    task.status = TaskStatus::Running;
                    task.worker_id = conn.worker_id.clone();
                    self.owner.insert(i, id);
                    conn.in_flight.insert(i);
                    let peak = self.peak.entry(conn.worker_id.clone()).or_default();
                    *peak = (*peak).max(conn.in_flight.len());
                }
            }
            if broken.is_empty() {
                return;
            }
            for id in broken {
                self.forget(id);
            }
        }
    }

    /// Drops a connection and requeues whatever it held.
    fn forget(&mut self, conn_id: u64) {
        let Some(conn) = self.conns.remove(&conn_id) else {
            return;
        };
        let _ = conn.stream.shutdown(Shutdown::Both);
        for &i in conn.in_flight.iter().rev() {
            if self.tasks[i].status.is_terminal() {
                continue;
            }
            self.owner.remove(&i);
            let task = &mut self.tasks[i];
            task.status = TaskStatus::Pending;
            task.worker_id.clear();
            self.pending.push_front(i);
            self.reassignments += 1;
        }
        if !conn.in_flight.is_empty() {
            info!(
                "worker {} lost with {} tasks in flight",
                conn.worker_id,
                conn.in_flight.len()
            );
        }
    }

    fn drop_conn(&mut self, conn_id: u64) {
        self.forget(conn_id);
        self.dispatch();
    }

    fn violation(&mut self, conn_id: u64, why: &str) {
        warn!("protocol violation on connection {conn_id}: {why}");
        self.violations += 1;
        self.drop_conn(conn_id);
    }

    fn record(&mut self, conn_id: u64, id: &str, cpu_seconds: f64, ok: bool, message: String) {
        let Some(&i) = self.by_id.get(id) else {
            self.violation(conn_id, &format!("result for unknown task {id:?}"));
            return;
        };
        if let Some(conn) = self.conns.get_mut(&conn_id) {
            conn.in_flight.remove(&i);
        }
        if self.tasks[i].status.is_terminal() {
            self.duplicates += 1;
            self.dispatch();
            return;
        }
        self.pending.retain(|&p| p != i);
        if let Some(other) = self.owner.remove(&i) {
            if let Some(conn) = self.conns.get_mut(&other) {
                conn.in_flight.remove(&i);
            }
        }
        let worker = self
            .conns
            .get(&conn_id)
            .map(|c| c.worker_id.clone())
            .unwrap_or_default();
        let task = &mut self.tasks[i];
        if ok {
            task.mark_done(cpu_seconds, &worker);
            self.cpu_total += cpu_seconds;
            self.done += 1;
        } else {
            warn!("task {id} failed on {worker}: {message}");
            task.mark_failed(cpu_seconds, &worker, message);
        }
        self.remaining -= 1;
        if let Some(path) = &self.checkpoint {
            let snapshot = TaskManifest {
                tasks: self.tasks.clone(),
                base_dir: self.base.clone(),
                path: None,
            };
            if let Err(e) = snapshot.save(path) {
                warn!("checkpoint failed: {e}");
            }
        }
        self.dispatch();
    }

    fn expire(&mut self, timeout: Duration) {
        let now = Instant::now();
        let stale: Vec<u64> = self
            .conns
            .iter()
            .filter(|(_, c)| now.duration_since(c.last_seen) > timeout)
            .map(|(&id, _)| id)
            .collect();
        for id in stale {
            warn!("heartbeat lapsed for connection {id}");
            self.forget(id);
        }
        self.dispatch();
    }
}

struct Shared {
    state: Mutex<State>,
    changed: Condvar,
}

fn serve_connection(shared: Arc<Shared>, stream: TcpStream, conn_id: u64) {
    let Ok(read_half) = stream.try_clone() else {
        return;
    };
    let mut reader = BufReader::new(read_half);
    match recv(&mut reader) {
        Ok(Some(Message::Hello { worker_id, slots })) if slots > 0 => {
            let mut st = shared.state.lock().unwrap();
            if st.finished {
                let mut s = stream;
                let _ = send(&mut s, &Message::Done {});
                return;
            }
            debug!("worker {worker_id} joined with {slots} slots");
            st.conns.insert(
                conn_id,
                Conn {
                    worker_id,
                    slots,
                    in_flight: BTreeSet::new(),
                    last_seen: Instant::now(),
                    stream,
                },
            );
            st.dispatch();
        }
        Ok(None) => return,
        _ => {
            let mut st = shared.state.lock().unwrap();
            st.violations += 1;
            let _ = stream.shutdown(Shutdown::Both);
            warn!("connection {conn_id} did not open with a valid HELLO");
            return;
        }
    }
    loop {
        let msg = recv(&mut reader);
        let mut st = shared.state.lock().unwrap();
        if !st.conns.contains_key(&conn_id) {
            break;
        }
        match msg {
            Ok(Some(Message::Heartbeat { .. })) => {
                st.conns.get_mut(&conn_id).unwrap().last_seen = Instant::now();
            }
            Ok(Some(Message::Result {
                id,
                cpu_seconds,
                ok,
                message,
            })) => {
                st.conns.get_mut(&conn_id).unwrap().last_seen = Instant::now();
                st.record(conn_id, &id, cpu_seconds, ok, message);
            }
            Ok(Some(other)) => {
                st.violation(conn_id, &format!("unexpected {other:?}"));
                shared.changed.notify_all();
                break;
            }
            Ok(None) => {
                st.drop_conn(conn_id);
                shared.changed.notify_all();
                break;
            }
            Err(e) => {
                st.violation(conn_id, &e.to_string());
                shared.changed.notify_all();
                break;
            }
        }
        shared.changed.notify_all();
    }
}

pub struct Coordinator {
    listener: TcpListener,
    config: CoordinatorConfig,
}

impl Coordinator {
    pub fn bind(addr: &str, config: CoordinatorConfig) -> Result<Self> {
        let listener = TcpListener::bind(addr).map_err(|source| Error::BindFailure {
            addr: addr.to_string(),
            source,
        })?;
        Ok(Coordinator { listener, config })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.listener
            .local_addr()
            .expect("bound listener has an address")
    }

    /// Serves `manifest` until every task is `DONE` or `FAILED`, then tells
    /// all workers to stop. Statuses are written back into `manifest`.
    pub fn run(self, manifest: &mut TaskManifest) -> Result<ServeReport> {
        let todo = manifest.reset_unfinished();
        let started = Instant::now();
        let by_id = manifest
            .tasks
            .iter()
            .enumerate()
            .map(|(i, t)| (t.id.clone(), i))
            .collect();
        let shared = Arc::new(Shared {
            state: Mutex::new(State {
                tasks: manifest.tasks.clone(),
                by_id,
                base: manifest.base_dir.clone(),
                remaining: todo.len(),
                pending: todo.into(),
                owner: HashMap::new(),
                conns: BTreeMap::new(),
                cpu_total: 0.0,
                done: 0,
                reassignments: 0,
                duplicates: 0,
                violations: 0,
                peak: BTreeMap::new(),
                finished: false,
                checkpoint: manifest.path.clone(),
            }),
            changed: Condvar::new(),
        });

        self.listener
            .set_nonblocking(true)
            .map_err(|e| Error::io("listener", e))?;
        let acceptor = {
            let shared = Arc::clone(&shared);
            let listener = self.listener;
            let poll = self.config.poll_interval;
            thread::spawn(move || {
                let next_id = AtomicU64::new(0);
                loop {
                    if shared.state.lock().unwrap().finished {
                        break;
                    }
                    match listener.accept() {
                        Ok((stream, peer)) => {
                            debug!("connection from {peer}");
                            let _ = stream.set_nonblocking(false);
                            let _ = stream.set_nodelay(true);
                            let _ = stream.set_write_timeout(Some(Duration::from_secs(5)));
                            let id = next_id.fetch_add(1, Ordering::Relaxed);
                            let shared = Arc::clone(&shared);
                            thread::spawn(move || serve_connection(shared, stream, id));
                        }
                        Err(e) if e.kind() == ErrorKind::WouldBlock => thread::sleep(poll),
                        Err(e) => {
                            warn!("accept failed: {e}");
                            thread::sleep(poll);
                        }
                    }
                }
            })
        };

        let mut st = shared.state.lock().unwrap();
        while st.remaining > 0 {
            st.expire(self.config.heartbeat_timeout);
            if st.remaining == 0 {
                break;
            }
            st = shared
                .changed
                .wait_timeout(st, self.config.poll_interval)
                .unwrap()
                .0;
        }
        st.finished = true;
        for conn in st.conns.values_mut() {
            let _ = send(&mut conn.stream, &Message::Done {});
            let _ = conn.stream.shutdown(Shutdown::Write);
        }
        st.conns.clear();
        manifest.tasks = st.tasks.clone();
        let report = ServeReport {
            stats: FarmStats::from_totals(st.done, st.cpu_total, started.elapsed().as_secs_f64()),
            reassignments: st.reassignments,
            duplicate_results: st.duplicates,
            protocol_violations: st.violations,
            peak_in_flight: st.peak.clone(),
        };
        drop(st);
        let _ = acceptor.join();
        manifest.checkpoint()?;
        Ok(report)
    }
}

/// Binds `bind_address` and serves `manifest` to completion.
pub fn serve_coordinator(
    manifest: &mut TaskManifest,
    bind_address: &str,
    config: CoordinatorConfig,
) -> Result<ServeReport> {
    Coordinator::bind(bind_address, config)?.run(manifest)
}
