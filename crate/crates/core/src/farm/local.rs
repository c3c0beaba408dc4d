//! Multi-threaded execution of a manifest on this machine.

use std::collections::VecDeque;
use std::sync::mpsc;
use std::sync::Mutex;
use std::thread;
use std::time::Instant;

use log::{info, warn};

use crate::error::{Error, Result};
use crate::farm::exec::{execute_task, TaskOutcome};
use crate::farm::stats::FarmStats;
use crate::farm::task::{TaskManifest, TaskStatus};

/// Runs every unfinished task in `manifest` on a pool of `workers` threads.
///
/// Tasks already `DONE` with their output present are skipped, so an
/// interrupted batch resumes where it stopped. Task failures are recorded
/// on the task and never abort the batch. When `manifest.path` is set the
/// manifest is checkpointed after every completion. Returned stats cover
/// only the tasks executed by this call.
pub fn run_local(manifest: &mut TaskManifest, workers: usize) -> Result<FarmStats> {
    if workers == 0 {
        return Err(Error::InvalidParams("workers must be positive".into()));
    }
    let todo = manifest.reset_unfinished();
    let started = Instant::now();
    if todo.is_empty() {
        return Ok(FarmStats::from_totals(
            0,
            0.0,
            started.elapsed().as_secs_f64(),
        ));
    }
    info!("running {} tasks on {workers} workers", todo.len());
    let queue = Mutex::new(todo.iter().copied().collect::<VecDeque<usize>>());
    let snapshot: Vec<_> = manifest.tasks.clone();
    let base = manifest.base_dir.clone();
    let (tx, rx) = mpsc::channel::<(usize, usize, TaskOutcome)>();

    let mut cpu_total = 0.0;
    let mut done = 0usize;
    thread::scope(|scope| -> Result<()> {
        for w in 0..workers.min(todo.len()) {
            let tx = tx.clone();
            let (queue, snapshot, base) = (&queue, &snapshot, &base);
            scope.spawn(move || loop {
                let next = queue.lock().unwrap().pop_front();
                let Some(i) = next else { break };
                let outcome = execute_task(&snapshot[i], base);
                if tx.send((i, w, outcome)).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        for (i, w, outcome) in rx {
            let worker = format!("local-{w}");
            let task = &mut manifest.tasks[i];
            match outcome.result {
                Ok(()) => {
                    task.mark_done(outcome.cpu_seconds, &worker);
                    cpu_total += outcome.cpu_seconds;
                    done += 1;
                }
                Err(msg) => {
                    warn!("task {} failed: {msg}", task.id);
                    task.mark_failed(outcome.cpu_seconds, &worker, msg);
                }
            }
            manifest.checkpoint()?;
        }
        Ok(())
    })?;
    debug_assert!(manifest
        .tasks
        .iter()
        .all(|t| t.status != TaskStatus::Running && t.status != TaskStatus::Pending));
    Ok(FarmStats::from_totals(
        done,
        cpu_total,
        started.elapsed().as_secs_f64(),
    ))
}
