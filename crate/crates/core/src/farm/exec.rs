//! Running a single task and measuring its CPU cost.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use crate::analysis::{analyze_plan, AnalysisOptions};
use crate::dataset::{default_direction, remap_to_gray};
use crate::error::Result;
use crate::farm::task::Task;
use crate::pgm::{load_occupancy, write_pgm};

/// CPU time consumed so far by the calling thread, in seconds.
pub fn thread_cpu_seconds() -> f64 {
    let mut ts = libc::timespec {
        tv_sec: 0,
        tv_nsec: 0,
    };
    // SAFETY: `ts` is a valid, writable timespec.
    let rc = unsafe { libc::clock_gettime(libc::CLOCK_THREAD_CPUTIME_ID, &mut ts) };
    if rc != 0 {
        return 0.0;
    }
    ts.tv_sec as f64 + ts.tv_nsec as f64 * 1e-9
}

#[derive(Clone, Debug, PartialEq)]
pub struct TaskOutcome {
    pub cpu_seconds: f64,
    /// `Err` carries a human-readable failure message.
    pub result: std::result::Result<(), String>,
}

/// Loads the plan, prunes it, runs the analysis single-threaded, and writes
/// the output atomically. A `.pgm` output gets the grayscale rendering;
/// anything else gets the float sidecar.
fn run(task: &Task, base: &Path) -> Result<()> {
    let input = base.join(&task.input_path);
    let output = base.join(&task.output_path);
    let grid = load_occupancy(&input, task.cell_size)?;
    let (pruned, field) = analyze_plan(&grid, task.analysis, AnalysisOptions::default())?;
    if output.extension().is_some_and(|e| e == "pgm") {
        let gray = remap_to_gray(&field, &pruned, default_direction(task.analysis))?;
        write_pgm(&gray, &output)
    } else {
        field.write_sidecar(&output)
    }
}

/// Executes `task` on the calling thread. Never panics; failures and panics
/// are reported in the outcome.
pub fn execute_task(task: &Task, base: &Path) -> TaskOutcome {
    let start = thread_cpu_seconds();
    let result = match catch_unwind(AssertUnwindSafe(|| run(task, base))) {
        Ok(Ok(())) => Ok(()),
        Ok(Err(e)) => Err(e.to_string()),
        Err(panic) => Err(panic
            .downcast_ref::<&str>()
            .map(|s| s.to_string())
            .or_else(|| panic.downcast_ref::<String>().cloned())
            .unwrap_or_else(|| "analysis panicked".into())),
    };
    TaskOutcome {
        cpu_seconds: (thread_cpu_seconds() - start).max(0.0),
        result,
    }
}
