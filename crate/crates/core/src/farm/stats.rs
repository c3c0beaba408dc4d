use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::farm::task::{Task, TaskStatus};

/// CPU-versus-wall accounting for one batch run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FarmStats {
    pub sample_count: usize,
    pub total_cpu_seconds: f64,
    pub wall_seconds: f64,
    /// `total_cpu_seconds / wall_seconds`.
    pub speedup: f64,
}

impl FarmStats {
    pub fn from_totals(sample_count: usize, total_cpu_seconds: f64, wall_seconds: f64) -> Self {
        let wall_seconds = wall_seconds.max(f64::MIN_POSITIVE);
        FarmStats {
            sample_count,
            total_cpu_seconds,
            wall_seconds,
            speedup: total_cpu_seconds / wall_seconds,
        }
    }

    /// Table layout: durations as `dd:hh:mm:ss` (CPU) and `hh:mm:ss` (wall).
    pub fn table(&self) -> String {
        let rows = [
            ("Samples", self.sample_count.to_string()),
            (
                "Total CPU time [dd:hh:mm:ss]",
                format_dhms(self.total_cpu_seconds),
            ),
            (
                "Actual Evaluation Time [hh:mm:ss]",
                format_hms(self.wall_seconds),
            ),
            ("Speed-up", format!("{:.2}", self.speedup)),
        ];
        let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
        rows.iter()
            .map(|(k, v)| format!("{k:<width$}  {v}\n"))
            .collect()
    }
}

impl fmt::Display for FarmStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.table())
    }
}

/// Summarises completed tasks. Only `DONE` tasks count as samples.
pub fn compute_stats(tasks: &[Task], wall_seconds: f64) -> Result<FarmStats> {
    if wall_seconds.is_nan() || wall_seconds <= 0.0 {
        return Err(Error::InvalidParams(format!(
            "wall time must be positive, got {wall_seconds}"
        )));
    }
    let done: Vec<&Task> = tasks
        .iter()
        .filter(|t| t.status == TaskStatus::Done)
        .collect();
    if done.is_empty() {
        return Err(Error::EmptyTaskList);
    }
    let cpu = done.iter().filter_map(|t| t.cpu_seconds).sum();
    Ok(FarmStats::from_totals(done.len(), cpu, wall_seconds))
}

fn whole_seconds(seconds: f64) -> u64 {
    seconds.max(0.0).round() as u64
}

/// `dd:hh:mm:ss`.
pub fn format_dhms(seconds: f64) -> String {
    let s = whole_seconds(seconds);
    format!(
        "{:02}:{:02}:{:02}:{:02}",
        s / 86_400,
        s / 3_600 % 24,
        s / 60 % 60,
        s % 60
    )
}

/// `hh:mm:ss`; hours are not wrapped into days.
pub fn format_hms(seconds: f64) -> String {
    let s = whole_seconds(seconds);
    format!("{:02}:{:02}:{:02}", s / 3_600, s / 60 % 60, s % 60)
}

/// Parses `ss`, `mm:ss`, `hh:mm:ss` or `dd:hh:mm:ss` into seconds.
pub fn parse_duration(text: &str) -> Result<f64> {
    let parts: Vec<&str> = text.trim().split(':').collect();
    if parts.is_empty() || parts.len() > 4 {
        return Err(Error::InvalidParams(format!("bad duration {text:?}")));
    }
    const UNITS: [u64; 4] = [1, 60, 3_600, 86_400];
    let mut total = 0u64;
    for (part, unit) in parts.iter().rev().zip(UNITS) {
        let v: u64 = part
            .parse()
            .map_err(|_| Error::InvalidParams(format!("bad duration {text:?}")))?;
        total += v * unit;
    }
    Ok(total as f64)
}
