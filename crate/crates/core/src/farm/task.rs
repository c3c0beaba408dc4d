use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::field::FieldKind;
use crate::fsutil::write_atomic;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TaskStatus {
    Pending,
    Running,
    Done,
    Failed,
}

impl TaskStatus {
    pub fn is_terminal(self) -> bool {
        matches!(self, TaskStatus::Done | TaskStatus::Failed)
    }
}

/// One analysis of one plan. Field names match the manifest's JSON keys;
/// keys this version does not know are carried through untouched.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Task {
    pub id: String,
    pub input_path: String,
    pub analysis: FieldKind,
    pub cell_size: f64,
    pub output_path: String,
    pub status: TaskStatus,
    #[serde(default)]
    pub cpu_seconds: Option<f64>,
    #[serde(default)]
    pub worker_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

impl Task {
    pub fn new(
        id: impl Into<String>,
        input_path: impl Into<String>,
        analysis: FieldKind,
        cell_size: f64,
        output_path: impl Into<String>,
    ) -> Self {
        Task {
            id: id.into(),
            input_path: input_path.into(),
            analysis,
            cell_size,
            output_path: output_path.into(),
            status: TaskStatus::Pending,
            cpu_seconds: None,
            worker_id: String::new(),
            message: None,
            extra: Map::new(),
        }
    }

    /// Copy of the task with both paths made absolute against `base`.
    pub fn resolved(&self, base: &Path) -> Task {
        let mut t = self.clone();
        t.input_path = base.join(&self.input_path).to_string_lossy().into_owned();
        t.output_path = base.join(&self.output_path).to_string_lossy().into_owned();
        t
    }

    pub(crate) fn mark_done(&mut self, cpu_seconds: f64, worker_id: &str) {
        self.status = TaskStatus::Done;
        self.cpu_seconds = Some(cpu_seconds);
        self.worker_id = worker_id.to_string();
        self.message = None;
    }

    pub(crate) fn mark_failed(&mut self, cpu_seconds: f64, worker_id: &str, message: String) {
        self.status = TaskStatus::Failed;
        self.cpu_seconds = Some(cpu_seconds);
        self.worker_id = worker_id.to_string();
        self.message = Some(message);
    }
}

/// A batch of tasks. Relative task paths are resolved against `base_dir`,
/// which for a loaded manifest is the directory holding the file.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TaskManifest {
    pub tasks: Vec<Task>,
    pub base_dir: PathBuf,
    /// Where progress is checkpointed, if anywhere.
    pub path: Option<PathBuf>,
}

impl TaskManifest {
    pub fn new(tasks: Vec<Task>, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let manifest = TaskManifest {
            tasks,
            base_dir: base_dir.into(),
            path: None,
        };
        manifest.check_unique()?;
        Ok(manifest)
    }

    fn check_unique(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for t in &self.tasks {
            if !seen.insert(t.id.as_str()) {
                return Err(Error::DuplicateIds(t.id.clone()));
            }
        }
        Ok(())
    }

    pub fn parse(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let base_dir = base_dir.into();
        let mut tasks = Vec::new();
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let task = serde_json::from_str(line).map_err(|e| Error::ManifestIo {
                path: base_dir.clone(),
                message: format!("line {}: {e}", n + 1),
            })?;
            tasks.push(task);
        }
        TaskManifest::new(tasks, base_dir)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::ManifestIo {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let mut manifest = Self::parse(&text, base).map_err(|e| match e {
            Error::ManifestIo { message, .. } => Error::ManifestIo {
                path: path.to_path_buf(),
                message,
            },
            other => other,
        })?;
        manifest.path = Some(path.to_path_buf());
        Ok(manifest)
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for t in &self.tasks {
            out.push_str(&serde_json::to_string(t).expect("task serializes"));
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_jsonl().as_bytes())
    }

    /// Writes to `self.path` when set.
    pub fn checkpoint(&self) -> Result<()> {
        match &self.path {
            Some(p) => self.save(p),
            None => Ok(()),
        }
    }

    pub fn resolve(&self, relative: &str) -> PathBuf {
        self.base_dir.join(relative)
    }

    /// Puts every task that still needs running back to `PENDING` and returns
    /// their indices. `DONE` tasks whose output is missing are rerun.
    pub(crate) fn reset_unfinished(&mut self) -> Vec<usize> {
        let mut todo = Vec::new();
        for (i, t) in self.tasks.iter_mut().enumerate() {
            let output_ok = self.base_dir.join(&t.output_path).is_file();
            if t.status == TaskStatus::Done && output_ok {
                continue;
            }
            t.status = TaskStatus::Pending;
            t.cpu_seconds = None;
            t.worker_id.clear();
            t.message = None;
            todo.push(i);
        }
        todo
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_fields_survive() {
        let line = r#"{"id":"a","input_path":"p.pgm","analysis":"SPATIAL","cell_size":1.0,"output_path":"a.f32","status":"PENDING","cpu_seconds":null,"worker_id":"","owner":"ops","priority":3}"#;
        let m = TaskManifest::parse(line, "/tmp").unwrap();
        assert_eq!(m.tasks[0].extra["priority"], 3);
        let back: Value = serde_json::from_str(m.to_jsonl().trim()).unwrap();
        let orig: Value = serde_json::from_str(line).unwrap();
        assert_eq!(back, orig);
    }

    #[test]
    fn duplicate_ids_rejected() {
        let t = Task::new("a", "p.pgm", FieldKind::Sdf, 1.0, "a.f32");
        assert!(matches!(
            TaskManifest::new(vec![t.clone(), t], "."),
            Err(Error::DuplicateIds(_))
        ));
    }

    #[test]
    fn bad_line_reports_position() {
        let err = TaskManifest::parse("{}\n", "x").unwrap_err();
        assert!(err.to_string().contains("line 1"), "{err}");
    }
}
