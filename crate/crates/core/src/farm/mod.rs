//! Batch execution of analysis tasks, in-process or across TCP workers.

pub mod coordinator;
pub mod exec;
pub mod local;
pub mod protocol;
pub mod stats;
pub mod task;
pub mod worker;

pub use coordinator::{serve_coordinator, Coordinator, CoordinatorConfig, ServeReport};
pub use local::run_local;
pub use stats::{compute_stats, FarmStats};
pub use task::{Task, TaskManifest, TaskStatus};
pub use worker::{run_worker, WorkerConfig, WorkerReport};
