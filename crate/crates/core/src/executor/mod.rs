//! Pluggable execution backends with a snapshot → execute → revert contract.
//!
//! Every execution starts from the backend's pristine context and reverts
//! before returning, so traces from the same backend are always comparable:
//! `trace.before` equals the pristine snapshot and `trace.after` reflects
//! only what the input itself changed.

mod cache;
mod manifest;
pub mod sandbox;
pub mod sim;
mod snapshot;

pub use cache::{execute_cached, execute_summary, CachedBehavior, TraceCache};
pub use manifest::{FsManifest, ManifestEntry, BUNDLED_MANIFEST};
pub use sandbox::{SandboxBackend, SandboxConfig};
pub use sim::SimBackend;
pub use snapshot::{content_hash, ContextSnapshot, FileKind, FileRecord};

use thiserror::Error;

/// Exit code reported when a backend cuts an execution short (wall-clock
/// timeout on the sandbox backend, instruction cap on the simulated one).
pub const TIMEOUT_EXIT_CODE: i32 = 124;

#[derive(Debug, Error)]
pub enum ExecError {
    #[error("backend unavailable: {0}")]
    Unavailable(String),
    #[error("invalid seed manifest: {0}")]
    Manifest(String),
    #[error("execution I/O failure: {0}")]
    Io(#[from] std::io::Error),
    #[error("cached entry could not be rehydrated: {0}")]
    Cache(String),
}

/// Snapshot sections a backend promises to populate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum SnapshotSection {
    Cwd,
    Env,
    Fs,
    Groups,
    ShellOpts,
    Limits,
    Firewall,
}

#[derive(Clone, Copy, Debug)]
pub struct BackendCapabilities {
    pub sections: &'static [SnapshotSection],
    /// Whether identical inputs are guaranteed identical traces.
    pub deterministic: bool,
}

impl BackendCapabilities {
    pub fn populates(&self, section: SnapshotSection) -> bool {
        self.sections.contains(&section)
    }
}

/// One complete execution: the exact input string, everything the input
/// printed (stdout and stderr combined), the exit code of the last command,
/// and the context before and after.
#[derive(Clone, Debug, PartialEq)]
pub struct ExecutionTrace {
    pub input: String,
    pub output: String,
    pub exit_code: i32,
    pub before: ContextSnapshot,
    pub after: ContextSnapshot,
}

/// A revertible execution backend. `execute` must run `input` from the
/// pristine context, capture the resulting trace, and restore the pristine
/// context before returning; exit codes stay within `0..=255`.
pub trait ExecutorBackend: Send {
    fn capabilities(&self) -> BackendCapabilities;

    /// The context every execution starts from.
    fn pristine(&self) -> &ContextSnapshot;

    fn execute(&mut self, input: &str) -> Result<ExecutionTrace, ExecError>;

    /// Number of real executions performed so far (cache hits excluded).
    fn executions(&self) -> u64;
}
