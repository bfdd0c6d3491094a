//! Memoised execution.
//!
//! Subset scoring evaluates the same rendered inputs over and over, so
//! executions are cached. Entries hold a compact digest — exit code, output,
//! and the context patch — rather than full before/after snapshots, which
//! keeps exhaustive scoring runs within a small memory envelope. A full
//! trace can always be rebuilt by applying the patch to the backend's
//! pristine snapshot.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use crate::behavior::{apply_patch, diff_context, ContextPatch};

use super::{ExecError, ExecutionTrace, ExecutorBackend};

/// What one execution did, reduced to the parts equivalence checks compare.
#[derive(Clone, Debug, PartialEq)]
pub struct CachedBehavior {
    pub exit_code: i32,
    pub output: String,
    pub patch: ContextPatch,
}

/// Thread-safe input → behavior memo. The entry count doubles as the
/// deterministic "unique inputs executed" statistic.
#[derive(Default)]
pub struct TraceCache {
    entries: Mutex<HashMap<String, Arc<CachedBehavior>>>,
}

impl TraceCache {
    pub fn new() -> TraceCache {
        TraceCache::default()
    }

    /// Number of distinct inputs recorded.
    pub fn len(&self) -> usize {
        self.entries.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, input: &str) -> Option<Arc<CachedBehavior>> {
        self.entries.lock().unwrap().get(input).cloned()
    }
}

/// Cached execution returning the compact digest (the scoring hot path).
pub fn execute_summary(
    backend: &mut dyn ExecutorBackend,
    cache: &TraceCache,
    input: &str,
) -> Result<Arc<CachedBehavior>, ExecError> {
    if let Some(hit) = cache.get(input) {
        return Ok(hit);
    }
    let trace = backend.execute(input)?;
    let summary = Arc::new(CachedBehavior {
        exit_code: trace.exit_code,
        output: trace.output,
        patch: diff_context(&trace.before, &trace.after),
    });
    cache
        .entries
        .lock()
        .unwrap()
        .insert(input.to_string(), Arc::clone(&summary));
    Ok(summary)
}

/// Cached execution returning a full trace, rebuilt from the digest by
/// patching the pristine snapshot.
pub fn execute_cached(
    backend: &mut dyn ExecutorBackend,
    cache: &TraceCache,
    input: &str,
) -> Result<ExecutionTrace, ExecError> {
    let summary = execute_summary(backend, cache, input)?;
    let before = backend.pristine().clone();
    let after = apply_patch(&before, &summary.patch).map_err(|e| ExecError::Cache(e.to_string()))?;
    Ok(ExecutionTrace {
        input: input.to_string(),
        output: summary.output.clone(),
        exit_code: summary.exit_code,
        before,
        after,
    })
}
