//! Behavioral comparison of executions.
//!
//! Two executions of the same backend are *equivalent* when their exit codes
//! match, their context patches match, and their outputs are similar enough
//! to fall within the backend's measured noise floor. The noise floor is
//! calibrated per input by executing it several times and turning the
//! pairwise output similarities into a threshold.

mod patch;
mod similarity;

pub use patch::{apply_patch, diff_context, ContextPatch, PatchError, PatchOp};
pub use similarity::{edit_similarity, similarity_meets};

use crate::executor::{CachedBehavior, ExecError, ExecutionTrace, ExecutorBackend};

/// Similarity thresholds never exceed this, so byte-identical outputs are
/// always equivalent even on perfectly deterministic backends.
pub const BETA_CEILING: f64 = 0.95;

/// Output-noise calibration for one input on one backend.
#[derive(Clone, Debug)]
pub struct NoiseProfile {
    /// Similarity threshold: outputs at or above it count as equivalent.
    pub beta: f64,
    /// Mean pairwise similarity of the calibration executions.
    pub mean: f64,
    /// Population standard deviation of the pairwise similarities.
    pub stddev: f64,
    /// The pairwise similarities themselves, row-major over ordered pairs.
    pub pairwise: Vec<f64>,
    /// Number of calibration executions performed.
    pub traces: usize,
}

/// Threshold rule: two population standard deviations below the mean
/// pairwise similarity, capped at [`BETA_CEILING`].
pub fn beta_from_similarities(similarities: &[f64]) -> f64 {
    assert!(
        !similarities.is_empty(),
        "beta requires at least one pairwise similarity"
    );
    let n = similarities.len() as f64;
    let mean = similarities.iter().sum::<f64>() / n;
    let variance = similarities
        .iter()
        .map(|s| (s - mean) * (s - mean))
        .sum::<f64>()
        / n;
    (mean - 2.0 * variance.sqrt()).min(BETA_CEILING)
}

/// Calibrates the noise floor for `input` by executing it `traces` times
/// directly on the backend (never through a cache — repeated runs are the
/// whole point) and comparing every pair of outputs.
pub fn noise_threshold(
    backend: &mut dyn ExecutorBackend,
    input: &str,
    traces: usize,
) -> Result<NoiseProfile, ExecError> {
    assert!(traces >= 2, "noise calibration needs at least two traces");
    let mut outputs = Vec::with_capacity(traces);
    for _ in 0..traces {
        outputs.push(backend.execute(input)?.output);
    }
    let mut pairwise = Vec::with_capacity(traces * (traces - 1) / 2);
    for i in 0..outputs.len() {
        for j in (i + 1)..outputs.len() {
            pairwise.push(edit_similarity(&outputs[i], &outputs[j]));
        }
    }
    let beta = beta_from_similarities(&pairwise);
    let n = pairwise.len() as f64;
    let mean = pairwise.iter().sum::<f64>() / n;
    let variance = pairwise.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / n;
    Ok(NoiseProfile {
        beta,
        mean,
        stddev: variance.sqrt(),
        pairwise,
        traces,
    })
}

/// Full-trace comparison: exit code, context patch, then output similarity
/// against the calibrated threshold.
pub fn behaviors_differ(a: &ExecutionTrace, b: &ExecutionTrace, noise: &NoiseProfile) -> bool {
    if a.exit_code != b.exit_code {
        return true;
    }
    if diff_context(&a.before, &a.after) != diff_context(&b.before, &b.after) {
        return true;
    }
    !similarity_meets(&a.output, &b.output, noise.beta)
}

/// Same decision over pre-digested behaviors, for callers that already hold
/// cached summaries and a threshold.
pub fn summaries_differ(a: &CachedBehavior, b: &CachedBehavior, beta: f64) -> bool {
    if a.exit_code != b.exit_code {
        return true;
    }
    if a.patch != b.patch {
        return true;
    }
    !similarity_meets(&a.output, &b.output, beta)
}
