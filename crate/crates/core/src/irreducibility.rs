//! Information-density scoring.
//!
//! An input's arguments are *irreducible* when dropping any of them changes
//! observable behavior. The score contrasts the full input against variants
//! with a non-empty proper subset of one command's arguments omitted:
//!
//! ```text
//! score = Σ |O|·Δ(O)  /  Σ |O|
//! ```
//!
//! summed over omission sets `O` (never empty, never all arguments), where
//! `Δ(O)` is 1 when the reduced input behaves differently from the full one.
//! Heavier omissions carry more weight: surviving a large deletion is strong
//! evidence of redundancy. Small argument counts enumerate every subset;
//! larger ones estimate the same quantity from uniformly sampled subsets.
//!
//! Conventions at the edges: zero arguments score 1.0 (nothing can be
//! dropped), and a single argument is contrasted directly against the bare
//! command — the only reduction it has — making small scores possible there
//! too.

use std::collections::HashSet;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::behavior::{noise_threshold, summaries_differ, BETA_CEILING};
use crate::executor::{execute_summary, ExecError, ExecutorBackend, TraceCache};
use crate::render;
use crate::seeds::derive_seed2;
use crate::shellenv::Session;

/// Masks are `u64` and exhaustive enumeration is exponential; scoring is
/// built for the short argument rows the environment produces.
pub const MAX_SCORED_ARGS: usize = 20;

/// Calibration settings for the behavioral-noise threshold.
#[derive(Clone, Copy, Debug)]
pub struct NoiseConfig {
    /// Executions of the full input used to measure output noise.
    pub traces: usize,
}

impl Default for NoiseConfig {
    fn default() -> NoiseConfig {
        NoiseConfig { traces: 3 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScoreMode {
    /// Every admissible omission subset was evaluated.
    Exact,
    /// The score is a Monte-Carlo estimate from sampled subsets.
    Estimated,
}

impl std::fmt::Display for ScoreMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ScoreMode::Exact => "exact",
            ScoreMode::Estimated => "estimated",
        })
    }
}

/// One evaluated reduction of the target command.
#[derive(Clone, Debug)]
pub struct SubsetSample {
    /// 0-based indices of the arguments that were kept.
    pub kept: Vec<usize>,
    /// Number of omitted arguments (the sample's weight).
    pub weight: usize,
    /// Whether the reduction behaved differently from the full input.
    pub delta: bool,
    /// The reduced input as executed.
    pub rendered: String,
}

/// Score for one command row.
#[derive(Clone, Debug)]
pub struct IrreducibilityReport {
    pub score: f64,
    pub mode: ScoreMode,
    pub n_args: usize,
    /// Output-similarity threshold used for the equivalence checks.
    pub beta: f64,
    /// Distinct non-empty omission masks that were evaluated.
    pub budget_used: usize,
    pub samples: Vec<SubsetSample>,
}

/// Per-command scores plus the session-level summary.
#[derive(Clone, Debug)]
pub struct SessionReport {
    pub per_command: Vec<IrreducibilityReport>,
    /// Argument-count-weighted mean of the per-command scores (unweighted
    /// mean when every row is argument-free).
    pub summary: f64,
}

/// The slice of a session that one command's score contrasts over: every
/// earlier row verbatim, the command row split into its head and droppable
/// arguments, and later rows omitted entirely.
#[derive(Clone, Debug)]
pub struct ContrastGroup {
    pub prefix_rows: Vec<Vec<String>>,
    /// The command token, preceded by its connector when the row has one.
    pub row_head: Vec<String>,
    pub args: Vec<String>,
}

pub fn contrast_group(session: &Session, j: usize) -> ContrastGroup {
    let row = &session.rows[j];
    let head_len = if render::is_connector(&row[0]) { 2 } else { 1 };
    let head_len = head_len.min(row.len());
    ContrastGroup {
        prefix_rows: session.rows[..j].to_vec(),
        row_head: row[..head_len].to_vec(),
        args: row[head_len..].to_vec(),
    }
}

/// Renders the contrast group with the arguments in `omitted` dropped
/// (bit i set = argument i omitted).
pub fn subinput(group: &ContrastGroup, omitted: u64) -> String {
    let mut tokens: Vec<&str> = Vec::new();
    for (i, row) in group.prefix_rows.iter().enumerate() {
        if let Some(sep) = render::row_separator(i, row) {
            tokens.push(sep);
        }
        tokens.extend(row.iter().map(String::as_str));
    }
    if let Some(sep) = render::row_separator(group.prefix_rows.len(), &group.row_head) {
        tokens.push(sep);
    }
    tokens.extend(group.row_head.iter().map(String::as_str));
    for (i, arg) in group.args.iter().enumerate() {
        if omitted & (1u64 << i) == 0 {
            tokens.push(arg);
        }
    }
    render::join_tokens(tokens).text
}

/// Omission masks to evaluate: ascending enumeration of `0..2^n - 1` when
/// the budget covers it (the full-omission mask is never included), else
/// `budget` uniform draws from the same range. Mask 0 omits nothing — it is
/// skipped without an execution, and a batch whose draws were all zero is
/// redrawn so the weighted sum stays well-defined.
pub fn sample_subsets(n_args: usize, budget: usize, seed: u64) -> (Vec<u64>, ScoreMode) {
    assert!(n_args >= 2, "subset families need at least two arguments");
    assert!(n_args <= MAX_SCORED_ARGS, "argument row too long to score");
    let full_mask = (1u64 << n_args) - 1;
    if budget as u64 >= full_mask {
        return ((0..full_mask).collect(), ScoreMode::Exact);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..10_000 {
        let draws: Vec<u64> = (0..budget).map(|_| rng.gen_range(0..full_mask)).collect();
        if draws.iter().any(|&m| m != 0) {
            return (draws, ScoreMode::Estimated);
        }
    }
    unreachable!("all-zero batches recur with vanishing probability");
}

/// Exhaustive score for command row `j` of `session`.
pub fn exact_irreducibility(
    backend: &mut dyn ExecutorBackend,
    cache: &TraceCache,
    session: &Session,
    j: usize,
    noise: &NoiseConfig,
) -> Result<IrreducibilityReport, ExecError> {
    score_row(backend, cache, session, j, usize::MAX, 0, noise)
}

/// Budgeted score for command row `j`; falls back to exhaustive enumeration
/// whenever the budget covers the whole subset family.
pub fn estimate_irreducibility(
    backend: &mut dyn ExecutorBackend,
    cache: &TraceCache,
    session: &Session,
    j: usize,
    budget: usize,
    seed: u64,
    noise: &NoiseConfig,
) -> Result<IrreducibilityReport, ExecError> {
    assert!(budget >= 1, "subset budget must be at least 1");
    score_row(backend, cache, session, j, budget, seed, noise)
}

fn score_row(
    backend: &mut dyn ExecutorBackend,
    cache: &TraceCache,
    session: &Session,
    j: usize,
    budget: usize,
    seed: u64,
    noise: &NoiseConfig,
) -> Result<IrreducibilityReport, ExecError> {
    let group = contrast_group(session, j);
    let n_args = group.args.len();
    assert!(n_args <= MAX_SCORED_ARGS, "argument row too long to score");

    if n_args == 0 {
        return Ok(IrreducibilityReport {
            score: 1.0,
            mode: ScoreMode::Exact,
            n_args: 0,
            beta: BETA_CEILING,
            budget_used: 0,
            samples: Vec::new(),
        });
    }

    let full_input = subinput(&group, 0);
    let profile = noise_threshold(backend, &full_input, noise.traces)?;
    let full = execute_summary(backend, cache, &full_input)?;

    if n_args == 1 {
        // No non-empty proper omission exists; contrast the bare command.
        let rendered = subinput(&group, 1);
        let reduced = execute_summary(backend, cache, &rendered)?;
        let delta = summaries_differ(&reduced, &full, profile.beta);
        return Ok(IrreducibilityReport {
            score: f64::from(u8::from(delta)),
            mode: ScoreMode::Exact,
            n_args: 1,
            beta: profile.beta,
            budget_used: 1,
            samples: vec![SubsetSample {
                kept: Vec::new(),
                weight: 1,
                delta,
                rendered,
            }],
        });
    }

    let (masks, mode) = sample_subsets(n_args, budget, seed);
    let mut samples = Vec::new();
    let mut evaluated: HashSet<u64> = HashSet::new();
    let mut weighted_delta = 0.0;
    let mut total_weight = 0.0;
    for mask in masks {
        if mask == 0 {
            continue;
        }
        let rendered = subinput(&group, mask);
        let reduced = execute_summary(backend, cache, &rendered)?;
        let delta = summaries_differ(&reduced, &full, profile.beta);
        let weight = mask.count_ones() as usize;
        weighted_delta += weight as f64 * f64::from(u8::from(delta));
        total_weight += weight as f64;
        evaluated.insert(mask);
        samples.push(SubsetSample {
            kept: (0..n_args).filter(|i| mask & (1u64 << i) == 0).collect(),
            weight,
            delta,
            rendered,
        });
    }
    Ok(IrreducibilityReport {
        score: weighted_delta / total_weight,
        mode,
        n_args,
        beta: profile.beta,
        budget_used: evaluated.len(),
        samples,
    })
}

/// Scores every command row after the opening `cd` row — which is fixed
/// context, never ablated, and always part of the rendered prefix — and
/// aggregates them into the session-level summary. A session with nothing
/// beyond the opening row carries no droppable content and summarizes to 0.
pub fn composite_irreducibility(
    backend: &mut dyn ExecutorBackend,
    cache: &TraceCache,
    session: &Session,
    budget: usize,
    seed: u64,
    noise: &NoiseConfig,
) -> Result<SessionReport, ExecError> {
    if session.rows.len() < 2 {
        return Ok(SessionReport {
            per_command: Vec::new(),
            summary: 0.0,
        });
    }
    let mut per_command = Vec::with_capacity(session.rows.len() - 1);
    for j in 1..session.rows.len() {
        let row_seed = derive_seed2(seed, j as u64, 0);
        per_command.push(estimate_irreducibility(
            backend, cache, session, j, budget, row_seed, noise,
        )?);
    }
    let total_args: usize = per_command.iter().map(|r| r.n_args).sum();
    let summary = if total_args == 0 {
        per_command.iter().map(|r| r.score).sum::<f64>() / per_command.len() as f64
    } else {
        per_command
            .iter()
            .map(|r| r.n_args as f64 * r.score)
            .sum::<f64>()
            / total_args as f64
    };
    Ok(SessionReport {
        per_command,
        summary,
    })
}

/// Accuracy-versus-budget measurement row.
#[derive(Clone, Debug)]
pub struct MaeRow {
    pub n_args: usize,
    pub budget: usize,
    pub mae: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    /// Number of scored rows in this bucket.
    pub count: usize,
}

const BOOTSTRAP_REPS: usize = 1000;

/// Mean absolute error of budgeted estimates against exhaustive scores,
/// bucketed by argument count and budget, with seeded bootstrap percentile
/// confidence intervals.
pub fn mae_by_budget(
    backend: &mut dyn ExecutorBackend,
    cache: &TraceCache,
    sessions: &[Session],
    budgets: &[usize],
    seed: u64,
    noise: &NoiseConfig,
) -> Result<Vec<MaeRow>, ExecError> {
    use std::collections::BTreeMap;
    let mut errors: BTreeMap<(usize, usize), Vec<f64>> = BTreeMap::new();
    for (s_idx, session) in sessions.iter().enumerate() {
        for j in 0..session.rows.len() {
            let n_args = contrast_group(session, j).args.len();
            if n_args == 0 {
                continue;
            }
            let exact = exact_irreducibility(backend, cache, session, j, noise)?;
            for (b_idx, &budget) in budgets.iter().enumerate() {
                let est_seed = derive_seed2(seed, (s_idx * session.rows.len() + j) as u64, b_idx as u64);
                let estimate =
                    estimate_irreducibility(backend, cache, session, j, budget, est_seed, noise)?;
                errors
                    .entry((n_args, budget))
                    .or_default()
                    .push((estimate.score - exact.score).abs());
            }
        }
    }
    let mut rows = Vec::with_capacity(errors.len());
    for ((n_args, budget), errs) in errors {
        let count = errs.len();
        let mae = errs.iter().sum::<f64>() / count as f64;
        let (ci_lo, ci_hi) = bootstrap_ci(&errs, derive_seed2(seed, n_args as u64, budget as u64));
        rows.push(MaeRow {
            n_args,
            budget,
            mae,
            ci_lo,
            ci_hi,
            count,
        });
    }
    Ok(rows)
}

/// 95% percentile bootstrap interval for the mean of `values`.
fn bootstrap_ci(values: &[f64], seed: u64) -> (f64, f64) {
    if values.len() < 2 {
        let v = values.first().copied().unwrap_or(0.0);
        return (v, v);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut means = Vec::with_capacity(BOOTSTRAP_REPS);
    for _ in 0..BOOTSTRAP_REPS {
        let mut sum = 0.0;
        for _ in 0..values.len() {
            sum += values[rng.gen_range(0..values.len())];
        }
        means.push(sum / values.len() as f64);
    }
    means.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let lo_idx = (BOOTSTRAP_REPS as f64 * 0.025) as usize;
    let hi_idx = (BOOTSTRAP_REPS as f64 * 0.975) as usize;
    (means[lo_idx], means[hi_idx.min(BOOTSTRAP_REPS - 1)])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::executor::SimBackend;

    fn single(tokens: &[&str]) -> Session {
        Session::from_rows(vec![tokens.iter().map(|t| t.to_string()).collect()])
    }

    fn exact_score(tokens: &[&str]) -> IrreducibilityReport {
        let mut backend = SimBackend::bundled();
        let cache = TraceCache::new();
        let session = single(tokens);
        exact_irreducibility(
            &mut backend,
            &cache,
            &session,
            0,
            &NoiseConfig::default(),
        )
        .unwrap()
    }

    #[test]
    fn behavior_free_flags_drag_the_score_down() {
        let report = exact_score(&["echo", "-n", "hi"]);
        assert_eq!(report.score, 1.0);
        assert_eq!(report.mode, ScoreMode::Exact);
        assert_eq!(report.n_args, 2);
        assert_eq!(report.budget_used, 2);

        let report = exact_score(&["echo", "-q", "hi"]);
        assert_eq!(report.score, 0.5);
    }

    #[test]
    fn zero_and_one_argument_conventions() {
        let report = exact_score(&["pwd"]);
        assert_eq!(report.score, 1.0);
        assert_eq!(report.n_args, 0);
        assert!(report.samples.is_empty());

        // `true` ignores its argument: the bare command behaves the same.
        let report = exact_score(&["true", "ignored"]);
        assert_eq!(report.score, 0.0);
        assert_eq!(report.mode, ScoreMode::Exact);
        assert_eq!(report.samples.len(), 1);
        assert_eq!(report.samples[0].rendered, "true");

        // `echo hi` differs from bare `echo`.
        let report = exact_score(&["echo", "hi"]);
        assert_eq!(report.score, 1.0);
    }

    #[test]
    fn subset_enumeration_matches_hand_computation() {
        // `echo -q hi`: omitting `hi` changes the output (weight 1, delta),
        // omitting `-q` changes nothing (weight 1), both never omitted
        // together. Hand-weighted mean: 1/2.
        let report = exact_score(&["echo", "-q", "hi"]);
        assert_eq!(report.samples.len(), 2);
        let weights: usize = report.samples.iter().map(|s| s.weight).sum();
        assert_eq!(weights, 2);
        for sample in &report.samples {
            match sample.rendered.as_str() {
                "echo hi" => assert!(!sample.delta),
                "echo -q" => assert!(sample.delta),
                other => panic!("unexpected reduction {other:?}"),
            }
        }
    }

    #[test]
    fn enumeration_excludes_empty_and_full_omissions() {
        let report = exact_score(&["echo", "a", "b", "c"]);
        // 2^3 - 2 evaluated subsets: every mask except 0 and 0b111.
        assert_eq!(report.samples.len(), 6);
        assert_eq!(report.budget_used, 6);
        assert!(report.samples.iter().all(|s| s.weight >= 1 && s.weight < 3));
        assert!(report
            .samples
            .iter()
            .all(|s| s.rendered != "echo" && s.rendered != "echo a b c"));
    }

    #[test]
    fn covering_budgets_reproduce_exact_scores() {
        let mut backend = SimBackend::bundled();
        let cache = TraceCache::new();
        let session = single(&["echo", "-q", "hi", "there"]);
        let noise = NoiseConfig::default();
        let exact = exact_irreducibility(&mut backend, &cache, &session, 0, &noise).unwrap();
        let est =
            estimate_irreducibility(&mut backend, &cache, &session, 0, 7, 42, &noise).unwrap();
        assert_eq!(est.mode, ScoreMode::Exact);
        assert_eq!(est.score, exact.score);

        let sampled =
            estimate_irreducibility(&mut backend, &cache, &session, 0, 3, 42, &noise).unwrap();
        assert_eq!(sampled.mode, ScoreMode::Estimated);
        assert!(sampled.score.is_finite());
        assert!((0.0..=1.0).contains(&sampled.score));
    }

    #[test]
    fn estimates_are_deterministic_per_seed() {
        let noise = NoiseConfig::default();
        let score_with = |seed: u64| {
            let mut backend = SimBackend::bundled();
            let cache = TraceCache::new();
            let session = single(&["echo", "-q", "alpha", "beta", "gamma", "delta"]);
            estimate_irreducibility(&mut backend, &cache, &session, 0, 5, seed, &noise)
                .unwrap()
                .score
        };
        assert_eq!(score_with(7), score_with(7));
    }

    #[test]
    fn subinputs_respect_prefixes_connectors_and_glue() {
        let session = Session::from_rows(vec![
            vec!["cd".into(), "/tmp".into()],
            vec!["&&".into(), "ls".into(), "-l<ns>".into(), "<ns>a".into()],
            vec!["echo".into(), "later".into()],
        ]);
        let group = contrast_group(&session, 1);
        assert_eq!(group.row_head, vec!["&&".to_string(), "ls".to_string()]);
        assert_eq!(group.args.len(), 2);
        assert_eq!(subinput(&group, 0), "cd /tmp && ls -la");
        assert_eq!(subinput(&group, 0b10), "cd /tmp && ls -l");
        assert_eq!(subinput(&group, 0b01), "cd /tmp && ls a");
        assert_eq!(subinput(&group, 0b11), "cd /tmp && ls");

        let plain = contrast_group(&session, 2);
        assert_eq!(subinput(&plain, 0), "cd /tmp && ls -la; echo later");
    }

    #[test]
    fn composite_weights_rows_by_argument_count() {
        let mut backend = SimBackend::bundled();
        let cache = TraceCache::new();
        // The opening row is held fixed; command scores are `echo hi` → 1.0
        // (1 arg), `true ignored` → 0.0 (1 arg), `echo -n hi` → 1.0 (2 args).
        // Weighted: (1 + 0 + 2) / 4 = 0.75.
        let session = Session::from_rows(vec![
            vec!["cd".into(), "/tmp".into()],
            vec!["echo".into(), "hi".into()],
            vec!["true".into(), "ignored".into()],
            vec!["echo".into(), "-n".into(), "hi".into()],
        ]);
        let report = composite_irreducibility(
            &mut backend,
            &cache,
            &session,
            64,
            9,
            &NoiseConfig::default(),
        )
        .unwrap();
        assert_eq!(report.per_command.len(), 3);
        assert_eq!(report.per_command[0].score, 1.0);
        assert_eq!(report.per_command[1].score, 0.0);
        assert_eq!(report.per_command[2].score, 1.0);
        assert_eq!(report.summary, 0.75);
    }

    #[test]
    fn argument_free_sessions_fall_back_to_unweighted_mean() {
        let mut backend = SimBackend::bundled();
        let cache = TraceCache::new();
        let session = Session::from_rows(vec![
            vec!["cd".into(), "/tmp".into()],
            vec!["pwd".into()],
            vec!["true".into()],
        ]);
        let report = composite_irreducibility(
            &mut backend,
            &cache,
            &session,
            64,
            9,
            &NoiseConfig::default(),
        )
        .unwrap();
        assert_eq!(report.per_command.len(), 2);
        assert_eq!(report.summary, 1.0);
    }

    #[test]
    fn opening_row_alone_scores_zero_without_execution() {
        let mut backend = SimBackend::bundled();
        let cache = TraceCache::new();
        let session = Session::from_rows(vec![vec!["cd".into(), "/tmp".into()]]);
        let report = composite_irreducibility(
            &mut backend,
            &cache,
            &session,
            64,
            9,
            &NoiseConfig::default(),
        )
        .unwrap();
        assert!(report.per_command.is_empty());
        assert_eq!(report.summary, 0.0);
        assert_eq!(backend.executions(), 0);
    }

    #[test]
    fn sampling_skips_empty_masks_and_redraws_all_zero_batches() {
        for seed in 0..200 {
            let (masks, mode) = sample_subsets(2, 1, seed);
            assert_eq!(mode, ScoreMode::Estimated);
            assert!(masks.iter().any(|&m| m != 0), "seed {seed} drew only zeros");
        }
        let (masks, mode) = sample_subsets(3, 7, 0);
        assert_eq!(mode, ScoreMode::Exact);
        assert_eq!(masks, (0..7).collect::<Vec<u64>>());
    }

    #[test]
    fn mae_is_zero_once_the_budget_covers_the_family() {
        let mut backend = SimBackend::bundled();
        let cache = TraceCache::new();
        let sessions: Vec<Session> = (0..12)
            .map(|i| {
                let mut row = vec!["echo".to_string(), "-q".to_string(), "-q".to_string()];
                for w in 0..3 {
                    row.push(format!("w{i}_{w}"));
                }
                Session::from_rows(vec![row])
            })
            .collect();
        let rows = mae_by_budget(
            &mut backend,
            &cache,
            &sessions,
            &[4, 31],
            11,
            &NoiseConfig::default(),
        )
        .unwrap();
        assert_eq!(rows.len(), 2);
        let sampled = rows.iter().find(|r| r.budget == 4).unwrap();
        let covering = rows.iter().find(|r| r.budget == 31).unwrap();
        assert_eq!(sampled.count, 12);
        assert_eq!(covering.count, 12);
        // Budget 31 covers all 2^5 - 1 masks, so estimates are exact.
        assert_eq!(covering.mae, 0.0);
        assert!(sampled.mae >= 0.0);
        assert!(sampled.ci_lo <= sampled.mae && sampled.mae <= sampled.ci_hi);
    }
}
