//! Estimator-accuracy studies: budgeted subset scores measured against the
//! exhaustive oracle over a synthesized pool of single-command inputs, with
//! errors bucketed by argument count and budget.

use std::collections::BTreeMap;
use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use cmdsynth_core::executor::TraceCache;
use cmdsynth_core::grammar::{synthesize_argument, Grammar, SynthesisMode};
use cmdsynth_core::irreducibility::{mae_by_budget, MaeRow, NoiseConfig};
use cmdsynth_core::seeds::derive_seed2;
use cmdsynth_core::shellenv::Session;

use crate::campaign::{campaign_commands, load_grammar, make_backend, BackendKind, CampaignError,
    ARG_MAX_LEN};

/// Largest pooled argument count: the exhaustive oracle runs `2^n - 1`
/// reductions per input, and `n = 12` is the accepted ceiling for that.
pub const EXACT_ORACLE_CAP: usize = 12;

#[derive(Clone, Debug)]
pub struct BudgetConfig {
    /// Grammar file; `None` uses the bundled toy corpus.
    pub grammar_path: Option<PathBuf>,
    pub mode: SynthesisMode,
    /// Number of scored inputs in the pool.
    pub inputs: usize,
    /// Subset budgets to measure.
    pub budgets: Vec<usize>,
    /// Inclusive argument-count range accepted into the pool.
    pub min_args: usize,
    pub max_args: usize,
    pub backend: BackendKind,
    pub seed: u64,
    pub noise_traces: usize,
}

impl BudgetConfig {
    pub fn validate(&self) -> Result<(), CampaignError> {
        if self.inputs < 1 {
            return Err(CampaignError::Config("inputs must be at least 1".into()));
        }
        if self.budgets.is_empty() {
            return Err(CampaignError::Config("at least one budget is required".into()));
        }
        if self.budgets.iter().any(|&b| b < 1) {
            return Err(CampaignError::Config("budgets must be at least 1".into()));
        }
        if self.min_args < 1 || self.min_args > self.max_args {
            return Err(CampaignError::Config(format!(
                "argument range {}..={} must satisfy 1 <= min <= max",
                self.min_args, self.max_args
            )));
        }
        if self.max_args > EXACT_ORACLE_CAP {
            return Err(CampaignError::Config(format!(
                "max_args {} exceeds the exhaustive-oracle cap of {EXACT_ORACLE_CAP}",
                self.max_args
            )));
        }
        if self.noise_traces < 2 {
            return Err(CampaignError::Config("noise_traces must be at least 2".into()));
        }
        Ok(())
    }
}

/// Draws single-command rows until `inputs` of them carry an argument count
/// inside the configured range; candidates outside the range are redrawn.
fn assemble_inputs(grammar: &Grammar, config: &BudgetConfig) -> Result<Vec<Session>, CampaignError> {
    let commands = campaign_commands(grammar)?;
    let mut sessions = Vec::with_capacity(config.inputs);
    let max_attempts = (config.inputs as u64).saturating_mul(1000);
    let mut attempt: u64 = 0;
    while sessions.len() < config.inputs {
        if attempt == max_attempts {
            return Err(CampaignError::Config(format!(
                "assembled only {} of {} inputs with {}..={} arguments after {max_attempts} \
                 attempts; the grammar cannot reach this range often enough",
                sessions.len(),
                config.inputs,
                config.min_args,
                config.max_args
            )));
        }
        attempt += 1;
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed2(config.seed, attempt, 2));
        let command = commands[rng.gen_range(0..commands.len())].as_str();
        let target = rng.gen_range(config.min_args..=config.max_args);
        let start = grammar
            .start_of(command)
            .expect("pool commands come from the start table");
        let mut row = vec![command.to_string()];
        for _ in 0..target.saturating_mul(3) {
            if row.len() - 1 == target {
                break;
            }
            let argument = synthesize_argument(grammar, start, config.mode, rng.gen())?;
            if argument.text.is_empty() || argument.text.chars().count() > ARG_MAX_LEN {
                continue;
            }
            row.push(argument.text);
        }
        if row.len() - 1 != target {
            continue;
        }
        sessions.push(Session::from_rows(vec![row]));
    }
    Ok(sessions)
}

pub struct BudgetOutcome {
    pub rows: Vec<MaeRow>,
    /// `n_args,budget,mae,ci_lo,ci_hi,count` table.
    pub csv: String,
    /// Distinct inputs executed during scoring.
    pub unique_inputs: usize,
    /// Raw backend executions, noise calibration included.
    pub executions: u64,
}

pub fn run_budget_eval(config: &BudgetConfig) -> Result<BudgetOutcome, CampaignError> {
    config.validate()?;
    let grammar = load_grammar(config.grammar_path.as_deref())?;
    let sessions = assemble_inputs(&grammar, config)?;
    let mut backend = make_backend(config.backend)?;
    let cache = TraceCache::new();
    let noise = NoiseConfig {
        traces: config.noise_traces,
    };
    let rows = mae_by_budget(
        backend.as_mut(),
        &cache,
        &sessions,
        &config.budgets,
        config.seed,
        &noise,
    )?;
    let csv = mae_csv(&rows);
    Ok(BudgetOutcome {
        rows,
        csv,
        unique_inputs: cache.len(),
        executions: backend.executions(),
    })
}

pub fn mae_csv(rows: &[MaeRow]) -> String {
    let mut out = String::from("n_args,budget,mae,ci_lo,ci_hi,count\n");
    for row in rows {
        out.push_str(&format!(
            "{},{},{:.6},{:.6},{:.6},{}\n",
            row.n_args, row.budget, row.mae, row.ci_lo, row.ci_hi, row.count
        ));
    }
    out
}

/// Count-weighted mean absolute error per budget, across all argument
/// counts — the one-line-per-budget view for human summaries.
pub fn overall_by_budget(rows: &[MaeRow]) -> Vec<(usize, f64)> {
    let mut acc: BTreeMap<usize, (f64, usize)> = BTreeMap::new();
    for row in rows {
        let entry = acc.entry(row.budget).or_insert((0.0, 0));
        entry.0 += row.mae * row.count as f64;
        entry.1 += row.count;
    }
    acc.into_iter()
        .map(|(budget, (sum, n))| (budget, if n == 0 { 0.0 } else { sum / n as f64 }))
        .collect()
}
