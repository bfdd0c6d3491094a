//! Synthesis campaigns.
//!
//! A campaign runs `samples` scripted episodes of the shell environment.
//! Each episode's policy is seeded from the campaign seed and the sample
//! index: it opens between one and `max_commands - 1` command rows (one in
//! four rows chains onto the previous command with a connector), fills each
//! row with grammar-derived arguments, and finishes with the execute action,
//! keeping the annotated record. Sessions run on a worker pool sharing one
//! trace cache; records are sorted by session id before writing, so shard
//! bytes are a pure function of the configuration.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use cmdsynth_core::dataset::{write_records, DatasetError, Record};
use cmdsynth_core::executor::{ExecError, ExecutorBackend, SandboxBackend, SimBackend, TraceCache};
use cmdsynth_core::grammar::{synthesize_argument, Grammar, GrammarError, SynthesisMode};
use cmdsynth_core::seeds::{derive_seed, derive_seed2};
use cmdsynth_core::shellenv::{ActionTriple, EnvConfig, ShellEnv};

/// Connector tokens a synthesized row may open with, chaining it onto the
/// previous command instead of starting a fresh `;`-separated statement.
const ROW_CONNECTORS: &[&str] = &["&&", "||", "|"];

/// One in this many synthesized rows opens with a connector.
const CONNECTOR_ONE_IN: u32 = 4;

/// Longest accepted argument, in characters. Longer derivations (and empty
/// ones) count as spent draws rather than cells, keeping every episode
/// inside the environment's action contract.
pub(crate) const ARG_MAX_LEN: usize = 64;

/// Which executor runs the campaign. The simulated backend is the default
/// everywhere; real processes require asking for `sandbox` by name.
#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum BackendKind {
    /// Deterministic in-memory shell model.
    Sim,
    /// Real `sh -c` processes in a throwaway directory tree.
    Sandbox,
}

impl std::fmt::Display for BackendKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            BackendKind::Sim => "sim",
            BackendKind::Sandbox => "sandbox",
        })
    }
}

/// Parses a `--mode` flag value.
pub fn parse_mode(s: &str) -> Result<SynthesisMode, String> {
    match s {
        "gcs" => Ok(SynthesisMode::Gcs),
        "ucs" => Ok(SynthesisMode::Ucs),
        other => Err(format!("unknown mode `{other}` (expected `gcs` or `ucs`)")),
    }
}

#[derive(Debug, Error)]
pub enum CampaignError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Synthesis(#[from] GrammarError),
    #[error("worker backend initialization failed: {0}")]
    WorkerInit(String),
    #[error(transparent)]
    Exec(#[from] ExecError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("I/O failure: {0}")]
    Io(#[from] std::io::Error),
}

impl CampaignError {
    /// Process exit code: 1 for configuration mistakes, 2 for runtime
    /// failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CampaignError::Config(_) => 1,
            _ => 2,
        }
    }
}

#[derive(Clone, Debug)]
pub struct CampaignConfig {
    /// Grammar file; `None` uses the bundled toy corpus.
    pub grammar_path: Option<PathBuf>,
    pub mode: SynthesisMode,
    /// Sessions to run. Every session yields one record; `score_filter`
    /// then decides which records are written.
    pub samples: usize,
    /// Subset budget for the terminal irreducibility estimate.
    pub budget: usize,
    /// Local horizon: maximum cells per command row.
    pub max_args: usize,
    /// Global horizon: maximum command rows per session, opening `cd`
    /// row included.
    pub max_commands: usize,
    pub backend: BackendKind,
    pub seed: u64,
    /// Directory receiving the record shards and `campaign.json`.
    pub out_dir: PathBuf,
    /// Keep only records whose session score lies in `[lo, hi]`.
    pub score_filter: Option<(f64, f64)>,
    /// Executions of the full input behind each noise threshold.
    pub noise_traces: usize,
    /// Worker threads; 0 means one per core.
    pub workers: usize,
}

impl CampaignConfig {
    pub fn validate(&self) -> Result<(), CampaignError> {
        if self.samples < 1 {
            return Err(CampaignError::Config("samples must be at least 1".into()));
        }
        if self.max_commands < 2 {
            return Err(CampaignError::Config(
                "max_commands must be at least 2: row 0 is the fixed opening cd row, so \
                 synthesized commands need at least one more row"
                    .into(),
            ));
        }
        if let Some((lo, hi)) = self.score_filter {
            if !(0.0..=1.0).contains(&lo) || !(0.0..=1.0).contains(&hi) || lo > hi {
                return Err(CampaignError::Config(format!(
                    "score filter [{lo}, {hi}] must satisfy 0 <= lo <= hi <= 1"
                )));
            }
        }
        self.env_config()
            .validate()
            .map_err(|e| CampaignError::Config(e.to_string()))
    }

    fn env_config(&self) -> EnvConfig {
        EnvConfig {
            max_commands: self.max_commands,
            max_args: self.max_args,
            subset_budget: self.budget,
            noise_traces: self.noise_traces,
            arg_max_len: ARG_MAX_LEN,
            start_dirs: start_dirs_for(self.backend),
            ..EnvConfig::default()
        }
    }
}

/// Opening-row directory vocabulary per backend. Both land in the seeded
/// home directory, but each backend addresses it differently: the simulated
/// shell starts there and takes absolute paths, while the process-backed
/// sandbox starts at the root of its staged tree and must be entered by a
/// relative path (absolute paths would resolve against the real filesystem).
fn start_dirs_for(backend: BackendKind) -> Vec<String> {
    match backend {
        BackendKind::Sim => vec!["/home/ubuntu".to_string()],
        BackendKind::Sandbox => vec!["home/ubuntu".to_string()],
    }
}

/// Loads the grammar named by `path`, or the bundled toy corpus when absent.
/// File and parse failures are configuration errors naming the path.
pub fn load_grammar(path: Option<&Path>) -> Result<Grammar, CampaignError> {
    match path {
        None => Ok(Grammar::bundled()),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CampaignError::Config(format!("grammar file {}: {e}", p.display())))?;
            Grammar::parse(&text)
                .map_err(|e| CampaignError::Config(format!("grammar file {}: {e}", p.display())))
        }
    }
}

/// The commands a grammar can synthesize for, in sorted order.
pub(crate) fn campaign_commands(grammar: &Grammar) -> Result<Vec<String>, CampaignError> {
    let commands: Vec<String> = grammar.starts().keys().cloned().collect();
    if commands.is_empty() {
        return Err(CampaignError::Config(
            "grammar declares no %start bindings, so there is nothing to synthesize".into(),
        ));
    }
    Ok(commands)
}

pub(crate) fn make_backend(kind: BackendKind) -> Result<Box<dyn ExecutorBackend>, ExecError> {
    Ok(match kind {
        BackendKind::Sim => Box::new(SimBackend::bundled()),
        BackendKind::Sandbox => Box::new(SandboxBackend::bundled()?),
    })
}

struct SessionOutcome {
    record: Record,
    /// Backend executions this session consumed, noise calibration included.
    executions: u64,
}

/// Runs one scripted episode: seeded row/argument draws, then execute.
fn drive_session(
    env: &mut ShellEnv,
    grammar: &Grammar,
    commands: &[String],
    mode: SynthesisMode,
    master: u64,
    index: u64,
) -> Result<SessionOutcome, CampaignError> {
    let before = env.executions();
    env.reset(derive_seed(master, index));
    let mut policy = ChaCha8Rng::seed_from_u64(derive_seed2(master, index, 1));
    let max_args = env.config().max_args;
    let arg_limit = env.config().arg_max_len;
    let rows = policy.gen_range(1..env.config().max_commands);
    for _ in 0..rows {
        let connector = if policy.gen_ratio(1, CONNECTOR_ONE_IN) {
            Some(ROW_CONNECTORS[policy.gen_range(0..ROW_CONNECTORS.len())])
        } else {
            None
        };
        let command = commands[policy.gen_range(0..commands.len())].as_str();
        if let Some(connector) = connector {
            env.step(&ActionTriple::new_row(connector))?;
            env.step(&ActionTriple::append(command))?;
        } else {
            env.step(&ActionTriple::new_row(command))?;
        }
        let head_cells = 1 + usize::from(connector.is_some());
        let draws = policy.gen_range(0..=max_args - head_cells);
        let start = grammar
            .start_of(command)
            .expect("campaign commands come from the start table");
        for _ in 0..draws {
            let seed = policy.gen::<u64>();
            let argument = synthesize_argument(grammar, start, mode, seed)?;
            if argument.text.is_empty() || argument.text.chars().count() > arg_limit {
                continue;
            }
            env.step(&ActionTriple::append(argument.text))?;
        }
    }
    let result = env.step(&ActionTriple::execute())?;
    let annotation = result.info.expect("execute steps always carry an annotation");
    Ok(SessionOutcome {
        record: annotation.record,
        executions: env.executions() - before,
    })
}

fn worker_env(config: &CampaignConfig, cache: &Arc<TraceCache>) -> Result<ShellEnv, String> {
    let backend = make_backend(config.backend).map_err(|e| e.to_string())?;
    ShellEnv::with_cache(config.env_config(), backend, Arc::clone(cache)).map_err(|e| e.to_string())
}

#[derive(Clone, Debug, Serialize)]
pub struct ManifestShard {
    pub file: String,
    pub records: usize,
}

/// Reproducibility echo written as `campaign.json` and printed on stdout:
/// the full configuration plus outcome statistics that are a pure function
/// of it. Raw execution counts are deliberately absent — cache races across
/// workers make them run-dependent.
#[derive(Clone, Debug, Serialize)]
pub struct CampaignManifest {
    pub grammar: String,
    pub mode: String,
    pub samples: usize,
    pub budget: usize,
    pub max_args: usize,
    pub max_commands: usize,
    pub backend: String,
    pub seed: u64,
    pub score_filter: Option<[f64; 2]>,
    pub noise_traces: usize,
    pub records_written: usize,
    /// Mean irreducibility over the written records (0 when none).
    pub mean_irreducibility: f64,
    /// Distinct inputs executed, full sessions and scoring reductions both.
    pub unique_inputs: usize,
    pub shards: Vec<ManifestShard>,
}

pub struct CampaignSummary {
    pub manifest: CampaignManifest,
    /// Raw executions across all workers, noise calibration included.
    pub total_executions: u64,
    pub out_dir: PathBuf,
}

pub fn run_campaign(config: &CampaignConfig) -> Result<CampaignSummary, CampaignError> {
    config.validate()?;
    let grammar = load_grammar(config.grammar_path.as_deref())?;
    let commands = campaign_commands(&grammar)?;
    let cache = Arc::new(TraceCache::new());

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| CampaignError::Config(format!("worker pool: {e}")))?;
    let outcomes: Result<Vec<SessionOutcome>, CampaignError> = pool.install(|| {
        (0..config.samples as u64)
            .into_par_iter()
            .map_init(
                || worker_env(config, &cache),
                |env, index| match env {
                    Ok(env) => {
                        drive_session(env, &grammar, &commands, config.mode, config.seed, index)
                    }
                    Err(e) => Err(CampaignError::WorkerInit(e.clone())),
                },
            )
            .collect()
    });
    let outcomes = outcomes?;

    let total_executions: u64 = outcomes.iter().map(|o| o.executions).sum();
    let mut records: Vec<Record> = outcomes.into_iter().map(|o| o.record).collect();
    records.sort_by_key(|r| r.session_id);
    if let Some((lo, hi)) = config.score_filter {
        records.retain(|r| r.irreducibility >= lo && r.irreducibility <= hi);
    }
    let mean = if records.is_empty() {
        0.0
    } else {
        records.iter().map(|r| r.irreducibility).sum::<f64>() / records.len() as f64
    };

    let shards = write_records(&config.out_dir, &records)?;
    let manifest = CampaignManifest {
        grammar: config
            .grammar_path
            .as_ref()
            .map_or_else(|| "bundled".to_string(), |p| p.display().to_string()),
        mode: config.mode.to_string(),
        samples: config.samples,
        budget: config.budget,
        max_args: config.max_args,
        max_commands: config.max_commands,
        backend: config.backend.to_string(),
        seed: config.seed,
        score_filter: config.score_filter.map(|(lo, hi)| [lo, hi]),
        noise_traces: config.noise_traces,
        records_written: records.len(),
        mean_irreducibility: mean,
        unique_inputs: cache.len(),
        shards: shards
            .iter()
            .map(|s| ManifestShard {
                file: s
                    .path
                    .file_name()
                    .expect("shard paths carry file names")
                    .to_string_lossy()
                    .into_owned(),
                records: s.records,
            })
            .collect(),
    };
    let manifest_json =
        serde_json::to_string_pretty(&manifest).expect("manifests always serialize");
    std::fs::write(config.out_dir.join("campaign.json"), format!("{manifest_json}\n"))?;
    Ok(CampaignSummary {
        manifest,
        total_executions,
        out_dir: config.out_dir.clone(),
    })
}

/// Structural report for a parsed grammar: command bindings, symbol counts,
/// and one deterministic sample derivation per command.
#[derive(Clone, Debug, Serialize)]
pub struct GrammarReport {
    pub commands: BTreeMap<String, String>,
    pub nonterminals: usize,
    pub terminals: usize,
    pub productions: usize,
    pub samples: BTreeMap<String, String>,
}

pub fn describe_grammar(path: Option<&Path>) -> Result<GrammarReport, CampaignError> {
    let grammar = load_grammar(path)?;
    let mut samples = BTreeMap::new();
    for (command, start) in grammar.starts() {
        let sample = synthesize_argument(&grammar, start, SynthesisMode::Gcs, 0)?;
        samples.insert(command.clone(), sample.text);
    }
    Ok(GrammarReport {
        commands: grammar.starts().clone(),
        nonterminals: grammar.nonterminals().len(),
        terminals: grammar.terminals().len(),
        productions: grammar.productions().len(),
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base_config(out_dir: PathBuf) -> CampaignConfig {
        CampaignConfig {
            grammar_path: None,
            mode: SynthesisMode::Gcs,
            samples: 5,
            budget: 16,
            max_args: 6,
            max_commands: 3,
            backend: BackendKind::Sim,
            seed: 7,
            out_dir,
            score_filter: None,
            noise_traces: 3,
            workers: 2,
        }
    }

    #[test]
    fn config_rejections_name_the_offending_field() {
        let dir = tempfile::tempdir().unwrap();
        let ok = base_config(dir.path().to_path_buf());
        assert!(ok.validate().is_ok());

        let mut bad = ok.clone();
        bad.samples = 0;
        assert!(bad.validate().unwrap_err().to_string().contains("samples"));

        let mut bad = ok.clone();
        bad.max_commands = 1;
        assert!(bad
            .validate()
            .unwrap_err()
            .to_string()
            .contains("max_commands"));

        let mut bad = ok.clone();
        bad.score_filter = Some((0.8, 0.2));
        assert!(bad
            .validate()
            .unwrap_err()
            .to_string()
            .contains("score filter"));

        let mut bad = ok.clone();
        bad.score_filter = Some((-0.1, 0.5));
        assert!(bad.validate().is_err());

        let mut bad = ok;
        bad.budget = 0;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn mode_flag_values_parse_and_reject() {
        assert_eq!(parse_mode("gcs").unwrap(), SynthesisMode::Gcs);
        assert_eq!(parse_mode("ucs").unwrap(), SynthesisMode::Ucs);
        assert!(parse_mode("both").is_err());
    }

    #[test]
    fn missing_grammar_files_error_with_the_path() {
        let err = load_grammar(Some(Path::new("/nonexistent/toy.grammar"))).unwrap_err();
        assert_eq!(err.exit_code(), 1);
        assert!(err.to_string().contains("/nonexistent/toy.grammar"));
    }

    #[test]
    fn small_campaigns_repeat_byte_for_byte() {
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        let summary_a = run_campaign(&base_config(dir_a.path().to_path_buf())).unwrap();
        let mut config_b = base_config(dir_b.path().to_path_buf());
        config_b.workers = 1;
        let summary_b = run_campaign(&config_b).unwrap();

        assert_eq!(summary_a.manifest.records_written, 5);
        assert_eq!(summary_a.manifest.shards.len(), 1);
        // The manifest is independent of worker count…
        assert_eq!(
            serde_json::to_string(&summary_a.manifest).unwrap(),
            serde_json::to_string(&summary_b.manifest).unwrap()
        );
        // …and so are the shard bytes.
        let shard_a = std::fs::read(dir_a.path().join("records-00000.ndjson")).unwrap();
        let shard_b = std::fs::read(dir_b.path().join("records-00000.ndjson")).unwrap();
        assert_eq!(shard_a, shard_b);
        assert!(dir_a.path().join("campaign.json").exists());
    }

    #[test]
    fn score_filters_drop_written_records_only() {
        let dir = tempfile::tempdir().unwrap();
        let mut config = base_config(dir.path().to_path_buf());
        config.score_filter = Some((0.0, 0.0));
        let summary = run_campaign(&config).unwrap();
        // All sessions still ran; only the written set shrank.
        assert_eq!(summary.manifest.samples, 5);
        assert!(summary.manifest.records_written < 5);
        assert!(summary.total_executions > 0);
    }

    #[test]
    fn grammar_reports_cover_the_bundled_corpus() {
        let report = describe_grammar(None).unwrap();
        assert_eq!(report.commands.len(), 12);
        assert_eq!(report.commands["echo"], "echo_arg");
        assert!(report.productions > 0);
        // Argument-free commands sample the empty derivation.
        assert_eq!(report.samples["pwd"], "");
        assert!(report.samples.len() == report.commands.len());
    }
}
