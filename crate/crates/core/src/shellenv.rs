//! The episodic command-synthesis environment.
//!
//! A session is a small grid of string cells: up to `max_commands` command
//! rows of up to `max_args` cells each, with row 0 pre-initialized to
//! `("cd", c0)`. Actions either append one cell to the current row, open a
//! new row with one cell, or execute the rendered session. Execution is
//! terminal: the session runs against the backend, every command row is
//! scored for irreducibility with the opening row held fixed, and the step
//! returns the annotated result ready for dataset emission.
//!
//! Contract violations — executing while also appending or opening a row,
//! and oversized additions — are penalized and end the episode without
//! touching the executor. Horizon overruns end the episode as truncated
//! rather than penalized. Every episode therefore terminates within
//! `max_commands * max_args + 1` steps: each non-terminal step stores one
//! cell, and the grid is finite.

use std::ops::Range;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::behavior::ContextPatch;
use crate::dataset::Record;
use crate::executor::{execute_cached, ExecError, ExecutionTrace, ExecutorBackend, TraceCache};
use crate::irreducibility::{composite_irreducibility, NoiseConfig, SessionReport};
use crate::render;
use crate::seeds::derive_seed;

/// Environment limits and reward settings.
#[derive(Clone, Debug)]
pub struct EnvConfig {
    /// Global horizon: maximum command rows per session, opening row included.
    pub max_commands: usize,
    /// Local horizon: maximum cells per row, command token included.
    pub max_args: usize,
    /// Candidate starting directories for the opening `cd` row.
    pub start_dirs: Vec<String>,
    /// Longest accepted `input_addition`, counted in characters as stored.
    pub arg_max_len: usize,
    /// Subset budget for the terminal irreducibility estimate.
    pub subset_budget: usize,
    /// Executions of the full input used to calibrate the noise threshold.
    pub noise_traces: usize,
    /// Reward for contract-violating actions.
    pub invalid_penalty: f64,
    /// When false, the terminal execute step rewards 0 and the score is
    /// only recorded in the annotation.
    pub terminal_reward: bool,
}

impl Default for EnvConfig {
    fn default() -> EnvConfig {
        EnvConfig {
            max_commands: 4,
            max_args: 12,
            start_dirs: vec!["/home/ubuntu".to_string()],
            arg_max_len: 64,
            subset_budget: 64,
            noise_traces: 3,
            invalid_penalty: -10.0,
            terminal_reward: true,
        }
    }
}

#[derive(Debug, Error)]
#[error("invalid environment config: {0}")]
pub struct ConfigError(pub String);

impl EnvConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.max_commands < 1 {
            return Err(ConfigError("max_commands must be at least 1".into()));
        }
        if self.max_args < 2 {
            // Row 0 already holds ("cd", c0).
            return Err(ConfigError("max_args must be at least 2".into()));
        }
        if self.start_dirs.is_empty() {
            return Err(ConfigError("start_dirs must not be empty".into()));
        }
        if self.arg_max_len < 1 {
            return Err(ConfigError("arg_max_len must be at least 1".into()));
        }
        if self.subset_budget < 1 {
            return Err(ConfigError("subset_budget must be at least 1".into()));
        }
        if self.noise_traces < 2 {
            return Err(ConfigError("noise_traces must be at least 2".into()));
        }
        Ok(())
    }
}

/// The mutable session state: command rows plus the write cursor.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Session {
    /// Command rows; row 0 is the opening `("cd", c0)` row.
    pub rows: Vec<Vec<String>>,
    /// Index of the row receiving appends.
    pub h: usize,
    /// Index of the last filled cell in that row.
    pub l: usize,
    pub finished: bool,
}

impl Session {
    /// Builds a session directly from rows, cursor at the last cell. Rows
    /// must be non-empty; cell lengths are the caller's responsibility.
    pub fn from_rows(rows: Vec<Vec<String>>) -> Session {
        assert!(!rows.is_empty(), "a session has at least its opening row");
        assert!(
            rows.iter().all(|row| !row.is_empty()),
            "command rows are never empty"
        );
        let h = rows.len() - 1;
        let l = rows[h].len() - 1;
        Session {
            rows,
            h,
            l,
            finished: false,
        }
    }
}

/// Fixed-shape view of the session: a `max_commands` x `max_args` grid of
/// strings, padded with `""` beyond the filled cells.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Observation {
    pub grid: Vec<Vec<String>>,
}

/// One agent action: at most one of `exec_action` / `new_global` may be
/// set, and executing requires an empty addition. Violations are penalized
/// by `step`, not prevented by construction.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ActionTriple {
    pub input_addition: String,
    pub exec_action: bool,
    pub new_global: bool,
}

impl ActionTriple {
    /// Append one cell to the current command row.
    pub fn append(s: impl Into<String>) -> ActionTriple {
        ActionTriple {
            input_addition: s.into(),
            exec_action: false,
            new_global: false,
        }
    }

    /// Open a new command row whose first cell is `s`.
    pub fn new_row(s: impl Into<String>) -> ActionTriple {
        ActionTriple {
            input_addition: s.into(),
            exec_action: false,
            new_global: true,
        }
    }

    /// Execute the session as rendered.
    pub fn execute() -> ActionTriple {
        ActionTriple {
            input_addition: String::new(),
            exec_action: true,
            new_global: false,
        }
    }
}

/// Everything a terminal execute step produced.
#[derive(Clone, Debug)]
pub struct ExecutionAnnotation {
    pub trace: ExecutionTrace,
    pub patch: ContextPatch,
    pub report: SessionReport,
    /// Dataset-ready row for this episode.
    pub record: Record,
}

#[derive(Clone, Debug)]
pub struct StepResult {
    pub observation: Observation,
    pub reward: f64,
    pub done: bool,
    /// A horizon was hit: the filling append of a row, a refused append to
    /// a full row, or a refused row beyond the last. Only refusals also set
    /// `done`.
    pub truncated: bool,
    /// Populated exactly when this step executed the session.
    pub info: Option<ExecutionAnnotation>,
}

/// A session rendered for execution.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RenderedSession {
    /// The executable input string, adjacency markers resolved.
    pub input: String,
    /// Cells after the opening row, flattened, with a `;` token between
    /// rows that don't open with a connector. Markers are preserved.
    pub input_args: Vec<String>,
    /// Byte span of each `input_args` entry's marker-free text in `input`.
    pub spans: Vec<Range<usize>>,
}

/// The fixed opening statement of a rendered session.
pub fn session_preamble(c0: &str) -> String {
    format!("cd {c0};")
}

/// Renders the session rows into one executable string: cells joined with
/// marker-aware spacing, rows joined with `; ` unless a row opens with a
/// connector token, which then joins the rows itself.
pub fn render_session(session: &Session) -> RenderedSession {
    let mut tokens: Vec<&str> = Vec::new();
    let mut is_arg: Vec<bool> = Vec::new();
    for (i, row) in session.rows.iter().enumerate() {
        if let Some(sep) = render::row_separator(i, row) {
            tokens.push(sep);
            // The separator after the opening row belongs to the preamble.
            is_arg.push(i >= 2);
        }
        for cell in row {
            tokens.push(cell);
            is_arg.push(i >= 1);
        }
    }
    let rendered = render::join_tokens(tokens.iter().copied());
    let mut input_args = Vec::new();
    let mut spans = Vec::new();
    for ((token, span), keep) in tokens.iter().zip(rendered.spans).zip(is_arg) {
        if keep {
            input_args.push((*token).to_string());
            spans.push(span);
        }
    }
    RenderedSession {
        input: rendered.text,
        input_args,
        spans,
    }
}

/// The environment. One instance owns one backend and must not receive
/// interleaved `step` calls; independent instances may run concurrently and
/// may share a trace cache.
pub struct ShellEnv {
    config: EnvConfig,
    backend: Box<dyn ExecutorBackend>,
    cache: Arc<TraceCache>,
    session: Session,
    episode_seed: u64,
}

impl ShellEnv {
    pub fn new(
        config: EnvConfig,
        backend: Box<dyn ExecutorBackend>,
    ) -> Result<ShellEnv, ConfigError> {
        ShellEnv::with_cache(config, backend, Arc::new(TraceCache::new()))
    }

    /// Like [`ShellEnv::new`] but sharing `cache` with other instances, so
    /// identical inputs across concurrent episodes execute once.
    pub fn with_cache(
        config: EnvConfig,
        backend: Box<dyn ExecutorBackend>,
        cache: Arc<TraceCache>,
    ) -> Result<ShellEnv, ConfigError> {
        config.validate()?;
        let mut env = ShellEnv {
            config,
            backend,
            cache,
            session: Session::from_rows(vec![vec!["cd".to_string(), "/".to_string()]]),
            episode_seed: 0,
        };
        env.reset(0);
        Ok(env)
    }

    /// Starts a fresh episode: row 0 becomes `("cd", c0)` with `c0` drawn
    /// seeded-uniformly from the configured start directories. Backends
    /// execute every input from their pristine snapshot, so no explicit
    /// revert is needed here. The seed also becomes the episode's session
    /// id and drives the terminal estimator.
    pub fn reset(&mut self, seed: u64) -> Observation {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c0 = self.config.start_dirs[rng.gen_range(0..self.config.start_dirs.len())].clone();
        self.session = Session::from_rows(vec![vec!["cd".to_string(), c0]]);
        self.episode_seed = seed;
        self.observation()
    }

    pub fn observation(&self) -> Observation {
        let mut grid = vec![vec![String::new(); self.config.max_args]; self.config.max_commands];
        for (i, row) in self.session.rows.iter().enumerate() {
            for (j, cell) in row.iter().enumerate() {
                grid[i][j] = cell.clone();
            }
        }
        Observation { grid }
    }

    pub fn session(&self) -> &Session {
        &self.session
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn cache(&self) -> &Arc<TraceCache> {
        &self.cache
    }

    /// Total executions the backend has performed.
    pub fn executions(&self) -> u64 {
        self.backend.executions()
    }

    /// Applies one action. Backend failures surface as errors, distinct
    /// from the in-band penalty for contract violations.
    ///
    /// # Panics
    ///
    /// Panics when called after the episode finished; call [`reset`] first.
    ///
    /// [`reset`]: ShellEnv::reset
    pub fn step(&mut self, action: &ActionTriple) -> Result<StepResult, ExecError> {
        assert!(
            !self.session.finished,
            "step called on a finished episode"
        );
        let addition = &action.input_addition;
        let invalid = (action.exec_action && action.new_global)
            || (action.exec_action && !addition.is_empty())
            || addition.chars().count() > self.config.arg_max_len;
        if invalid {
            self.session.finished = true;
            return Ok(StepResult {
                observation: self.observation(),
                reward: self.config.invalid_penalty,
                done: true,
                truncated: false,
                info: None,
            });
        }

        if action.exec_action {
            return self.execute_episode();
        }

        if action.new_global {
            if self.session.rows.len() == self.config.max_commands {
                // No row left to open: the global horizon truncates the
                // episode without mutating the session.
                self.session.finished = true;
                return Ok(self.silent(true, true));
            }
            self.session.rows.push(vec![addition.clone()]);
            self.session.h += 1;
            self.session.l = 0;
            return Ok(self.silent(false, false));
        }

        if self.session.rows[self.session.h].len() == self.config.max_args {
            // The local horizon only blocks further plain appends; it was
            // already signalled when the row filled.
            self.session.finished = true;
            return Ok(self.silent(true, true));
        }
        let row = &mut self.session.rows[self.session.h];
        row.push(addition.clone());
        self.session.l = row.len() - 1;
        let filled = row.len() == self.config.max_args;
        Ok(self.silent(false, filled))
    }

    fn silent(&self, done: bool, truncated: bool) -> StepResult {
        StepResult {
            observation: self.observation(),
            reward: 0.0,
            done,
            truncated,
            info: None,
        }
    }

    fn execute_episode(&mut self) -> Result<StepResult, ExecError> {
        self.session.finished = true;
        let rendered = render_session(&self.session);
        let noise = NoiseConfig {
            traces: self.config.noise_traces,
        };
        let report = composite_irreducibility(
            self.backend.as_mut(),
            &self.cache,
            &self.session,
            self.config.subset_budget,
            derive_seed(self.episode_seed, 1),
            &noise,
        )?;
        let trace = execute_cached(self.backend.as_mut(), &self.cache, &rendered.input)?;
        let patch = self
            .cache
            .get(&rendered.input)
            .expect("the full input was just executed")
            .patch
            .clone();
        let record = Record {
            session_id: self.episode_seed,
            input: rendered.input,
            input_args: rendered.input_args,
            exit_code: trace.exit_code,
            output: trace.output.clone(),
            context_patch: serde_json::to_string(&patch).expect("patches always serialize"),
            irreducibility: report.summary,
            command_scores: Some(report.per_command.iter().map(|r| r.score).collect()),
        };
        let reward = if self.config.terminal_reward {
            report.summary
        } else {
            0.0
        };
        Ok(StepResult {
            observation: self.observation(),
            reward,
            done: true,
            truncated: false,
            info: Some(ExecutionAnnotation {
                trace,
                patch,
                report,
                record,
            }),
        })
    }
}
