//! Grammar-driven synthesis of shell inputs, execution against revertible
//! backends, and scoring of how much each argument contributes to observed
//! behavior.
//!
//! The pipeline has four stages, one module each, plus two supporting
//! modules:
//!
//! * [`grammar`] — per-command context-free grammars; each complete
//!   derivation of a command's start nonterminal yields one argument string.
//! * [`executor`] — snapshot/execute/revert backends: a deterministic
//!   in-memory shell and a disposable real-process sandbox, plus a
//!   campaign-wide execution cache.
//! * [`behavior`] — compact context patches, edit similarity over outputs,
//!   and the adaptive noise threshold that decides whether two executions
//!   count as the same behavior.
//! * [`irreducibility`] — Monte-Carlo (and exhaustive) estimation of the
//!   fraction of weighted argument ablations that change behavior.
//! * [`shellenv`] — a step/reset environment that assembles sessions from
//!   emitted arguments and annotates executed episodes with dataset records.
//! * [`dataset`] — NDJSON shard writing/reading and corpus statistics.

pub mod behavior;
pub mod dataset;
pub mod executor;
pub mod grammar;
pub mod irreducibility;
pub mod render;
pub mod seeds;
pub mod shellenv;

pub use behavior::{ContextPatch, NoiseProfile, PatchOp};
pub use executor::{ContextSnapshot, ExecutionTrace, ExecutorBackend, TraceCache};
pub use grammar::{Grammar, SynthesisMode};
pub use irreducibility::{IrreducibilityReport, ScoreMode, SessionReport};
pub use shellenv::{ActionTriple, EnvConfig, Observation, Session, ShellEnv, StepResult};
