//! Context-free grammars over shell-command arguments.
//!
//! A grammar file defines, per command, a start nonterminal whose complete
//! derivations each yield one argument string:
//!
//! ```text
//! %start df df_arg
//! df_arg ::= "-a" | out
//! out    ::= "--output=" <ns> field
//! field  ::= "source" | "target"
//! ```
//!
//! Terminals are double-quoted, nonterminals are bare identifiers, `<ns>` is
//! a standalone adjacency marker gluing its neighbours, `#` starts a comment,
//! and a newline or `;` ends a statement. Sampling always expands the
//! leftmost nonterminal; in [`SynthesisMode::Gcs`] only productions of that
//! nonterminal are admissible, while [`SynthesisMode::Ucs`] draws from every
//! production in the grammar regardless of its left-hand side.

mod parse;

use std::collections::BTreeMap;
use std::collections::BTreeSet;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::render;

/// Production applications allowed per argument before the rollout falls
/// back to forced cheapest-completion.
pub const DEPTH_GUARD: usize = 256;

#[derive(Debug, Error)]
pub enum GrammarError {
    #[error("syntax error at line {line}, column {col}: {msg}")]
    Syntax { line: usize, col: usize, msg: String },
    #[error("nonterminal `{name}` is referenced but has no productions")]
    UndefinedNonterminal { name: String },
    #[error("nonterminal `{name}` cannot derive a terminal-only string")]
    NonProductive { name: String },
    #[error("grammar defines no rules and no start symbol")]
    NoStartSymbol,
    #[error("terminal {text:?} at line {line} exceeds {limit} characters")]
    TerminalTooLong { line: usize, text: String, limit: usize },
    #[error("terminal {name:?} collides with a nonterminal of the same name")]
    VocabularyCollision { name: String },
}

/// One grammar symbol. Terminal text is stored as written, including any
/// `<ns>` adjacency markers at its edges; a bare `<ns>` token is represented
/// as a terminal whose marker-free text is empty.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Symbol {
    Terminal(String),
    Nonterminal(String),
}

impl Symbol {
    pub fn is_terminal(&self) -> bool {
        matches!(self, Symbol::Terminal(_))
    }

    pub fn name(&self) -> Option<&str> {
        match self {
            Symbol::Nonterminal(n) => Some(n),
            Symbol::Terminal(_) => None,
        }
    }
}

/// A rewrite rule `lhs -> rhs`. An empty `rhs` is an epsilon production.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Production {
    pub lhs: String,
    pub rhs: Vec<Symbol>,
}

/// A validated grammar: every referenced nonterminal has productions, every
/// nonterminal can reach a terminal-only yield, terminal texts stay within
/// the argument length cap, and terminal/nonterminal vocabularies are
/// disjoint.
#[derive(Clone, Debug)]
pub struct Grammar {
    nonterminals: BTreeSet<String>,
    terminals: BTreeSet<String>,
    starts: BTreeMap<String, String>,
    productions: Vec<Production>,
    by_lhs: BTreeMap<String, Vec<usize>>,
    /// Minimum number of production applications to expand each nonterminal
    /// to an all-terminal yield.
    min_depth: BTreeMap<String, usize>,
    /// Production index realising `min_depth` for each nonterminal.
    cheapest: BTreeMap<String, usize>,
}

/// Source of the toy command corpus bundled with the crate.
pub const BUNDLED_GRAMMAR: &str = include_str!("../../assets/toy.grammar");

impl Grammar {
    /// Parses and validates grammar source text.
    pub fn parse(source: &str) -> Result<Grammar, GrammarError> {
        parse::parse(source)
    }

    /// The toy command corpus bundled with the crate.
    pub fn bundled() -> Grammar {
        Grammar::parse(BUNDLED_GRAMMAR).expect("bundled grammar must be valid")
    }

    pub fn nonterminals(&self) -> &BTreeSet<String> {
        &self.nonterminals
    }

    pub fn terminals(&self) -> &BTreeSet<String> {
        &self.terminals
    }

    /// Command-to-start-nonterminal mapping declared with `%start`.
    pub fn starts(&self) -> &BTreeMap<String, String> {
        &self.starts
    }

    pub fn start_of(&self, command: &str) -> Option<&str> {
        self.starts.get(command).map(String::as_str)
    }

    pub fn productions(&self) -> &[Production] {
        &self.productions
    }

    /// Indices of the productions whose left-hand side is `nonterminal`.
    pub fn productions_of(&self, nonterminal: &str) -> &[usize] {
        self.by_lhs.get(nonterminal).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Minimum production applications to fully expand `nonterminal`.
    pub fn min_depth(&self, nonterminal: &str) -> Option<usize> {
        self.min_depth.get(nonterminal).copied()
    }

    fn cheapest_production(&self, nonterminal: &str) -> Option<usize> {
        self.cheapest.get(nonterminal).copied()
    }

    pub(crate) fn assemble(
        starts: BTreeMap<String, String>,
        productions: Vec<Production>,
        terminals: BTreeSet<String>,
    ) -> Result<Grammar, GrammarError> {
        if productions.is_empty() {
            return Err(GrammarError::NoStartSymbol);
        }
        let mut by_lhs: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (idx, p) in productions.iter().enumerate() {
            by_lhs.entry(p.lhs.clone()).or_default().push(idx);
        }
        let nonterminals: BTreeSet<String> = by_lhs.keys().cloned().collect();
        for p in &productions {
            for sym in &p.rhs {
                if let Symbol::Nonterminal(name) = sym {
                    if !nonterminals.contains(name) {
                        return Err(GrammarError::UndefinedNonterminal { name: name.clone() });
                    }
                }
            }
        }
        for (_, start) in &starts {
            if !nonterminals.contains(start) {
                return Err(GrammarError::UndefinedNonterminal { name: start.clone() });
            }
        }
        for term in &terminals {
            if nonterminals.contains(term) {
                return Err(GrammarError::VocabularyCollision { name: term.clone() });
            }
        }
        let (min_depth, cheapest) = compute_min_depth(&productions, &nonterminals)?;
        Ok(Grammar { nonterminals, terminals, starts, productions, by_lhs, min_depth, cheapest })
    }
}

/// Fixpoint over production costs: cost(nt) = min over its productions of
/// 1 + sum of costs of the nonterminals on the right-hand side. Nonterminals
/// without a finite cost cannot reach an all-terminal yield.
fn compute_min_depth(
    productions: &[Production],
    nonterminals: &BTreeSet<String>,
) -> Result<(BTreeMap<String, usize>, BTreeMap<String, usize>), GrammarError> {
    let mut cost: BTreeMap<String, usize> = BTreeMap::new();
    let mut cheapest: BTreeMap<String, usize> = BTreeMap::new();
    loop {
        let mut changed = false;
        for (idx, p) in productions.iter().enumerate() {
            let mut total: usize = 1;
            let mut complete = true;
            for sym in &p.rhs {
                if let Symbol::Nonterminal(name) = sym {
                    match cost.get(name) {
                        Some(c) => total = total.saturating_add(*c),
                        None => {
                            complete = false;
                            break;
                        }
                    }
                }
            }
            if complete && cost.get(&p.lhs).map_or(true, |c| total < *c) {
                cost.insert(p.lhs.clone(), total);
                cheapest.insert(p.lhs.clone(), idx);
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    for nt in nonterminals {
        if !cost.contains_key(nt) {
            return Err(GrammarError::NonProductive { name: nt.clone() });
        }
    }
    Ok((cost, cheapest))
}

/// How productions are drawn during a rollout.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SynthesisMode {
    /// Grammar-constrained: only productions of the leftmost nonterminal.
    Gcs,
    /// Unconstrained: any production, regardless of its left-hand side.
    Ucs,
}

impl std::fmt::Display for SynthesisMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SynthesisMode::Gcs => "gcs",
            SynthesisMode::Ucs => "ucs",
        })
    }
}

/// An in-progress derivation: the current symbol row, the number of
/// production applications so far, and the seed driving the sampler.
#[derive(Clone, Debug)]
pub struct DerivationState {
    pub row: Vec<Symbol>,
    pub steps_taken: usize,
    pub rng_seed: u64,
}

impl DerivationState {
    pub fn start(nonterminal: &str, rng_seed: u64) -> DerivationState {
        DerivationState {
            row: vec![Symbol::Nonterminal(nonterminal.to_string())],
            steps_taken: 0,
            rng_seed,
        }
    }

    pub fn is_complete(&self) -> bool {
        self.row.iter().all(Symbol::is_terminal)
    }
}

/// Index and name of the leftmost nonterminal in a symbol row, if any.
pub fn leftmost_nonterminal(row: &[Symbol]) -> Option<(usize, &str)> {
    row.iter().enumerate().find_map(|(i, s)| s.name().map(|n| (i, n)))
}

/// One recorded sampling decision: which nonterminal was replaced and which
/// production (global index) replaced it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DerivationStep {
    pub leftmost: String,
    pub production: usize,
}

/// Pluggable production-selection policy. The default draws uniformly from
/// the admissible set.
pub trait ProductionSampler {
    fn choose(&mut self, grammar: &Grammar, admissible: &[usize], rng: &mut ChaCha8Rng) -> usize;
}

#[derive(Clone, Copy, Debug, Default)]
pub struct UniformSampler;

impl ProductionSampler for UniformSampler {
    fn choose(&mut self, _grammar: &Grammar, admissible: &[usize], rng: &mut ChaCha8Rng) -> usize {
        admissible[rng.gen_range(0..admissible.len())]
    }
}

/// Expands the leftmost nonterminal until the row is all-terminal. After
/// [`DEPTH_GUARD`] applications the rollout stops sampling and force-completes
/// every remaining nonterminal along its cheapest path, so expansion always
/// terminates within the sum of the remaining minimum depths.
pub fn rollout_option(
    state: DerivationState,
    grammar: &Grammar,
    mode: SynthesisMode,
    sampler: &mut dyn ProductionSampler,
) -> Result<(DerivationState, Vec<DerivationStep>, bool), GrammarError> {
    let mut rng = ChaCha8Rng::seed_from_u64(state.rng_seed);
    let mut row = state.row;
    let mut steps_taken = state.steps_taken;
    let mut record = Vec::new();
    let mut forced = false;
    let all_indices: Vec<usize> = (0..grammar.productions().len()).collect();

    while let Some((idx, name)) = leftmost_nonterminal(&row) {
        let sampled = record.len();
        let production = if sampled < DEPTH_GUARD {
            let admissible = match mode {
                SynthesisMode::Gcs => grammar.productions_of(name),
                SynthesisMode::Ucs => &all_indices,
            };
            if admissible.is_empty() {
                return Err(GrammarError::UndefinedNonterminal { name: name.to_string() });
            }
            sampler.choose(grammar, admissible, &mut rng)
        } else {
            forced = true;
            grammar
                .cheapest_production(name)
                .ok_or_else(|| GrammarError::NonProductive { name: name.to_string() })?
        };
        let leftmost = name.to_string();
        let rhs = grammar.productions()[production].rhs.clone();
        row.splice(idx..=idx, rhs);
        steps_taken += 1;
        record.push(DerivationStep { leftmost, production });
    }

    Ok((DerivationState { row, steps_taken, rng_seed: state.rng_seed }, record, forced))
}

/// A fully derived argument: the assembled string (interior markers
/// resolved, outward edge markers preserved) plus the derivation record.
#[derive(Clone, Debug)]
pub struct SynthesizedArgument {
    pub text: String,
    pub steps: Vec<DerivationStep>,
    pub forced_completion: bool,
}

/// Derives one argument from `nonterminal` under the given mode and seed.
/// Deterministic for a fixed (grammar, nonterminal, mode, seed) tuple.
pub fn synthesize_argument(
    grammar: &Grammar,
    nonterminal: &str,
    mode: SynthesisMode,
    seed: u64,
) -> Result<SynthesizedArgument, GrammarError> {
    if grammar.productions_of(nonterminal).is_empty() {
        return Err(GrammarError::UndefinedNonterminal { name: nonterminal.to_string() });
    }
    let state = DerivationState::start(nonterminal, seed);
    let (done, steps, forced) = rollout_option(state, grammar, mode, &mut UniformSampler)?;
    let texts: Vec<&str> = done
        .row
        .iter()
        .map(|s| match s {
            Symbol::Terminal(t) => t.as_str(),
            Symbol::Nonterminal(_) => unreachable!("rollout returned an incomplete row"),
        })
        .collect();
    let text = render::assemble_argument(texts.iter().copied());
    Ok(SynthesizedArgument { text, steps, forced_completion: forced })
}

/// Replays a derivation record from `nonterminal`, checking that every step
/// rewrote the then-leftmost nonterminal with one of its own productions.
/// Returns the derived argument text. Used to confirm that
/// grammar-constrained outputs admit a derivation under the grammar.
pub fn replay_derivation(
    grammar: &Grammar,
    nonterminal: &str,
    steps: &[DerivationStep],
) -> Option<String> {
    let mut row = vec![Symbol::Nonterminal(nonterminal.to_string())];
    for step in steps {
        let (idx, name) = leftmost_nonterminal(&row)?;
        let production = grammar.productions().get(step.production)?;
        if name != step.leftmost || production.lhs != name {
            return None;
        }
        row.splice(idx..=idx, production.rhs.iter().cloned());
    }
    if row.iter().any(|s| !s.is_terminal()) {
        return None;
    }
    let texts: Vec<&str> = row
        .iter()
        .map(|s| match s {
            Symbol::Terminal(t) => t.as_str(),
            Symbol::Nonterminal(_) => unreachable!(),
        })
        .collect();
    Some(render::assemble_argument(texts.iter().copied()))
}
