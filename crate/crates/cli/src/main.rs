use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use cmdsynth_cli::budget::{overall_by_budget, run_budget_eval, BudgetConfig};
use cmdsynth_cli::campaign::{
    describe_grammar, parse_mode, run_campaign, BackendKind, CampaignConfig, CampaignError,
};
use cmdsynth_cli::stats::{run_stats, StatsConfig};
use cmdsynth_core::grammar::SynthesisMode;

/// Grammar-driven shell-input synthesis with execution-annotated scoring.
#[derive(Parser)]
#[command(name = "cmdsynth", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a synthesis campaign and write NDJSON record shards.
    Synth(SynthArgs),
    /// Measure budgeted-estimate accuracy against the exhaustive oracle.
    EvalBudget(EvalBudgetArgs),
    /// Aggregate irreducibility statistics over written shards.
    Stats(StatsArgs),
    /// Parse a grammar and report its structure.
    ValidateGrammar(ValidateGrammarArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Synthesis mode: `gcs` (grammar-constrained) or `ucs` (unconstrained).
    #[arg(long, value_parser = parse_mode)]
    mode: SynthesisMode,
    /// Sessions to run (one record each, before filtering).
    #[arg(long)]
    samples: usize,
    /// Directory receiving the record shards and campaign.json.
    #[arg(long)]
    out_dir: PathBuf,
    /// Grammar file; omit for the bundled toy corpus.
    #[arg(long)]
    grammar: Option<PathBuf>,
    /// Subset budget for the terminal irreducibility estimate.
    #[arg(long, default_value_t = 64)]
    budget: usize,
    /// Maximum cells per command row.
    #[arg(long, default_value_t = 12)]
    max_args: usize,
    /// Maximum command rows per session, opening `cd` row included.
    #[arg(long, default_value_t = 4)]
    max_commands: usize,
    /// Execution backend; `sandbox` runs real processes and must be named
    /// explicitly.
    #[arg(long, value_enum, default_value_t = BackendKind::Sim)]
    backend: BackendKind,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Keep only records scoring within [LO, HI].
    #[arg(long, num_args = 2, value_names = ["LO", "HI"])]
    score_filter: Option<Vec<f64>>,
    /// Repeat executions behind each noise threshold.
    #[arg(long, default_value_t = 3)]
    noise_traces: usize,
    /// Worker threads; 0 means one per core.
    #[arg(long, default_value_t = 0)]
    workers: usize,
}

#[derive(Args)]
struct EvalBudgetArgs {
    /// Subset budgets to measure (repeat the flag or comma-separate).
    #[arg(long, required = true, value_delimiter = ',')]
    budgets: Vec<usize>,
    /// Scored inputs in the pool.
    #[arg(long, default_value_t = 200)]
    inputs: usize,
    /// Synthesis mode for the pooled inputs.
    #[arg(long, value_parser = parse_mode, default_value = "gcs")]
    mode: SynthesisMode,
    /// Grammar file; omit for the bundled toy corpus.
    #[arg(long)]
    grammar: Option<PathBuf>,
    /// Smallest argument count accepted into the pool.
    #[arg(long, default_value_t = 2)]
    min_args: usize,
    /// Largest argument count accepted into the pool (exhaustive-oracle
    /// cap: 12).
    #[arg(long, default_value_t = 8)]
    max_args: usize,
    #[arg(long, value_enum, default_value_t = BackendKind::Sim)]
    backend: BackendKind,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 3)]
    noise_traces: usize,
    /// Write the CSV here as well as to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct StatsArgs {
    /// Records to read: a directory, a file, or a wildcard pattern.
    #[arg(long)]
    records: String,
    /// Keep records with irreducibility >= this.
    #[arg(long)]
    score_min: Option<f64>,
    /// Keep records with irreducibility <= this.
    #[arg(long)]
    score_max: Option<f64>,
    /// Tag echoed into the emitted rows.
    #[arg(long)]
    label: Option<String>,
    /// Print JSON instead of CSV.
    #[arg(long)]
    json: bool,
    /// Also write stats.csv and stats.json into this directory.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct ValidateGrammarArgs {
    /// Grammar file; omit to inspect the bundled toy corpus.
    #[arg(long)]
    grammar: Option<PathBuf>,
}

fn main() {
    // Stdout carries data meant for pipelines; dying quietly when the
    // reader closes early (`cmdsynth … | head`) beats a panic on EPIPE.
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = if matches!(
                err.kind(),
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
            ) {
                0
            } else {
                1
            };
            let _ = err.print();
            std::process::exit(code);
        }
    };
    let result = match cli.command {
        Command::Synth(args) => cmd_synth(args),
        Command::EvalBudget(args) => cmd_eval_budget(args),
        Command::Stats(args) => cmd_stats(args),
        Command::ValidateGrammar(args) => cmd_validate_grammar(args),
    };
    if let Err(err) = result {
        eprintln!("cmdsynth: {err}");
        std::process::exit(err.exit_code());
    }
}

fn cmd_synth(args: SynthArgs) -> Result<(), CampaignError> {
    let score_filter = match args.score_filter.as_deref() {
        None => None,
        Some([lo, hi]) => Some((*lo, *hi)),
        Some(other) => {
            return Err(CampaignError::Config(format!(
                "--score-filter takes exactly two values, got {}",
                other.len()
            )))
        }
    };
    let config = CampaignConfig {
        grammar_path: args.grammar,
        mode: args.mode,
        samples: args.samples,
        budget: args.budget,
        max_args: args.max_args,
        max_commands: args.max_commands,
        backend: args.backend,
        seed: args.seed,
        out_dir: args.out_dir,
        score_filter,
        noise_traces: args.noise_traces,
        workers: args.workers,
    };
    let summary = run_campaign(&config)?;
    println!(
        "{}",
        serde_json::to_string_pretty(&summary.manifest).expect("manifests always serialize")
    );
    eprintln!(
        "synth: {} sessions -> {} records written (mean irreducibility {:.4})",
        summary.manifest.samples,
        summary.manifest.records_written,
        summary.manifest.mean_irreducibility
    );
    eprintln!(
        "synth: {} unique inputs executed ({} raw executions incl. noise calibration)",
        summary.manifest.unique_inputs, summary.total_executions
    );
    eprintln!(
        "synth: wrote {} shard(s) + campaign.json under {}",
        summary.manifest.shards.len(),
        summary.out_dir.display()
    );
    Ok(())
}

fn cmd_eval_budget(args: EvalBudgetArgs) -> Result<(), CampaignError> {
    let config = BudgetConfig {
        grammar_path: args.grammar,
        mode: args.mode,
        inputs: args.inputs,
        budgets: args.budgets,
        min_args: args.min_args,
        max_args: args.max_args,
        backend: args.backend,
        seed: args.seed,
        noise_traces: args.noise_traces,
    };
    let outcome = run_budget_eval(&config)?;
    print!("{}", outcome.csv);
    if let Some(path) = args.out {
        std::fs::write(&path, &outcome.csv)?;
        eprintln!("eval-budget: wrote {}", path.display());
    }
    eprintln!(
        "eval-budget: {} inputs with {}..={} arguments, {} unique inputs executed ({} raw)",
        config.inputs, config.min_args, config.max_args, outcome.unique_inputs, outcome.executions
    );
    for (budget, mae) in overall_by_budget(&outcome.rows) {
        eprintln!("eval-budget: MAE at budget {budget}: {mae:.4}");
    }
    Ok(())
}

fn cmd_stats(args: StatsArgs) -> Result<(), CampaignError> {
    let config = StatsConfig {
        records: args.records,
        score_min: args.score_min,
        score_max: args.score_max,
        label: args.label,
    };
    let outcome = run_stats(&config)?;
    if args.json {
        println!("{}", outcome.json);
    } else {
        print!("{}", outcome.csv);
    }
    if let Some(dir) = args.out_dir {
        std::fs::create_dir_all(&dir)?;
        std::fs::write(dir.join("stats.csv"), &outcome.csv)?;
        std::fs::write(dir.join("stats.json"), format!("{}\n", outcome.json))?;
        eprintln!("stats: wrote stats.csv and stats.json under {}", dir.display());
    }
    eprintln!(
        "stats: kept {} of {} records across {} argument-count bucket(s)",
        outcome.stats.total_records,
        outcome.records_read,
        outcome.stats.by_n_args.len()
    );
    Ok(())
}

fn cmd_validate_grammar(args: ValidateGrammarArgs) -> Result<(), CampaignError> {
    let report = describe_grammar(args.grammar.as_deref())?;
    println!(
        "{}",
        serde_json::to_string_pretty(&report).expect("reports always serialize")
    );
    if report.commands.is_empty() {
        eprintln!("validate-grammar: warning: no %start bindings, so synth cannot use this grammar");
    }
    eprintln!(
        "validate-grammar: OK ({} command(s), {} nonterminal(s), {} production(s))",
        report.commands.len(),
        report.nonterminals,
        report.productions
    );
    Ok(())
}
