//! `prefsel` command-line tool.
//!
//! ```text
//! prefsel select   --input pools.jsonl --embeddings emb.bin --output sel.jsonl
//! prefsel annotate --input pools.jsonl --scores rewards.jsonl --selection sel.jsonl --output prefs.jsonl
//! prefsel metrics  --input pools.jsonl --embeddings emb.bin --selection sel.jsonl --report report.txt
//! prefsel pipeline --input pools.jsonl --embeddings emb.bin --scores rewards.jsonl --output prefs.jsonl
//! prefsel serve    --input pools.jsonl --selection sel.jsonl --journal session.jsonl --output prefs.jsonl
//! ```

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};

use prefsel::annotation::BudgetMode;
use prefsel::config::RunConfig;
use prefsel::distance::DistanceKind;
use prefsel::pipeline::{run_annotate, run_metrics, run_pipeline, run_select};
use prefsel::selection::{Solver, StrategyKind, DEFAULT_ENUMERATION_CAP};
use prefsel::service::run_serve;
use prefsel::{Error, Result};

#[derive(Parser)]
#[command(name = "prefsel", version, about = "Select, annotate and report on response subsets for preference data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Choose the responses to annotate for every instruction.
    Select(Shared),
    /// Label an existing selection file.
    Annotate(Shared),
    /// Report diversity, representativeness and reward for a selection.
    Metrics {
        #[command(flatten)]
        shared: Shared,
        /// Preference file built from the selection (adds distinct-n and reward columns).
        #[arg(long)]
        preferences: Option<PathBuf>,
    },
    /// Select, annotate and report in one run.
    Pipeline(Shared),
    /// Serve the interactive annotation session.
    Serve(Shared),
}

#[derive(Clone, Copy, ValueEnum)]
enum StrategyArg {
    Aepo,
    Random,
    Won,
    Coreset,
    Perplexity,
}

#[derive(Clone, Copy, ValueEnum)]
enum DistanceArg {
    Cosine,
    Ngram,
}

#[derive(Clone, Copy, ValueEnum)]
enum SolverArg {
    Exact,
    Greedy,
}

#[derive(Clone, Copy, ValueEnum)]
enum BudgetArg {
    Matched,
    Unconstrained,
}

#[derive(Args)]
struct Shared {
    /// Candidate pools, one JSON record per instruction.
    #[arg(long)]
    input: PathBuf,
    /// Response embeddings (JSON lines or the binary sidecar format).
    #[arg(long)]
    embeddings: Option<PathBuf>,
    /// Reward scores used as the judgment source.
    #[arg(long)]
    scores: Option<PathBuf>,
    /// Per-response perplexities for `--strategy perplexity`.
    #[arg(long)]
    perplexities: Option<PathBuf>,
    /// Selection file (select), preference file (annotate, pipeline, serve).
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    report: Option<PathBuf>,
    /// Selection file to read (annotate, metrics, serve) or write (pipeline).
    #[arg(long)]
    selection: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "aepo")]
    strategy: StrategyArg,
    #[arg(long, value_enum, default_value = "cosine")]
    distance: DistanceArg,
    /// Highest n-gram order for `--distance ngram`.
    #[arg(long, default_value_t = 4)]
    max_n: usize,
    #[arg(long, default_value_t = 2)]
    k: usize,
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    /// Run every lambda in {0, 0.5, 1, 2}.
    #[arg(long)]
    lambda_sweep: bool,
    /// Keep only the first N responses of every pool.
    #[arg(long)]
    n_cap: Option<usize>,
    /// Defaults to exact whenever C(N, k) fits under the enumeration cap.
    #[arg(long, value_enum)]
    solver: Option<SolverArg>,
    #[arg(long, default_value_t = DEFAULT_ENUMERATION_CAP)]
    enumeration_cap: u128,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "matched")]
    budget: BudgetArg,
    /// Base URL of a reward service exposing POST /score.
    #[arg(long)]
    scorer_url: Option<String>,
    /// Per-request timeout for the reward service, in seconds.
    #[arg(long, default_value_t = 30)]
    scorer_timeout: u64,
    /// Append-only judgment journal for interactive annotation.
    #[arg(long)]
    journal: Option<PathBuf>,
    /// Directory of static UI assets to serve.
    #[arg(long)]
    assets: Option<PathBuf>,
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value_t = 4)]
    concurrency: usize,
}

impl Shared {
    fn config(&self) -> RunConfig {
        RunConfig {
            strategy: match self.strategy {
                StrategyArg::Aepo => StrategyKind::Aepo,
                StrategyArg::Random => StrategyKind::Random,
                StrategyArg::Won => StrategyKind::Won,
                StrategyArg::Coreset => StrategyKind::Coreset,
                StrategyArg::Perplexity => StrategyKind::Perplexity,
            },
            distance: match self.distance {
                DistanceArg::Cosine => DistanceKind::Cosine,
                DistanceArg::Ngram => DistanceKind::Ngram { max_n: self.max_n },
            },
            k: self.k,
            lambda: self.lambda,
            lambda_sweep: self.lambda_sweep,
            n_cap: self.n_cap,
            solver: self.solver.map(|s| match s {
                SolverArg::Exact => Solver::Exact,
                SolverArg::Greedy => Solver::Greedy,
            }),
            enumeration_cap: self.enumeration_cap,
            seed: self.seed,
            budget: match self.budget {
                BudgetArg::Matched => BudgetMode::Matched,
                BudgetArg::Unconstrained => BudgetMode::Unconstrained,
            },
            input: self.input.clone(),
            embeddings: self.embeddings.clone(),
            scores: self.scores.clone(),
            perplexities: self.perplexities.clone(),
            output: self.output.clone().unwrap_or_default(),
            selection: self.selection.clone(),
            report: self.report.clone(),
            scorer_url: self.scorer_url.clone(),
            scorer_timeout: Duration::from_secs(self.scorer_timeout),
            journal: self.journal.clone(),
            assets: self.assets.clone(),
            port: self.port,
            concurrency: self.concurrency,
        }
    }
}

fn require_output(config: &RunConfig) -> Result<()> {
    if config.output.as_os_str().is_empty() {
        return Err(Error::Config("--output is required".into()));
    }
    Ok(())
}

fn require_selection(config: &RunConfig) -> Result<PathBuf> {
    config
        .selection
        .clone()
        .ok_or_else(|| Error::Config("--selection is required".into()))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Select(shared) => {
            let config = shared.config();
            require_output(&config)?;
            let records = run_select(&config)?;
            println!(
                "selected {} instructions -> {} (config {})",
                records.len(),
                config.output.display(),
                config.hash()
            );
        }
        Command::Annotate(shared) => {
            let config = shared.config();
            require_output(&config)?;
            let selection = require_selection(&config)?;
            let summary = run_annotate(&config, &selection)?;
            println!("{summary}");
        }
        Command::Metrics { shared, preferences } => {
            let config = shared.config();
            let selection = require_selection(&config)?;
            let report = run_metrics(&config, &selection, preferences.as_deref())?;
            print!("{}", report.to_table());
        }
        Command::Pipeline(shared) => {
            let config = shared.config();
            require_output(&config)?;
            let out = run_pipeline(&config)?;
            for run in &out.runs {
                if let Some(l) = run.lambda {
                    println!("lambda {l}: {}", run.preference_path.display());
                }
                println!("{}", run.summary);
            }
            print!("{}", out.report.to_table());
            println!("report: {}", out.report_path.display());
        }
        Command::Serve(shared) => run_serve(&shared.config())?,
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::FAILURE
        }
    }
}
