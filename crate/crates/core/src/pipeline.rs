//! End-to-end runs over a corpus: select, annotate, report.
//!
//! Each stage persists its output so later stages (or a human annotator days
//! later) can pick up from the file. The selection file is the single source of
//! truth for which responses get annotated.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::annotation::{
    annotate_with_remote, annotate_with_table, budget_plan, enqueue_human_task, BudgetLedger,
    BudgetMode, BudgetPlan, HttpScorer, RetryPolicy, Session,
};
use crate::config::RunConfig;
use crate::dataset::{
    load_candidates, load_embeddings, load_scores, read_records, write_preferences, write_records,
    CandidatePool, EmbeddingSet, PreferencePair, ScoreKind, ScoreTable,
};
use crate::distance::{build_distance_matrix, DistanceMatrix};
use crate::error::{Error, Result};
use crate::metrics::{dataset_report, DatasetReport, ReportEntry};
use crate::selection::{
    binomial, select_coreset, select_exact_capped, select_greedy, select_perplexity_pair,
    select_random, select_won, SelectionResult, Solver, StrategyKind, LAMBDA_GRID,
};
use crate::stable_hash;

/// Loaded inputs, truncated to the configured pool size.
pub struct Corpus {
    pub pools: Vec<CandidatePool>,
    pub embeddings: Option<BTreeMap<String, EmbeddingSet>>,
    pub rewards: Option<BTreeMap<String, ScoreTable>>,
    pub perplexities: Option<BTreeMap<String, ScoreTable>>,
}

impl Corpus {
    pub fn load(config: &RunConfig) -> Result<Self> {
        let mut pools = load_candidates(&config.input)?;
        let mut embeddings = config
            .embeddings
            .as_ref()
            .map(|p| load_embeddings(p, &pools))
            .transpose()?;
        let mut rewards = config
            .scores
            .as_ref()
            .map(|p| load_scores(p, &pools, ScoreKind::Reward))
            .transpose()?;
        let mut perplexities = config
            .perplexities
            .as_ref()
            .map(|p| load_scores(p, &pools, ScoreKind::Perplexity))
            .transpose()?;
        if let Some(cap) = config.n_cap {
            pools.iter_mut().for_each(|p| p.truncate(cap));
            for set in embeddings.iter_mut().flat_map(|m| m.values_mut()) {
                set.truncate(cap);
            }
            for t in rewards
                .iter_mut()
                .chain(perplexities.iter_mut())
                .flat_map(|m| m.values_mut())
            {
                t.truncate(cap);
            }
        }
        Ok(Self {
            pools,
            embeddings,
            rewards,
            perplexities,
        })
    }

    pub fn pool(&self, id: &str) -> Option<&CandidatePool> {
        self.pools.iter().find(|p| p.id() == id)
    }

    pub fn matrix(&self, pool: &CandidatePool, config: &RunConfig) -> Result<DistanceMatrix> {
        let emb = match config.distance {
            crate::distance::DistanceKind::Cosine => Some(
                self.embeddings
                    .as_ref()
                    .and_then(|m| m.get(pool.id()))
                    .ok_or_else(|| Error::MissingId(pool.id().to_string()))?,
            ),
            crate::distance::DistanceKind::Ngram { .. } => None,
        };
        build_distance_matrix(pool, config.distance, emb)
    }
}

/// One line of a selection file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionRecord {
    pub id: String,
    pub strategy: StrategyKind,
    pub solver: Solver,
    pub indices: Vec<usize>,
    pub lambda: Option<f64>,
    pub f_rep: Option<f64>,
    pub f_div: Option<f64>,
    pub objective: Option<f64>,
    pub config_hash: String,
}

impl SelectionRecord {
    fn from_result(id: &str, r: &SelectionResult, config_hash: &str) -> Self {
        Self {
            id: id.to_string(),
            strategy: r.strategy,
            solver: r.solver,
            indices: r.indices.clone(),
            lambda: r.lambda(),
            f_rep: r.breakdown.map(|b| b.f_rep),
            f_div: r.breakdown.map(|b| b.f_div),
            objective: r.breakdown.map(|b| b.objective),
            config_hash: config_hash.to_string(),
        }
    }

    pub fn to_result(&self) -> SelectionResult {
        let mut r = SelectionResult {
            strategy: self.strategy,
            solver: self.solver,
            indices: self.indices.clone(),
            breakdown: None,
        };
        if let (Some(f_rep), Some(f_div)) = (self.f_rep, self.f_div) {
            let lambda = self.lambda.unwrap_or(0.0);
            r.breakdown = Some(crate::selection::ObjectiveBreakdown {
                f_rep,
                f_div,
                lambda,
                objective: self.objective.unwrap_or(f_rep + lambda * f_div),
            });
        }
        r
    }
}

pub fn load_selections(path: impl AsRef<Path>) -> Result<Vec<SelectionRecord>> {
    Ok(read_records(path.as_ref())?
        .into_iter()
        .map(|(_, r)| r)
        .collect())
}

pub fn write_selections(records: &[SelectionRecord], path: impl AsRef<Path>) -> Result<()> {
    write_records(path.as_ref(), records)
}

fn thread_pool(config: &RunConfig) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(config.concurrency)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))
}

/// The uniform pool size, required for budget-matched West-of-N.
fn uniform_n(pools: &[CandidatePool]) -> Result<usize> {
    let n = pools.first().map_or(0, CandidatePool::len);
    if let Some(p) = pools.iter().find(|p| p.len() != n) {
        return Err(Error::Budget(format!(
            "budget planning needs equal pool sizes; `{}` has {} responses, expected {n}",
            p.id(),
            p.len()
        )));
    }
    Ok(n)
}

/// Annotation plan for the corpus.
pub fn plan_for(config: &RunConfig, pools: &[CandidatePool]) -> Result<BudgetPlan> {
    match config.strategy {
        StrategyKind::Won => budget_plan(
            StrategyKind::Won,
            uniform_n(pools)?,
            config.k,
            pools.len(),
            config.budget,
        ),
        s => {
            let min_n = pools.iter().map(CandidatePool::len).min().unwrap_or(0);
            budget_plan(s, min_n.max(2), config.k, pools.len(), config.budget)
        }
    }
}

/// Positions of the pools the strategy will use. Budget-matched West-of-N takes
/// a seeded uniform sample of instructions, kept in file order.
pub fn instructions_to_use(config: &RunConfig, pools: &[CandidatePool]) -> Result<Vec<usize>> {
    let plan = plan_for(config, pools)?;
    if config.strategy == StrategyKind::Won && config.budget == BudgetMode::Matched {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut picked =
            rand::seq::index::sample(&mut rng, pools.len(), plan.instructions as usize).into_vec();
        picked.sort_unstable();
        return Ok(picked);
    }
    Ok((0..pools.len()).collect())
}

/// Runs the configured strategy on one pool.
pub fn select_one(
    config: &RunConfig,
    corpus: &Corpus,
    pool: &CandidatePool,
    matrix: &DistanceMatrix,
) -> Result<SelectionResult> {
    let n = pool.len();
    let result = match config.strategy {
        StrategyKind::Aepo => {
            let exact_fits = binomial(n, config.k) <= config.enumeration_cap;
            match config.solver {
                Some(Solver::Greedy) => select_greedy(matrix, config.k, config.lambda)?,
                None if !exact_fits => select_greedy(matrix, config.k, config.lambda)?,
                _ => select_exact_capped(matrix, config.k, config.lambda, config.enumeration_cap)?,
            }
        }
        StrategyKind::Random => {
            if config.k > n {
                return Err(Error::InvalidSelection(format!(
                    "`{}`: k = {} exceeds N = {n}",
                    pool.id(),
                    config.k
                )));
            }
            select_random(n, config.k, config.seed ^ stable_hash(pool.id()))?
        }
        StrategyKind::Won => select_won(n)?,
        StrategyKind::Coreset => select_coreset(matrix, config.k)?,
        StrategyKind::Perplexity => {
            let table = corpus
                .perplexities
                .as_ref()
                .and_then(|m| m.get(pool.id()))
                .ok_or_else(|| Error::MissingId(pool.id().to_string()))?;
            select_perplexity_pair(table)?
        }
    };
    match result.breakdown {
        Some(_) => Ok(result),
        None => result.with_breakdown(matrix, config.lambda),
    }
}

/// Selections (with their matrices) for every pool the strategy uses.
pub fn select_corpus(
    config: &RunConfig,
    corpus: &Corpus,
) -> Result<Vec<(SelectionRecord, DistanceMatrix)>> {
    let positions = instructions_to_use(config, &corpus.pools)?;
    let hash = config.hash();
    thread_pool(config)?.install(|| {
        positions
            .par_iter()
            .map(|&pos| {
                let pool = &corpus.pools[pos];
                let matrix = corpus.matrix(pool, config)?;
                let result = select_one(config, corpus, pool, &matrix)?;
                result.validate(pool.len())?;
                Ok((SelectionRecord::from_result(pool.id(), &result, &hash), matrix))
            })
            .collect()
    })
}

/// `select` subcommand: writes one selection record per used instruction.
pub fn run_select(config: &RunConfig) -> Result<Vec<SelectionRecord>> {
    config.validate()?;
    let corpus = Corpus::load(config)?;
    let records: Vec<SelectionRecord> = select_corpus(config, &corpus)?
        .into_iter()
        .map(|(r, _)| r)
        .collect();
    write_selections(&records, &config.output)?;
    Ok(records)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotateSummary {
    pub config_hash: String,
    pub source: String,
    pub instructions: usize,
    pub planned_annotations: u64,
    pub consumed_annotations: u64,
    pub failures: Vec<(String, String)>,
    pub pending_tasks: usize,
    pub seed: u64,
    pub timestamp: u64,
}

impl std::fmt::Display for AnnotateSummary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "source:        {}", self.source)?;
        writeln!(f, "#insts:        {}", self.instructions)?;
        writeln!(
            f,
            "#annots:       {} (planned {})",
            self.consumed_annotations, self.planned_annotations
        )?;
        writeln!(f, "failures:      {}", self.failures.len())?;
        for (id, why) in &self.failures {
            writeln!(f, "  dropped {id}: {why}")?;
        }
        if self.pending_tasks > 0 {
            writeln!(f, "pending tasks: {}", self.pending_tasks)?;
        }
        write!(f, "config hash:   {}", self.config_hash)
    }
}

fn resolve_selections<'a>(
    corpus: &'a Corpus,
    records: &[SelectionRecord],
) -> Result<Vec<(&'a CandidatePool, SelectionResult)>> {
    records
        .iter()
        .map(|rec| {
            let pool = corpus
                .pool(&rec.id)
                .ok_or_else(|| Error::MissingId(rec.id.clone()))?;
            let result = rec.to_result();
            result.validate(pool.len())?;
            Ok((pool, result))
        })
        .collect()
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

/// Labels the selections and returns the pairs with a summary. Failed remote
/// instructions are dropped and reported; the human path only queues tasks.
pub fn annotate_corpus(
    config: &RunConfig,
    corpus: &Corpus,
    records: &[SelectionRecord],
) -> Result<(Vec<PreferencePair>, AnnotateSummary, BudgetLedger)> {
    let selections = resolve_selections(corpus, records)?;
    let mut ledger = BudgetLedger::new(plan_for(config, &corpus.pools)?);
    let mut pairs = Vec::new();
    let mut failures = Vec::new();
    let mut pending = 0;

    let source = if let Some(url) = &config.scorer_url {
        let scorer = HttpScorer::new(url, config.scorer_timeout);
        let policy = RetryPolicy::default();
        let outcomes: Vec<(String, Result<PreferencePair>)> = thread_pool(config)?.install(|| {
            selections
                .par_iter()
                .map(|(pool, sel)| {
                    let mut local = BudgetLedger::default();
                    let r = annotate_with_remote(sel, pool, &scorer, policy, &mut local);
                    (pool.id().to_string(), r)
                })
                .collect()
        });
        for (id, outcome) in outcomes {
            match outcome {
                Ok(pair) => {
                    ledger.charge(&id, pair.annotations_used);
                    pairs.push(pair);
                }
                Err(e) => failures.push((id, e.to_string())),
            }
        }
        "remote-scorer"
    } else if let Some(journal) = &config.journal {
        let mut session = Session::open(journal, config.seed)?;
        for (pool, sel) in &selections {
            if session.task(pool.id()).is_none() {
                enqueue_human_task(sel, pool, &mut session)?;
            }
        }
        pairs = session.pairs();
        for p in &pairs {
            ledger.charge(&p.id, p.annotations_used);
        }
        pending = session.progress().pending;
        "human-interactive"
    } else {
        let tables = corpus.rewards.as_ref().ok_or_else(|| {
            Error::Config("annotation needs --scores, --scorer-url or --journal".into())
        })?;
        for (pool, sel) in &selections {
            let table = tables
                .get(pool.id())
                .ok_or_else(|| Error::MissingId(pool.id().to_string()))?;
            pairs.push(annotate_with_table(sel, pool, table, &mut ledger)?);
        }
        "score-table"
    };

    let summary = AnnotateSummary {
        config_hash: config.hash(),
        source: source.to_string(),
        instructions: pairs.len(),
        planned_annotations: ledger.planned_annotations,
        consumed_annotations: ledger.consumed_annotations,
        failures,
        pending_tasks: pending,
        seed: config.seed,
        timestamp: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map_or(0, |d| d.as_secs()),
    };
    Ok((pairs, summary, ledger))
}

fn write_summary(summary: &AnnotateSummary, output: &Path) -> Result<()> {
    let path = sibling(output, ".ledger.json");
    let body = serde_json::to_vec_pretty(summary).map_err(|e| Error::io(&path, e.into()))?;
    std::fs::write(&path, body).map_err(|e| Error::io(&path, e))
}

/// `annotate` subcommand.
pub fn run_annotate(config: &RunConfig, selection: &Path) -> Result<AnnotateSummary> {
    config.validate()?;
    let corpus = Corpus::load(config)?;
    let records = load_selections(selection)?;
    let (pairs, summary, _) = annotate_corpus(config, &corpus, &records)?;
    write_preferences(&pairs, &config.output)?;
    write_summary(&summary, &config.output)?;
    Ok(summary)
}

fn report_for(
    config: &RunConfig,
    corpus: &Corpus,
    selected: &[(SelectionRecord, DistanceMatrix)],
    pairs: &[PreferencePair],
) -> Result<DatasetReport> {
    let by_id: BTreeMap<&str, &PreferencePair> = pairs.iter().map(|p| (p.id.as_str(), p)).collect();
    let entries: Vec<ReportEntry<'_>> = selected
        .iter()
        .map(|(rec, matrix)| ReportEntry {
            id: &rec.id,
            strategy: rec.strategy.as_str(),
            lambda: rec.lambda,
            distance: config.distance.name(),
            indices: &rec.indices,
            matrix,
            pair: by_id.get(rec.id.as_str()).copied(),
            rewards: corpus.rewards.as_ref().and_then(|m| m.get(&rec.id)),
        })
        .collect();
    dataset_report(&entries)
}

/// `metrics` subcommand: report over an existing selection file and,
/// optionally, the preference file built from it.
pub fn run_metrics(
    config: &RunConfig,
    selection: &Path,
    preferences: Option<&Path>,
) -> Result<DatasetReport> {
    config.validate()?;
    let corpus = Corpus::load(config)?;
    let records = load_selections(selection)?;
    let selected = records
        .into_iter()
        .map(|rec| {
            let pool = corpus
                .pool(&rec.id)
                .ok_or_else(|| Error::MissingId(rec.id.clone()))?;
            let m = corpus.matrix(pool, config)?;
            Ok((rec, m))
        })
        .collect::<Result<Vec<_>>>()?;
    let pairs = preferences
        .map(crate::dataset::load_preferences)
        .transpose()?
        .unwrap_or_default();
    let report = report_for(config, &corpus, &selected, &pairs)?;
    if let Some(path) = &config.report {
        report.write(path)?;
    }
    Ok(report)
}

#[derive(Debug, Clone)]
pub struct PipelineRun {
    pub lambda: Option<f64>,
    pub selection_path: PathBuf,
    pub preference_path: PathBuf,
    pub summary: AnnotateSummary,
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub runs: Vec<PipelineRun>,
    pub report: DatasetReport,
    pub report_path: PathBuf,
}

fn lambda_path(output: &Path, lambda: f64) -> PathBuf {
    let stem = output
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "preferences".into());
    let name = match output.extension() {
        Some(ext) => format!("{stem}.lambda-{lambda}.{}", ext.to_string_lossy()),
        None => format!("{stem}.lambda-{lambda}"),
    };
    output.with_file_name(name)
}

/// `pipeline` subcommand: select, annotate and report in one go. With a
/// lambda sweep every grid value gets its own selection and preference files
/// and its own report row.
pub fn run_pipeline(config: &RunConfig) -> Result<PipelineOutput> {
    config.validate().map_err(|e| e.in_stage("config"))?;
    let corpus = Corpus::load(config).map_err(|e| e.in_stage("load"))?;
    let variants: Vec<(Option<f64>, RunConfig, PathBuf)> = if config.lambda_sweep {
        LAMBDA_GRID
            .iter()
            .map(|&l| (Some(l), config.with_lambda(l), lambda_path(&config.output, l)))
            .collect()
    } else {
        vec![(None, config.clone(), config.output.clone())]
    };

    let mut runs = Vec::new();
    let mut report = DatasetReport::default();
    for (lambda, cfg, output) in variants {
        let selected = select_corpus(&cfg, &corpus).map_err(|e| e.in_stage("select"))?;
        let records: Vec<SelectionRecord> = selected.iter().map(|(r, _)| r.clone()).collect();
        let selection_path = match (&config.selection, lambda) {
            (Some(p), None) => p.clone(),
            (Some(p), Some(l)) => lambda_path(p, l),
            (None, _) => sibling(&output, ".selection"),
        };
        write_selections(&records, &selection_path).map_err(|e| e.in_stage("select"))?;

        let (pairs, summary, _) =
            annotate_corpus(&cfg, &corpus, &records).map_err(|e| e.in_stage("annotate"))?;
        write_preferences(&pairs, &output).map_err(|e| e.in_stage("annotate"))?;
        write_summary(&summary, &output).map_err(|e| e.in_stage("annotate"))?;

        report.merge(report_for(&cfg, &corpus, &selected, &pairs).map_err(|e| e.in_stage("report"))?);
        runs.push(PipelineRun {
            lambda,
            selection_path,
            preference_path: output,
            summary,
        });
    }
    let report_path = config
        .report
        .clone()
        .unwrap_or_else(|| sibling(&config.output, ".report.txt"));
    report.write(&report_path).map_err(|e| e.in_stage("report"))?;
    Ok(PipelineOutput {
        runs,
        report,
        report_path,
    })
}
