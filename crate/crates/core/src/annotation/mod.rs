//! Turning a selected subset into a preference pair.
//!
//! Judgments come from a score table, a remote scoring service or a human
//! annotator; in all cases only the selected responses are ranked and the best
//! and worst become `chosen` and `rejected`. Ranking `m` responses costs `m`
//! annotation units.

mod human;
mod remote;

use serde::{Deserialize, Serialize};

use crate::dataset::{CandidatePool, PreferencePair, ScoreKind, ScoreTable};
use crate::error::{Error, Result};
use crate::selection::{SelectionResult, StrategyKind};

pub use human::{
    apply_human_judgment, enqueue_human_task, HumanTask, Progress, Session, TaskStatus, TaskView,
};
pub use remote::{annotate_with_remote, HttpScorer, RetryPolicy, Scorer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum JudgmentSource {
    ScoreTable,
    RemoteScorer,
    HumanInteractive,
}

/// Best and worst of the annotated responses as `(chosen, rejected)`.
///
/// Ties go to the smallest pool index; when every score is equal the rejected
/// response is the smallest index other than the chosen one.
pub fn won_label(scores: &[(usize, f64)]) -> Result<(usize, usize)> {
    if scores.len() < 2 {
        return Err(Error::InvalidSelection(format!(
            "labeling needs at least 2 scored responses, got {}",
            scores.len()
        )));
    }
    if let Some(&(i, v)) = scores.iter().find(|(_, v)| !v.is_finite()) {
        return Err(Error::NonFinite {
            value: v,
            context: format!("for response {i}"),
        });
    }
    let better = |a: &(usize, f64), b: &(usize, f64)| a.1 > b.1 || (a.1 == b.1 && a.0 < b.0);
    let worse = |a: &(usize, f64), b: &(usize, f64)| a.1 < b.1 || (a.1 == b.1 && a.0 < b.0);
    let mut best = scores[0];
    let mut worst = scores[0];
    for s in &scores[1..] {
        if better(s, &best) {
            best = *s;
        }
        if worse(s, &worst) {
            worst = *s;
        }
    }
    if best.0 == worst.0 {
        let rejected = scores
            .iter()
            .map(|s| s.0)
            .filter(|&i| i != best.0)
            .min()
            .ok_or_else(|| Error::InvalidSelection("all entries share one index".into()))?;
        return Ok((best.0, rejected));
    }
    Ok((best.0, worst.0))
}

/// Running account of annotation units.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BudgetLedger {
    pub planned_instructions: u64,
    pub planned_annotations: u64,
    pub consumed_annotations: u64,
    pub log: Vec<(String, u64)>,
}

impl BudgetLedger {
    pub fn new(plan: BudgetPlan) -> Self {
        Self {
            planned_instructions: plan.instructions,
            planned_annotations: plan.annotations,
            ..Default::default()
        }
    }

    pub fn charge(&mut self, id: &str, units: u64) {
        self.consumed_annotations += units;
        self.log.push((id.to_string(), units));
    }

    pub fn is_consistent(&self) -> bool {
        self.consumed_annotations == self.log.iter().map(|(_, u)| u).sum::<u64>()
    }

    pub fn within_budget(&self) -> bool {
        self.consumed_annotations <= self.planned_annotations
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BudgetMode {
    /// West-of-N uses only as many instructions as the subset strategies' budget allows.
    Matched,
    Unconstrained,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BudgetPlan {
    pub instructions: u64,
    pub annotations: u64,
}

/// Instructions to use and annotation units to spend for a strategy.
pub fn budget_plan(
    strategy: StrategyKind,
    n: usize,
    k: usize,
    corpus_size: usize,
    mode: BudgetMode,
) -> Result<BudgetPlan> {
    if n < 2 || k < 2 {
        return Err(Error::Budget(format!("need N >= 2 and k >= 2, got N = {n}, k = {k}")));
    }
    let (n, k, d) = (n as u64, k as u64, corpus_size as u64);
    Ok(match strategy {
        StrategyKind::Won => match mode {
            BudgetMode::Matched => {
                let instructions = d * k / n;
                BudgetPlan {
                    instructions,
                    annotations: n * instructions,
                }
            }
            BudgetMode::Unconstrained => BudgetPlan {
                instructions: d,
                annotations: n * d,
            },
        },
        StrategyKind::Perplexity => BudgetPlan {
            instructions: d,
            annotations: 2 * d,
        },
        StrategyKind::Aepo | StrategyKind::Random | StrategyKind::Coreset => {
            if n < k {
                return Err(Error::Budget(format!(
                    "{strategy} needs N >= k, got N = {n}, k = {k}"
                )));
            }
            BudgetPlan {
                instructions: d,
                annotations: k * d,
            }
        }
    })
}

pub(crate) fn build_pair(
    pool: &CandidatePool,
    chosen: usize,
    rejected: usize,
    strategy: &str,
    lambda: Option<f64>,
    units: u64,
) -> PreferencePair {
    PreferencePair {
        id: pool.instruction.id.clone(),
        instruction: pool.instruction.text.clone(),
        chosen: pool.responses[chosen].clone(),
        rejected: pool.responses[rejected].clone(),
        chosen_index: chosen,
        rejected_index: rejected,
        strategy: strategy.to_string(),
        lambda,
        annotations_used: units,
    }
}

/// Labels the selected responses from precomputed reward scores.
pub fn annotate_with_table(
    selection: &SelectionResult,
    pool: &CandidatePool,
    table: &ScoreTable,
    ledger: &mut BudgetLedger,
) -> Result<PreferencePair> {
    if table.kind != ScoreKind::Reward {
        return Err(Error::WrongScoreKind {
            expected: ScoreKind::Reward.to_string(),
            found: table.kind.to_string(),
        });
    }
    if table.id != pool.instruction.id {
        return Err(Error::MissingId(pool.instruction.id.clone()));
    }
    table.validate(pool.len())?;
    selection.validate(pool.len())?;
    let scored: Vec<(usize, f64)> = selection
        .indices
        .iter()
        .map(|&i| (i, table.scores[i]))
        .collect();
    let (chosen, rejected) = won_label(&scored)?;
    let units = selection.k() as u64;
    ledger.charge(pool.id(), units);
    Ok(build_pair(
        pool,
        chosen,
        rejected,
        selection.strategy.as_str(),
        selection.lambda(),
        units,
    ))
}
