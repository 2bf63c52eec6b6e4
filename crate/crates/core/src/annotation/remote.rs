//! Scores from an external reward service.
//!
//! Protocol: `POST {base}/score` with `{"instruction", "response"}`, answered by
//! `{"score": float}`.

use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{build_pair, won_label, BudgetLedger};
use crate::dataset::{CandidatePool, PreferencePair};
use crate::error::{Error, Result};
use crate::selection::SelectionResult;

pub trait Scorer: Sync {
    /// One score for one response. Transport problems must be reported as
    /// [`Error::Transport`] so they are retried.
    fn score(&self, instruction: &str, response: &str) -> Result<f64>;
}

#[derive(Debug, Clone, Copy)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub initial_backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            attempts: 3,
            initial_backoff: Duration::from_millis(200),
        }
    }
}

#[derive(Serialize)]
struct ScoreRequest<'a> {
    instruction: &'a str,
    response: &'a str,
}

#[derive(Deserialize)]
struct ScoreResponse {
    score: Option<f64>,
}

pub struct HttpScorer {
    url: String,
    agent: ureq::Agent,
}

impl HttpScorer {
    pub fn new(base_url: &str, timeout: Duration) -> Self {
        let base = base_url.trim_end_matches('/');
        let url = if base.ends_with("/score") {
            base.to_string()
        } else {
            format!("{base}/score")
        };
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .build()
            .into();
        Self { url, agent }
    }
}

impl Scorer for HttpScorer {
    fn score(&self, instruction: &str, response: &str) -> Result<f64> {
        let transport = |e: ureq::Error| Error::Transport {
            attempts: 1,
            message: e.to_string(),
        };
        let mut resp = self
            .agent
            .post(&self.url)
            .send_json(&ScoreRequest {
                instruction,
                response,
            })
            .map_err(transport)?;
        let body: ScoreResponse = resp.body_mut().read_json().map_err(transport)?;
        // JSON has no NaN; a null score is treated as one.
        Ok(body.score.unwrap_or(f64::NAN))
    }
}

fn score_with_retries(
    scorer: &dyn Scorer,
    policy: RetryPolicy,
    instruction: &str,
    response: &str,
) -> Result<f64> {
    let mut backoff = policy.initial_backoff;
    let mut last = String::new();
    for attempt in 1..=policy.attempts.max(1) {
        match scorer.score(instruction, response) {
            Ok(v) => return Ok(v),
            Err(Error::Transport { message, .. }) => {
                last = message;
                if attempt < policy.attempts {
                    thread::sleep(backoff);
                    backoff *= 2;
                }
            }
            Err(other) => return Err(other),
        }
    }
    Err(Error::Transport {
        attempts: policy.attempts.max(1),
        message: last,
    })
}

/// Scores every selected response remotely, then labels as with a table.
/// On any failure the ledger is left untouched.
pub fn annotate_with_remote(
    selection: &SelectionResult,
    pool: &CandidatePool,
    scorer: &dyn Scorer,
    policy: RetryPolicy,
    ledger: &mut BudgetLedger,
) -> Result<PreferencePair> {
    selection.validate(pool.len())?;
    let mut scored = Vec::with_capacity(selection.k());
    for &i in &selection.indices {
        let s = score_with_retries(scorer, policy, &pool.instruction.text, &pool.responses[i])?;
        if !s.is_finite() {
            return Err(Error::NonFinite {
                value: s,
                context: format!("from scorer for response {i} of `{}`", pool.id()),
            });
        }
        scored.push((i, s));
    }
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
