//! Run configuration shared by every subcommand.

use std::path::PathBuf;
use std::time::Duration;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::annotation::BudgetMode;
use crate::distance::DistanceKind;
use crate::error::{Error, Result};
use crate::selection::{Solver, StrategyKind, DEFAULT_ENUMERATION_CAP};

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub strategy: StrategyKind,
    pub distance: DistanceKind,
    pub k: usize,
    pub lambda: f64,
    /// Run the default lambda grid instead of the single `lambda`.
    pub lambda_sweep: bool,
    pub n_cap: Option<usize>,
    /// `None` picks exact enumeration whenever it fits under the cap.
    pub solver: Option<Solver>,
    pub enumeration_cap: u128,
    pub seed: u64,
    pub budget: BudgetMode,
    pub input: PathBuf,
    pub embeddings: Option<PathBuf>,
    /// Reward scores used as the annotator.
    pub scores: Option<PathBuf>,
    /// Perplexities for the perplexity strategy.
    pub perplexities: Option<PathBuf>,
    pub output: PathBuf,
    pub selection: Option<PathBuf>,
    pub report: Option<PathBuf>,
    pub scorer_url: Option<String>,
    pub scorer_timeout: Duration,
    pub journal: Option<PathBuf>,
    pub assets: Option<PathBuf>,
    pub port: u16,
    pub concurrency: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            strategy: StrategyKind::Aepo,
            distance: DistanceKind::Cosine,
            k: 2,
            lambda: 1.0,
            lambda_sweep: false,
            n_cap: None,
            solver: None,
            enumeration_cap: DEFAULT_ENUMERATION_CAP,
            seed: 0,
            budget: BudgetMode::Matched,
            input: PathBuf::new(),
            embeddings: None,
            scores: None,
            perplexities: None,
            output: PathBuf::new(),
            selection: None,
            report: None,
            scorer_url: None,
            scorer_timeout: Duration::from_secs(30),
            journal: None,
            assets: None,
            port: 8080,
            concurrency: 4,
        }
    }
}

/// The knobs that decide what gets selected and labeled; paths are excluded so
/// identical runs into different directories share a hash.
#[derive(Serialize)]
struct HashedFields<'a> {
    strategy: StrategyKind,
    distance: &'a DistanceKind,
    k: usize,
    lambda: f64,
    lambda_sweep: bool,
    n_cap: Option<usize>,
    solver: Option<Solver>,
    enumeration_cap: String,
    seed: u64,
    budget: BudgetMode,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.k < 2 {
            return fail(format!("--k must be at least 2, got {}", self.k));
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return fail(format!("--lambda must be finite and >= 0, got {}", self.lambda));
        }
        if let Some(cap) = self.n_cap {
            if cap < 2 {
                return fail(format!("--n-cap must be at least 2, got {cap}"));
            }
        }
        if self.concurrency == 0 {
            return fail("concurrency limit must be at least 1".into());
        }
        if let DistanceKind::Ngram { max_n } = self.distance {
            if max_n == 0 {
                return fail("--max-n must be at least 1".into());
            }
        }
        if self.distance == DistanceKind::Cosine && self.embeddings.is_none() {
            return fail("--distance cosine needs --embeddings".into());
        }
        if self.strategy == StrategyKind::Perplexity {
            if self.perplexities.is_none() {
                return fail("--strategy perplexity needs --perplexities".into());
            }
            if self.k != 2 {
                return fail("--strategy perplexity always selects k = 2".into());
            }
        }
        if self.solver.is_some() && self.strategy != StrategyKind::Aepo {
            return fail(format!("--solver does not apply to strategy {}", self.strategy));
        }
        if self.solver == Some(Solver::NotApplicable) {
            return fail("--solver must be exact or greedy".into());
        }
        if self.lambda_sweep && self.strategy != StrategyKind::Aepo {
            return fail("a lambda sweep only applies to strategy aepo".into());
        }
        Ok(())
    }

    /// Short hex digest recorded in every output.
    pub fn hash(&self) -> String {
        let fields = HashedFields {
            strategy: self.strategy,
            distance: &self.distance,
            k: self.k,
            lambda: self.lambda,
            lambda_sweep: self.lambda_sweep,
            n_cap: self.n_cap,
            solver: self.solver,
            enumeration_cap: self.enumeration_cap.to_string(),
            seed: self.seed,
            budget: self.budget,
        };
        let json = serde_json::to_vec(&fields).expect("plain struct serializes");
        hex::encode(&Sha256::digest(&json)[..8])
    }

    /// Same configuration with a different diversity weight.
    pub fn with_lambda(&self, lambda: f64) -> Self {
        Self {
            lambda,
            lambda_sweep: false,
            ..self.clone()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> RunConfig {
        RunConfig {
            distance: DistanceKind::Ngram { max_n: 4 },
            ..Default::default()
        }
    }

    #[test]
    fn validation() {
        base().validate().unwrap();
        assert!(RunConfig { k: 1, ..base() }.validate().is_err());
        assert!(RunConfig { lambda: -1.0, ..base() }.validate().is_err());
        assert!(RunConfig { n_cap: Some(1), ..base() }.validate().is_err());
        assert!(RunConfig { distance: DistanceKind::Cosine, ..base() }.validate().is_err());
        assert!(RunConfig { strategy: StrategyKind::Perplexity, ..base() }.validate().is_err());
        assert!(RunConfig {
            strategy: StrategyKind::Random,
            solver: Some(Solver::Greedy),
            ..base()
        }
        .validate()
        .is_err());
    }

    #[test]
    fn hash_ignores_paths() {
        let a = base();
        let b = RunConfig {
            output: "elsewhere.jsonl".into(),
            ..base()
        };
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), base().with_lambda(0.5).hash());
        assert_eq!(a.hash().len(), 16);
    }
}
