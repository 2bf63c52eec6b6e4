//! Choosing which candidate responses get annotated.
//!
//! The main strategy maximizes `f_rep(Y) + lambda * f_div(Y)` over subsets of
//! size `k`, either exactly by enumeration or greedily. The baselines (random
//! pairs, West-of-N, k-center coreset, perplexity extremes) live in
//! [`baselines`]. All tie-breaks prefer the lexicographically smallest sorted
//! index tuple so every run is reproducible.

mod baselines;
mod objective;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::distance::DistanceMatrix;
use crate::error::{Error, Result};

pub use baselines::{select_coreset, select_perplexity_pair, select_random, select_won};
pub use objective::{covering_radius, distance_difference_sum, f_div, f_rep, ObjectiveBreakdown};

/// Default ceiling on `C(N, k)` for exact enumeration.
pub const DEFAULT_ENUMERATION_CAP: u128 = 10_000_000;

/// Default diversity weights swept by the pipeline.
pub const LAMBDA_GRID: [f64; 4] = [0.0, 0.5, 1.0, 2.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StrategyKind {
    Aepo,
    Random,
    Won,
    Coreset,
    Perplexity,
}

impl StrategyKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            StrategyKind::Aepo => "aepo",
            StrategyKind::Random => "random",
            StrategyKind::Won => "won",
            StrategyKind::Coreset => "coreset",
            StrategyKind::Perplexity => "perplexity",
        }
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StrategyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "aepo" => StrategyKind::Aepo,
            "random" => StrategyKind::Random,
            "won" => StrategyKind::Won,
            "coreset" => StrategyKind::Coreset,
            "perplexity" => StrategyKind::Perplexity,
            other => return Err(Error::Config(format!("unknown strategy `{other}`"))),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Solver {
    #[serde(rename = "exact")]
    Exact,
    #[serde(rename = "greedy")]
    Greedy,
    #[serde(rename = "n/a")]
    NotApplicable,
}

impl fmt::Display for Solver {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Solver::Exact => "exact",
            Solver::Greedy => "greedy",
            Solver::NotApplicable => "n/a",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionResult {
    pub strategy: StrategyKind,
    pub solver: Solver,
    /// Selected pool indices, in selection order.
    pub indices: Vec<usize>,
    /// Present for the objective-driven strategy; attached to baselines on demand.
    pub breakdown: Option<ObjectiveBreakdown>,
}

impl SelectionResult {
    pub fn new(strategy: StrategyKind, solver: Solver, indices: Vec<usize>) -> Self {
        Self {
            strategy,
            solver,
            indices,
            breakdown: None,
        }
    }

    pub fn k(&self) -> usize {
        self.indices.len()
    }

    pub fn sorted_indices(&self) -> Vec<usize> {
        let mut v = self.indices.clone();
        v.sort_unstable();
        v
    }

    /// The diversity weight, only meaningful for the objective-driven strategy.
    pub fn lambda(&self) -> Option<f64> {
        match self.strategy {
            StrategyKind::Aepo => self.breakdown.map(|b| b.lambda),
            _ => None,
        }
    }

    /// Attaches objective values computed on `matrix`.
    pub fn with_breakdown(mut self, matrix: &DistanceMatrix, lambda: f64) -> Result<Self> {
        self.breakdown = Some(ObjectiveBreakdown::evaluate(&self.indices, matrix, lambda)?);
        Ok(self)
    }

    /// Distinct, in range, at least two items.
    pub fn validate(&self, n: usize) -> Result<()> {
        if self.indices.len() < 2 || self.indices.len() > n {
            return Err(Error::InvalidSelection(format!(
                "{} indices selected from a pool of {n}",
                self.indices.len()
            )));
        }
        for (pos, &i) in self.indices.iter().enumerate() {
            if i >= n {
                return Err(Error::InvalidSelection(format!(
                    "index {i} out of range for pool of {n}"
                )));
            }
            if self.indices[..pos].contains(&i) {
                return Err(Error::InvalidSelection(format!("index {i} repeated")));
            }
        }
        Ok(())
    }
}

fn check_k(n: usize, k: usize) -> Result<()> {
    if k < 2 || k > n {
        return Err(Error::InvalidSelection(format!(
            "k = {k} must satisfy 2 <= k <= N = {n}"
        )));
    }
    Ok(())
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::Config(format!("lambda must be finite and >= 0, got {lambda}")));
    }
    Ok(())
}

/// `C(n, k)` without overflow (saturates at `u128::MAX`).
pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = match acc.checked_mul((n - i) as u128) {
            Some(v) => v / (i as u128 + 1),
            None => return u128::MAX,
        };
    }
    acc
}

/// Exhaustive maximization with the default enumeration cap.
pub fn select_exact(matrix: &DistanceMatrix, k: usize, lambda: f64) -> Result<SelectionResult> {
    select_exact_capped(matrix, k, lambda, DEFAULT_ENUMERATION_CAP)
}

/// Enumerates all `C(N, k)` subsets in lexicographic order and keeps the first
/// strict maximum, which realizes the smallest-tuple tie-break.
pub fn select_exact_capped(
    matrix: &DistanceMatrix,
    k: usize,
    lambda: f64,
    cap: u128,
) -> Result<SelectionResult> {
    let n = matrix.len();
    check_k(n, k)?;
    check_lambda(lambda)?;
    let subsets = binomial(n, k);
    if subsets > cap {
        return Err(Error::CapExceeded { subsets, cap });
    }

    let mut current: Vec<usize> = (0..k).collect();
    let mut best = current.clone();
    let mut best_value = ObjectiveBreakdown::evaluate_sorted(&current, matrix, lambda);
    while next_combination(&mut current, n) {
        let value = ObjectiveBreakdown::evaluate_sorted(&current, matrix, lambda);
        if value.objective > best_value.objective {
            best_value = value;
            best.copy_from_slice(&current);
        }
    }
    Ok(SelectionResult {
        strategy: StrategyKind::Aepo,
        solver: Solver::Exact,
        indices: best,
        breakdown: Some(best_value),
    })
}

fn next_combination(c: &mut [usize], n: usize) -> bool {
    let k = c.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if c[i] < n - k + i {
            c[i] += 1;
            for j in (i + 1)..k {
                c[j] = c[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Adds one index at a time, each maximizing the objective of the augmented
/// set. The first pick is driven by representativeness alone since diversity
/// is zero for a singleton.
pub fn select_greedy(matrix: &DistanceMatrix, k: usize, lambda: f64) -> Result<SelectionResult> {
    let n = matrix.len();
    check_k(n, k)?;
    check_lambda(lambda)?;

    let mut picked: Vec<usize> = Vec::with_capacity(k);
    let mut sorted: Vec<usize> = Vec::with_capacity(k);
    let mut scratch: Vec<usize> = Vec::with_capacity(k);
    while picked.len() < k {
        let mut best: Option<(usize, f64)> = None;
        for cand in (0..n).filter(|i| !picked.contains(i)) {
            scratch.clear();
            scratch.extend_from_slice(&sorted);
            let pos = scratch.partition_point(|&x| x < cand);
            scratch.insert(pos, cand);
            let v = ObjectiveBreakdown::evaluate_sorted(&scratch, matrix, lambda).objective;
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((cand, v));
            }
        }
        let (choice, _) = best.expect("k <= n leaves a candidate");
        picked.push(choice);
        let pos = sorted.partition_point(|&x| x < choice);
        sorted.insert(pos, choice);
    }
    let breakdown = ObjectiveBreakdown::evaluate_sorted(&sorted, matrix, lambda);
    Ok(SelectionResult {
        strategy: StrategyKind::Aepo,
        solver: Solver::Greedy,
        indices: picked,
        breakdown: Some(breakdown),
    })
}
