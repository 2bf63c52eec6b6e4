use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{check_k, SelectionResult, Solver, StrategyKind};
use crate::dataset::{ScoreKind, ScoreTable};
use crate::distance::DistanceMatrix;
use crate::error::{Error, Result};

/// Uniform `k`-subset of `0..n`, reproducible from `seed`. Indices are sorted.
pub fn select_random(n: usize, k: usize, seed: u64) -> Result<SelectionResult> {
    if k > n {
        return Err(Error::InvalidSelection(format!("k = {k} exceeds n = {n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut indices = rand::seq::index::sample(&mut rng, n, k).into_vec();
    indices.sort_unstable();
    Ok(SelectionResult::new(
        StrategyKind::Random,
        Solver::NotApplicable,
        indices,
    ))
}

/// West-of-N: every response is annotated.
pub fn select_won(n: usize) -> Result<SelectionResult> {
    if n < 2 {
        return Err(Error::InvalidSelection(format!("West-of-N needs n >= 2, got {n}")));
    }
    Ok(SelectionResult::new(
        StrategyKind::Won,
        Solver::NotApplicable,
        (0..n).collect(),
    ))
}

/// k-Center-Greedy seeded at the 1-center (smallest maximum distance), then
/// repeatedly adding the farthest point from the current centers.
pub fn select_coreset(matrix: &DistanceMatrix, k: usize) -> Result<SelectionResult> {
    let n = matrix.len();
    check_k(n, k)?;

    let eccentricity = |i: usize| matrix.row(i).iter().copied().fold(0.0, f64::max);
    let mut seed = 0;
    for i in 1..n {
        if eccentricity(i) < eccentricity(seed) {
            seed = i;
        }
    }

    let mut centers = vec![seed];
    // distance from every point to its nearest center
    let mut nearest: Vec<f64> = matrix.row(seed).to_vec();
    while centers.len() < k {
        let mut best: Option<usize> = None;
        for i in (0..n).filter(|i| !centers.contains(i)) {
            if best.is_none_or(|b| nearest[i] > nearest[b]) {
                best = Some(i);
            }
        }
        let next = best.expect("k <= n leaves a candidate");
        centers.push(next);
        for (i, d) in nearest.iter_mut().enumerate() {
            *d = d.min(matrix.get(i, next));
        }
    }
    Ok(SelectionResult::new(
        StrategyKind::Coreset,
        Solver::NotApplicable,
        centers,
    ))
}

/// The highest- and lowest-perplexity responses, as `[argmax, argmin]`.
/// A flat table yields `[0, 1]`.
pub fn select_perplexity_pair(table: &ScoreTable) -> Result<SelectionResult> {
    if table.kind != ScoreKind::Perplexity {
        return Err(Error::WrongScoreKind {
            expected: ScoreKind::Perplexity.to_string(),
            found: table.kind.to_string(),
        });
    }
    table.validate(table.scores.len())?;
    let s = &table.scores;
    if s.len() < 2 {
        return Err(Error::InvalidSelection(format!(
            "perplexity selection needs N >= 2, got {}",
            s.len()
        )));
    }
    let (mut hi, mut lo) = (0, 0);
    for (i, &v) in s.iter().enumerate() {
        if v > s[hi] {
            hi = i;
        }
        if v < s[lo] {
            lo = i;
        }
    }
    let indices = if hi == lo { vec![0, 1] } else { vec![hi, lo] };
    Ok(SelectionResult::new(
        StrategyKind::Perplexity,
        Solver::NotApplicable,
        indices,
    ))
}
