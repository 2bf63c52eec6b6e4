//! Pairwise dissimilarities between responses and dense distance matrices.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{CandidatePool, EmbeddingSet};
use crate::error::{Error, Result};

/// Shared tokenizer: Unicode whitespace split, case preserved.
pub fn tokenize(text: &str) -> Vec<&str> {
    text.split_whitespace().collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DistanceKind {
    /// `1 - cos(u, v)` over sentence embeddings, clamped to `[0, 1]`.
    Cosine,
    /// One minus a symmetrized smoothed n-gram precision score.
    Ngram { max_n: usize },
}

impl DistanceKind {
    pub fn name(&self) -> &'static str {
        match self {
            DistanceKind::Cosine => "cosine",
            DistanceKind::Ngram { .. } => "ngram",
        }
    }
}

/// Symmetric `n x n` matrix of dissimilarities in `[0, 1]` with a zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    entries: Vec<f64>,
}

impl DistanceMatrix {
    /// Validates and wraps explicit rows.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        let mut entries = Vec::with_capacity(n * n);
        for (i, row) in rows.into_iter().enumerate() {
            if row.len() != n {
                return Err(Error::Invariant(format!(
                    "row {i} has {} entries in a {n}x{n} matrix",
                    row.len()
                )));
            }
            entries.extend(row);
        }
        let m = Self { n, entries };
        m.check()?;
        Ok(m)
    }

    /// Evaluates `element` once per unordered pair `i < j` and mirrors it.
    pub fn from_fn<F>(n: usize, element: F) -> Result<Self>
    where
        F: Fn(usize, usize) -> Result<f64> + Sync,
    {
        let upper: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|i| ((i + 1)..n).map(|j| element(i, j)).collect::<Result<Vec<_>>>())
            .collect::<Result<_>>()?;
        let mut entries = vec![0.0; n * n];
        for (i, row) in upper.into_iter().enumerate() {
            for (off, d) in row.into_iter().enumerate() {
                let j = i + 1 + off;
                entries[i * n + j] = d;
                entries[j * n + i] = d;
            }
        }
        let m = Self { n, entries };
        m.check()?;
        Ok(m)
    }

    fn check(&self) -> Result<()> {
        let n = self.n;
        for i in 0..n {
            if self.get(i, i) != 0.0 {
                return Err(Error::Invariant(format!(
                    "diagonal entry ({i},{i}) = {}",
                    self.get(i, i)
                )));
            }
            for j in 0..n {
                let d = self.get(i, j);
                if !(0.0..=1.0).contains(&d) {
                    return Err(Error::Invariant(format!(
                        "entry ({i},{j}) = {d} outside [0, 1]"
                    )));
                }
                if d != self.get(j, i) {
                    return Err(Error::Invariant(format!(
                        "asymmetric entries ({i},{j}) = {d} and ({j},{i}) = {}",
                        self.get(j, i)
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.n..(i + 1) * self.n]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.n).map(|i| self.row(i).to_vec()).collect()
    }

    /// Keeps the leading `cap x cap` block.
    pub fn truncated(&self, cap: usize) -> Self {
        let n = cap.min(self.n);
        let entries = (0..n).flat_map(|i| self.row(i)[..n].iter().copied()).collect();
        Self { n, entries }
    }

    /// Mean over all `n^2` entries, diagonal included.
    pub fn mean(&self) -> f64 {
        self.entries.iter().sum::<f64>() / (self.n * self.n) as f64
    }
}

/// Clamped cosine distance `max(0, min(1, 1 - cos(u, v)))`.
pub fn cosine_distance(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::DimensionMismatch {
            left: u.len(),
            right: v.len(),
        });
    }
    let (mut dot, mut nu, mut nv) = (0.0, 0.0, 0.0);
    for (a, b) in u.iter().zip(v) {
        dot += a * b;
        nu += a * a;
        nv += b * b;
    }
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::ZeroNorm { context: None });
    }
    let cos = dot / (nu.sqrt() * nv.sqrt());
    Ok((1.0 - cos).clamp(0.0, 1.0))
}

fn ngram_counts<'t, 'a>(tokens: &'t [&'a str], n: usize) -> HashMap<&'t [&'a str], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

/// Directed smoothed n-gram precision score of `hyp` against `reference`.
///
/// Modified (clipped) precision per order; add-one smoothing for orders >= 2;
/// geometric mean over `1..=max_n`; brevity penalty when `hyp` is not longer
/// than `reference`.
pub fn ngram_precision_score(hyp: &str, reference: &str, max_n: usize) -> f64 {
    let h = tokenize(hyp);
    let r = tokenize(reference);
    match (h.is_empty(), r.is_empty()) {
        (true, true) => return 1.0,
        (true, false) | (false, true) => return 0.0,
        _ => {}
    }
    let mut log_sum = 0.0;
    for n in 1..=max_n {
        let hc = ngram_counts(&h, n);
        let rc = ngram_counts(&r, n);
        let total: usize = hc.values().sum();
        let matched: usize = hc
            .iter()
            .map(|(g, c)| (*c).min(rc.get(g).copied().unwrap_or(0)))
            .sum();
        let p = if n == 1 {
            if matched == 0 {
                return 0.0;
            }
            matched as f64 / total as f64
        } else {
            (matched + 1) as f64 / (total + 1) as f64
        };
        log_sum += p.ln();
    }
    let (c, rl) = (h.len() as f64, r.len() as f64);
    let bp = if c > rl { 1.0 } else { (1.0 - rl / c).exp() };
    bp * (log_sum / max_n as f64).exp()
}

/// `max` of the two directed `1 - score` distances, so the result is symmetric.
pub fn ngram_overlap_distance(a: &str, b: &str, max_n: usize) -> f64 {
    let max_n = max_n.max(1);
    let ab = 1.0 - ngram_precision_score(a, b, max_n);
    let ba = 1.0 - ngram_precision_score(b, a, max_n);
    ab.max(ba).clamp(0.0, 1.0)
}

/// Materializes `d` over a whole pool.
pub fn build_distance_matrix(
    pool: &CandidatePool,
    kind: DistanceKind,
    embeddings: Option<&EmbeddingSet>,
) -> Result<DistanceMatrix> {
    match (kind, embeddings) {
        (DistanceKind::Cosine, Some(emb)) => {
            emb.validate(pool.len())?;
            DistanceMatrix::from_fn(pool.len(), |i, j| {
                cosine_distance(&emb.vectors[i], &emb.vectors[j])
            })
        }
        (DistanceKind::Cosine, None) => Err(Error::Config(format!(
            "cosine distance needs embeddings for `{}`",
            pool.id()
        ))),
        (DistanceKind::Ngram { max_n }, None) => {
            if max_n == 0 {
                return Err(Error::Config("--max-n must be at least 1".into()));
            }
            DistanceMatrix::from_fn(pool.len(), |i, j| {
                Ok(ngram_overlap_distance(
                    &pool.responses[i],
                    &pool.responses[j],
                    max_n,
                ))
            })
        }
        (DistanceKind::Ngram { .. }, Some(_)) => Err(Error::Config(
            "embeddings are only used with the cosine distance".into(),
        )),
    }
}

/// Ordered triples `(i, j, k)` with `i < k`, `j` distinct from both, where
/// `d(i,k) > d(i,j) + d(j,k)`.
pub fn metric_violations(matrix: &DistanceMatrix) -> Vec<(usize, usize, usize)> {
    let n = matrix.len();
    let mut out = Vec::new();
    for i in 0..n {
        for k in (i + 1)..n {
            let direct = matrix.get(i, k);
            for j in 0..n {
                if j != i && j != k && direct > matrix.get(i, j) + matrix.get(j, k) {
                    out.push((i, j, k));
                }
            }
        }
    }
    out
}
