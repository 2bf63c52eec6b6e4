//! Dataset-quality measurements: lexical and semantic diversity of the
//! selected responses, their representativeness of the pool, and reward.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::{write_records, PreferencePair, ScoreTable};
use crate::distance::{tokenize, DistanceMatrix};
use crate::error::{Error, Result};
use crate::selection::f_rep;

/// Distinct n-grams divided by token count; `None` when the text has fewer
/// than `n` tokens (such texts are left out of averages).
pub fn distinct_n(text: &str, n: usize) -> Option<f64> {
    let tokens = tokenize(text);
    if n == 0 || tokens.len() < n {
        return None;
    }
    let unique: HashSet<&[&str]> = tokens.windows(n).collect();
    Some(unique.len() as f64 / tokens.len() as f64)
}

fn check_subset(indices: &[usize], matrix: &DistanceMatrix) -> Result<()> {
    if let Some(&bad) = indices.iter().find(|&&i| i >= matrix.len()) {
        return Err(Error::InvalidSelection(format!(
            "index {bad} out of range for pool of {}",
            matrix.len()
        )));
    }
    Ok(())
}

/// Mean distance over unordered pairs of the selection.
pub fn pairwise_distance(indices: &[usize], matrix: &DistanceMatrix) -> Result<f64> {
    if indices.len() < 2 {
        return Err(Error::InvalidSelection(
            "pairwise distance needs at least 2 items".into(),
        ));
    }
    check_subset(indices, matrix)?;
    let mut total = 0.0;
    let mut pairs = 0usize;
    for (a, &i) in indices.iter().enumerate() {
        for &j in &indices[a + 1..] {
            total += matrix.get(i, j);
            pairs += 1;
        }
    }
    Ok(total / pairs as f64)
}

/// One minus the mean distance from selected items to every pool item, i.e.
/// average similarity of the selection to the pool.
pub fn representativeness(indices: &[usize], matrix: &DistanceMatrix) -> Result<f64> {
    if indices.is_empty() {
        return Err(Error::InvalidSelection("empty selection".into()));
    }
    check_subset(indices, matrix)?;
    let total: f64 = indices.iter().map(|&i| matrix.row(i).iter().sum::<f64>()).sum();
    Ok(1.0 - total / (indices.len() * matrix.len()) as f64)
}

/// `-f_rep(Y) / N`, the normalization as usually written; it divides by `N`
/// twice and so is not on a similarity scale.
pub fn representativeness_literal(indices: &[usize], matrix: &DistanceMatrix) -> Result<f64> {
    Ok(-f_rep(indices, matrix)? / matrix.len() as f64)
}

/// Flat mean of the reward of every selected response across instructions.
pub fn mean_reward<'a>(
    selections: impl IntoIterator<Item = (&'a str, &'a [usize])>,
    tables: &BTreeMap<String, ScoreTable>,
) -> Result<f64> {
    let (mut total, mut count) = (0.0, 0usize);
    for (id, indices) in selections {
        let table = tables
            .get(id)
            .ok_or_else(|| Error::MissingId(id.to_string()))?;
        for &i in indices {
            let s = *table.scores.get(i).ok_or_else(|| Error::CountMismatch {
                id: id.to_string(),
                expected: i + 1,
                found: table.scores.len(),
            })?;
            total += s;
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::InvalidSelection("mean reward of an empty dataset".into()));
    }
    Ok(total / count as f64)
}

/// Per-instruction inputs to a report.
pub struct ReportEntry<'a> {
    pub id: &'a str,
    pub strategy: &'a str,
    pub lambda: Option<f64>,
    pub distance: &'a str,
    pub indices: &'a [usize],
    pub matrix: &'a DistanceMatrix,
    pub pair: Option<&'a PreferencePair>,
    pub rewards: Option<&'a ScoreTable>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub strategy: String,
    #[serde(rename = "N")]
    pub n: usize,
    pub k: usize,
    pub lambda: Option<f64>,
    pub distance: String,
    pub instructions: usize,
    pub mean_pairwise_distance: f64,
    pub mean_pairwise_similarity: f64,
    pub representativeness: f64,
    pub representativeness_literal: f64,
    pub distinct_1_chosen: Option<f64>,
    pub distinct_2_chosen: Option<f64>,
    pub distinct_3_chosen: Option<f64>,
    pub distinct_1_rejected: Option<f64>,
    pub distinct_2_rejected: Option<f64>,
    pub distinct_3_rejected: Option<f64>,
    pub mean_reward: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetReport {
    pub rows: Vec<ReportRow>,
}

#[derive(Default)]
struct Accumulator {
    distance: String,
    count: usize,
    pairwise: f64,
    rep: f64,
    rep_literal: f64,
    distinct: [(f64, usize); 6],
    reward: (f64, usize),
    rewards_missing: bool,
}

fn mean(sum: f64, count: usize) -> Option<f64> {
    (count > 0).then(|| sum / count as f64)
}

/// Aggregates entries into one row per `(strategy, N, k, lambda)`, in order of
/// first appearance.
pub fn dataset_report(entries: &[ReportEntry<'_>]) -> Result<DatasetReport> {
    type Key = (String, usize, usize, Option<u64>);
    let mut order: Vec<Key> = Vec::new();
    let mut groups: HashMap<Key, Accumulator> = HashMap::new();
    for e in entries {
        if e.lambda.is_some() && e.strategy != "aepo" {
            return Err(Error::Invariant(format!(
                "`{}`: lambda given for strategy {}",
                e.id, e.strategy
            )));
        }
        let key = (
            e.strategy.to_string(),
            e.matrix.len(),
            e.indices.len(),
            e.lambda.map(f64::to_bits),
        );
        let acc = groups.entry(key.clone()).or_insert_with(|| {
            order.push(key.clone());
            Accumulator {
                distance: e.distance.to_string(),
                ..Default::default()
            }
        });
        if acc.distance != e.distance {
            return Err(Error::Invariant(format!(
                "`{}`: distance {} mixed with {} in one report row",
                e.id, e.distance, acc.distance
            )));
        }
        acc.count += 1;
        acc.pairwise += pairwise_distance(e.indices, e.matrix)?;
        acc.rep += representativeness(e.indices, e.matrix)?;
        acc.rep_literal += representativeness_literal(e.indices, e.matrix)?;
        if let Some(p) = e.pair {
            for n in 1..=3 {
                for (slot, text) in [(n - 1, &p.chosen), (n + 2, &p.rejected)] {
                    if let Some(v) = distinct_n(text, n) {
                        acc.distinct[slot].0 += v;
                        acc.distinct[slot].1 += 1;
                    }
                }
            }
        }
        match e.rewards {
            Some(t) => {
                for &i in e.indices {
                    acc.reward.0 += t.scores[i];
                    acc.reward.1 += 1;
                }
            }
            None => acc.rewards_missing = true,
        }
    }

    let rows = order
        .into_iter()
        .map(|key| {
            let acc = &groups[&key];
            let c = acc.count as f64;
            let d = |slot: usize| mean(acc.distinct[slot].0, acc.distinct[slot].1);
            let pairwise = acc.pairwise / c;
            ReportRow {
                strategy: key.0,
                n: key.1,
                k: key.2,
                lambda: key.3.map(f64::from_bits),
                distance: acc.distance.clone(),
                instructions: acc.count,
                mean_pairwise_distance: pairwise,
                mean_pairwise_similarity: 1.0 - pairwise,
                representativeness: acc.rep / c,
                representativeness_literal: acc.rep_literal / c,
                distinct_1_chosen: d(0),
                distinct_2_chosen: d(1),
                distinct_3_chosen: d(2),
                distinct_1_rejected: d(3),
                distinct_2_rejected: d(4),
                distinct_3_rejected: d(5),
                mean_reward: if acc.rewards_missing {
                    None
                } else {
                    mean(acc.reward.0, acc.reward.1)
                },
            }
        })
        .collect();
    Ok(DatasetReport { rows })
}

impl DatasetReport {
    pub fn merge(&mut self, other: DatasetReport) {
        self.rows.extend(other.rows);
    }

    /// Whitespace-aligned table for people.
    pub fn to_table(&self) -> String {
        let fmt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.4}"));
        let header = [
            "strategy", "N", "k", "lambda", "distance", "insts", "pair_dist", "pair_sim", "rep",
            "rep_literal", "d1_c", "d2_c", "d3_c", "d1_r", "d2_r", "d3_r", "reward",
        ];
        let mut cells: Vec<Vec<String>> = vec![header.iter().map(|s| s.to_string()).collect()];
        for r in &self.rows {
            cells.push(vec![
                r.strategy.clone(),
                r.n.to_string(),
                r.k.to_string(),
                r.lambda.map_or("-".into(), |l| l.to_string()),
                r.distance.clone(),
                r.instructions.to_string(),
                fmt(Some(r.mean_pairwise_distance)),
                fmt(Some(r.mean_pairwise_similarity)),
                fmt(Some(r.representativeness)),
                fmt(Some(r.representativeness_literal)),
                fmt(r.distinct_1_chosen),
                fmt(r.distinct_2_chosen),
                fmt(r.distinct_3_chosen),
                fmt(r.distinct_1_rejected),
                fmt(r.distinct_2_rejected),
                fmt(r.distinct_3_rejected),
                fmt(r.mean_reward),
            ]);
        }
        let widths: Vec<usize> = (0..header.len())
            .map(|c| cells.iter().map(|row| row[c].len()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for row in &cells {
            let line: Vec<String> = row
                .iter()
                .zip(&widths)
                .map(|(cell, w)| format!("{cell:<w$}"))
                .collect();
            let _ = writeln!(out, "{}", line.join("  ").trim_end());
        }
        out
    }

    /// Writes the table to `path` and line records to `path` + `.jsonl`.
    pub fn write(&self, path: impl AsRef<Path>) -> Result<PathBuf> {
        let path = path.as_ref();
        std::fs::write(path, self.to_table()).map_err(|e| Error::io(path, e))?;
        let mut records = path.as_os_str().to_owned();
        records.push(".jsonl");
        let records = PathBuf::from(records);
        write_records(&records, &self.rows)?;
        Ok(records)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::ScoreKind;
    use proptest::prelude::*;

    fn abc() -> DistanceMatrix {
        DistanceMatrix::from_rows(vec![
            vec![0.0, 0.2, 0.9],
            vec![0.2, 0.0, 0.8],
            vec![0.9, 0.8, 0.0],
        ])
        .unwrap()
    }

    #[test]
    fn distinct_examples() {
        assert_eq!(distinct_n("a a a a", 1), Some(0.25));
        assert_eq!(distinct_n("the cat the cat", 2), Some(0.5));
        assert_eq!(distinct_n("one two three four", 1), Some(1.0));
        assert_eq!(distinct_n("solo", 2), None);
        assert_eq!(distinct_n("", 1), None);
    }

    #[test]
    fn pairwise_examples() {
        let m = abc();
        assert!((pairwise_distance(&[0, 2], &m).unwrap() - 0.9).abs() < 1e-12);
        assert!((pairwise_distance(&[0, 1, 2], &m).unwrap() - 1.9 / 3.0).abs() < 1e-12);
        let zero = DistanceMatrix::from_rows(vec![vec![0.0; 2]; 2]).unwrap();
        assert_eq!(pairwise_distance(&[0, 1], &zero).unwrap(), 0.0);
        assert!(pairwise_distance(&[1], &m).is_err());
    }

    #[test]
    fn representativeness_examples() {
        let m = abc();
        assert!((representativeness(&[0, 1], &m).unwrap() - 0.65).abs() < 1e-12);
        assert!((representativeness(&[0, 1, 2], &m).unwrap() - (1.0 - m.mean())).abs() < 1e-12);
        let zero = DistanceMatrix::from_rows(vec![vec![0.0; 3]; 3]).unwrap();
        assert_eq!(representativeness(&[2], &zero).unwrap(), 1.0);
        assert!((representativeness_literal(&[0, 1], &m).unwrap() - 0.7 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn reward_means() {
        let tables: BTreeMap<String, ScoreTable> = [
            ("a", vec![0.2, 0.8, 9.0]),
            ("b", vec![0.6, 0.8, -9.0]),
        ]
        .into_iter()
        .map(|(id, scores)| {
            (
                id.to_string(),
                ScoreTable {
                    id: id.into(),
                    scores,
                    kind: ScoreKind::Reward,
                },
            )
        })
        .collect();
        let a: &[usize] = &[0, 1];
        assert!((mean_reward([("a", a)], &tables).unwrap() - 0.5).abs() < 1e-12);
        assert!((mean_reward([("a", a), ("b", a)], &tables).unwrap() - 0.6).abs() < 1e-12);
        assert!(mean_reward(std::iter::empty(), &tables).is_err());
        assert!(mean_reward([("zz", a)], &tables).is_err());
    }

    #[test]
    fn report_grouping() {
        let m = abc();
        let entry = |strategy, lambda, indices| ReportEntry {
            id: "x",
            strategy,
            lambda,
            distance: "cosine",
            indices,
            matrix: &m,
            pair: None,
            rewards: None,
        };
        let pair: &[usize] = &[0, 1];
        let triple: &[usize] = &[0, 1, 2];
        let single = dataset_report(&[entry("aepo", Some(1.0), pair)]).unwrap();
        assert_eq!(single.rows.len(), 1);
        let sweep: Vec<_> = [0.0, 0.5, 1.0, 2.0]
            .into_iter()
            .map(|l| entry("aepo", Some(l), pair))
            .collect();
        assert_eq!(dataset_report(&sweep).unwrap().rows.len(), 4);
        let mixed_k = dataset_report(&[entry("random", None, pair), entry("random", None, triple)]).unwrap();
        assert_eq!(mixed_k.rows.len(), 2);
        assert!(dataset_report(&[entry("random", Some(1.0), pair)]).is_err());
        let r = &single.rows[0];
        assert_eq!(r.mean_pairwise_similarity, 1.0 - r.mean_pairwise_distance);
        assert!(single.to_table().lines().count() == 2);
    }

    proptest! {
        #[test]
        fn distinct_unigram_ignores_order(tokens in prop::collection::vec("[a-e]", 1..12), seed in any::<u64>()) {
            use rand::{seq::SliceRandom, SeedableRng};
            let mut shuffled = tokens.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            prop_assert_eq!(distinct_n(&tokens.join(" "), 1), distinct_n(&shuffled.join(" "), 1));
            let v = distinct_n(&tokens.join(" "), 1).unwrap();
            prop_assert!(v > 0.0 && v <= 1.0);
        }
    }

    #[test]
    fn distinct_bigram_depends_on_order() {
        assert_ne!(distinct_n("a a b b", 2), distinct_n("a b a b", 2));
    }
}
