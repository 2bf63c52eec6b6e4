//! Corpus data model and line-record file I/O.
//!
//! Every file kind is line-delimited JSON with one instruction per line. Response
//! identity is the positional index inside a pool, so duplicate response strings
//! stay distinct items. Embeddings may alternatively be stored in a compact
//! little-endian binary sidecar (see [`write_embeddings_binary`]).

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Magic header of the binary embedding sidecar.
pub const EMBEDDING_MAGIC: &[u8; 6] = b"AEPV1\n";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Instruction {
    pub id: String,
    pub text: String,
}

/// The candidate responses generated for one instruction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CandidatePool {
    pub instruction: Instruction,
    pub responses: Vec<String>,
}

impl CandidatePool {
    pub fn new(id: impl Into<String>, text: impl Into<String>, responses: Vec<String>) -> Self {
        Self {
            instruction: Instruction {
                id: id.into(),
                text: text.into(),
            },
            responses,
        }
    }

    pub fn id(&self) -> &str {
        &self.instruction.id
    }

    pub fn len(&self) -> usize {
        self.responses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.responses.is_empty()
    }

    /// Keeps only the first `cap` responses.
    pub fn truncate(&mut self, cap: usize) {
        self.responses.truncate(cap);
    }
}

#[derive(Serialize, Deserialize)]
struct CandidateRecord {
    id: String,
    instruction: String,
    responses: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingSet {
    pub id: String,
    pub vectors: Vec<Vec<f64>>,
}

impl EmbeddingSet {
    pub fn dimension(&self) -> usize {
        self.vectors.first().map_or(0, Vec::len)
    }

    /// Checks alignment with a pool of `expected` responses.
    pub fn validate(&self, expected: usize) -> Result<()> {
        if self.vectors.len() != expected {
            return Err(Error::CountMismatch {
                id: self.id.clone(),
                expected,
                found: self.vectors.len(),
            });
        }
        let dim = self.dimension();
        if dim == 0 {
            return Err(Error::DimensionMismatch { left: 0, right: 1 });
        }
        for (i, v) in self.vectors.iter().enumerate() {
            if v.len() != dim {
                return Err(Error::DimensionMismatch {
                    left: dim,
                    right: v.len(),
                });
            }
            if let Some(bad) = v.iter().find(|x| !x.is_finite()) {
                return Err(Error::NonFinite {
                    value: *bad,
                    context: format!("in embedding {i} of `{}`", self.id),
                });
            }
            if v.iter().all(|x| *x == 0.0) {
                return Err(Error::ZeroNorm {
                    context: Some(format!("embedding {i} of `{}`", self.id)),
                });
            }
        }
        Ok(())
    }

    pub fn truncate(&mut self, cap: usize) {
        self.vectors.truncate(cap);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreKind {
    Reward,
    Perplexity,
}

impl std::fmt::Display for ScoreKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ScoreKind::Reward => "reward",
            ScoreKind::Perplexity => "perplexity",
        })
    }
}

/// Externally supplied per-response scores (reward or perplexity).
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreTable {
    pub id: String,
    pub scores: Vec<f64>,
    pub kind: ScoreKind,
}

impl ScoreTable {
    pub fn validate(&self, expected: usize) -> Result<()> {
        if self.scores.len() != expected {
            return Err(Error::CountMismatch {
                id: self.id.clone(),
                expected,
                found: self.scores.len(),
            });
        }
        if let Some(bad) = self.scores.iter().find(|x| !x.is_finite()) {
            return Err(Error::NonFinite {
                value: *bad,
                context: format!("in scores of `{}`", self.id),
            });
        }
        Ok(())
    }

    pub fn truncate(&mut self, cap: usize) {
        self.scores.truncate(cap);
    }
}

#[derive(Serialize, Deserialize)]
struct ScoreRecord {
    id: String,
    // Non-finite numbers are not representable in JSON; `null` is read back as NaN
    // so that the finiteness check reports it instead of a parse error.
    scores: Vec<Option<f64>>,
}

/// One emitted preference record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferencePair {
    pub id: String,
    pub instruction: String,
    pub chosen: String,
    pub rejected: String,
    pub chosen_index: usize,
    pub rejected_index: usize,
    pub strategy: String,
    pub lambda: Option<f64>,
    pub annotations_used: u64,
}

impl PreferencePair {
    pub fn validate(&self) -> Result<()> {
        if self.chosen_index == self.rejected_index {
            return Err(Error::Invariant(format!(
                "pair `{}` has chosen_index == rejected_index == {}",
                self.id, self.chosen_index
            )));
        }
        Ok(())
    }
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::io(path, e))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

/// Parses every non-blank line of `path` as `T`, yielding 1-based line numbers.
pub(crate) fn read_records<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<(usize, T)>> {
    let reader = open(path)?;
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line).map_err(|e| Error::parse(path, i + 1, e))?;
        out.push((i + 1, record));
    }
    Ok(out)
}

pub(crate) fn write_records<T: Serialize>(path: &Path, records: impl IntoIterator<Item = T>) -> Result<()> {
    let mut w = create(path)?;
    for r in records {
        serde_json::to_writer(&mut w, &r).map_err(|e| Error::io(path, e.into()))?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_candidates(path: impl AsRef<Path>) -> Result<Vec<CandidatePool>> {
    let path = path.as_ref();
    let mut seen = HashSet::new();
    let mut pools = Vec::new();
    for (line, rec) in read_records::<CandidateRecord>(path)? {
        if rec.id.is_empty() {
            return Err(Error::parse(path, line, "empty instruction id"));
        }
        if !seen.insert(rec.id.clone()) {
            return Err(Error::DuplicateId { line, id: rec.id });
        }
        if rec.responses.len() < 2 {
            return Err(Error::TooFewResponses {
                line,
                id: rec.id,
                n: rec.responses.len(),
            });
        }
        pools.push(CandidatePool::new(rec.id, rec.instruction, rec.responses));
    }
    Ok(pools)
}

pub fn write_candidates(pools: &[CandidatePool], path: impl AsRef<Path>) -> Result<()> {
    write_records(
        path.as_ref(),
        pools.iter().map(|p| CandidateRecord {
            id: p.instruction.id.clone(),
            instruction: p.instruction.text.clone(),
            responses: p.responses.clone(),
        }),
    )
}

/// Reads embedding records without alignment checks. Binary sidecars are
/// recognised by their magic header.
pub fn read_embedding_records(path: impl AsRef<Path>) -> Result<Vec<EmbeddingSet>> {
    let path = path.as_ref();
    let mut head = [0u8; 6];
    let is_binary = {
        let mut f = File::open(path).map_err(|e| Error::io(path, e))?;
        matches!(f.read_exact(&mut head), Ok(())) && &head == EMBEDDING_MAGIC
    };
    if is_binary {
        read_embeddings_binary(path)
    } else {
        Ok(read_records::<EmbeddingSet>(path)?
            .into_iter()
            .map(|(_, r)| r)
            .collect())
    }
}

/// Loads embeddings (text or binary form) and checks them against `pools`.
pub fn load_embeddings(
    path: impl AsRef<Path>,
    pools: &[CandidatePool],
) -> Result<BTreeMap<String, EmbeddingSet>> {
    align_embeddings(read_embedding_records(path)?, pools)
}

pub fn align_embeddings(
    records: Vec<EmbeddingSet>,
    pools: &[CandidatePool],
) -> Result<BTreeMap<String, EmbeddingSet>> {
    let mut by_id = BTreeMap::new();
    for rec in records {
        let id = rec.id.clone();
        if by_id.insert(id.clone(), rec).is_some() {
            return Err(Error::Invariant(format!("duplicate embedding record `{id}`")));
        }
    }
    let mut out = BTreeMap::new();
    for pool in pools {
        let set = by_id
            .remove(pool.id())
            .ok_or_else(|| Error::MissingId(pool.id().to_string()))?;
        set.validate(pool.len())?;
        out.insert(pool.id().to_string(), set);
    }
    Ok(out)
}

pub fn write_embeddings(sets: &[EmbeddingSet], path: impl AsRef<Path>) -> Result<()> {
    write_records(path.as_ref(), sets)
}

/// Writes the binary sidecar: magic, u32 record count, then per record the id
/// length and bytes, vector count, dimension and row-major f32 values (all LE).
pub fn write_embeddings_binary(sets: &[EmbeddingSet], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let io = |e| Error::io(path, e);
    let to_u32 = |n: usize, what: &str| {
        u32::try_from(n).map_err(|_| Error::Invariant(format!("{what} {n} exceeds u32")))
    };
    let mut w = create(path)?;
    w.write_all(EMBEDDING_MAGIC).map_err(io)?;
    w.write_all(&to_u32(sets.len(), "record count")?.to_le_bytes())
        .map_err(io)?;
    for set in sets {
        let dim = set.dimension();
        if let Some(v) = set.vectors.iter().find(|v| v.len() != dim) {
            return Err(Error::DimensionMismatch {
                left: dim,
                right: v.len(),
            });
        }
        w.write_all(&to_u32(set.id.len(), "id length")?.to_le_bytes())
            .map_err(io)?;
        w.write_all(set.id.as_bytes()).map_err(io)?;
        w.write_all(&to_u32(set.vectors.len(), "vector count")?.to_le_bytes())
            .map_err(io)?;
        w.write_all(&to_u32(dim, "dimension")?.to_le_bytes())
            .map_err(io)?;
        for x in set.vectors.iter().flatten() {
            let narrow = *x as f32;
            if !narrow.is_finite() {
                return Err(Error::NonFinite {
                    value: *x,
                    context: format!("embedding for `{}` (binary form stores 32-bit floats)", set.id),
                });
            }
            w.write_all(&narrow.to_le_bytes()).map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

fn read_embeddings_binary(path: &Path) -> Result<Vec<EmbeddingSet>> {
    let mut bytes = Vec::new();
    open(path)?
        .read_to_end(&mut bytes)
        .map_err(|e| Error::io(path, e))?;
    let mut cursor = ByteCursor {
        bytes: &bytes,
        pos: EMBEDDING_MAGIC.len(),
        path,
    };
    let records = cursor.u32()? as usize;
    let mut out = Vec::with_capacity(records);
    for _ in 0..records {
        let id_len = cursor.u32()? as usize;
        let id = std::str::from_utf8(cursor.take(id_len)?)
            .map_err(|e| cursor.error(format!("invalid UTF-8 id: {e}")))?
            .to_string();
        let count = cursor.u32()? as usize;
        let dim = cursor.u32()? as usize;
        let mut vectors = Vec::with_capacity(count);
        for _ in 0..count {
            let raw = cursor.take(dim * 4)?;
            vectors.push(
                raw.chunks_exact(4)
                    .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
                    .collect(),
            );
        }
        out.push(EmbeddingSet { id, vectors });
    }
    if cursor.pos != bytes.len() {
        return Err(cursor.error("trailing bytes after last record".into()));
    }
    Ok(out)
}

struct ByteCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> ByteCursor<'a> {
    fn error(&self, message: String) -> Error {
        Error::Parse {
            path: self.path.to_path_buf(),
            line: 0,
            message: format!("byte offset {}: {message}", self.pos),
        }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| self.error("unexpected end of file".into()))?;
        let slice = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(slice)
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

pub fn load_scores(
    path: impl AsRef<Path>,
    pools: &[CandidatePool],
    kind: ScoreKind,
) -> Result<BTreeMap<String, ScoreTable>> {
    let path = path.as_ref();
    let mut by_id = BTreeMap::new();
    for (line, rec) in read_records::<ScoreRecord>(path)? {
        let table = ScoreTable {
            id: rec.id.clone(),
            scores: rec.scores.into_iter().map(|s| s.unwrap_or(f64::NAN)).collect(),
            kind,
        };
        if by_id.insert(rec.id.clone(), table).is_some() {
            return Err(Error::DuplicateId { line, id: rec.id });
        }
    }
    let mut out = BTreeMap::new();
    for pool in pools {
        let table = by_id
            .remove(pool.id())
            .ok_or_else(|| Error::MissingId(pool.id().to_string()))?;
        table.validate(pool.len())?;
        out.insert(pool.id().to_string(), table);
    }
    Ok(out)
}

pub fn write_scores(tables: &[ScoreTable], path: impl AsRef<Path>) -> Result<()> {
    for t in tables {
        t.validate(t.scores.len())?;
    }
    write_records(
        path.as_ref(),
        tables.iter().map(|t| ScoreRecord {
            id: t.id.clone(),
            scores: t.scores.iter().copied().map(Some).collect(),
        }),
    )
}

/// Writes one preference record per line. Every pair is validated first, so a
/// bad pair leaves the destination untouched.
pub fn write_preferences(pairs: &[PreferencePair], path: impl AsRef<Path>) -> Result<()> {
    for p in pairs {
        p.validate()?;
    }
    write_records(path.as_ref(), pairs)
}

pub fn load_preferences(path: impl AsRef<Path>) -> Result<Vec<PreferencePair>> {
    let path = path.as_ref();
    read_records::<PreferencePair>(path)?
        .into_iter()
        .map(|(line, p)| {
            p.validate()
                .map_err(|e| Error::parse(path, line, e))
                .map(|_| p)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::TempDir;

    fn write(dir: &TempDir, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.path().join(name);
        std::fs::write(&p, body).unwrap();
        p
    }

    fn pool2() -> Vec<CandidatePool> {
        vec![CandidatePool::new("a", "q", vec!["r1".into(), "r2".into()])]
    }

    #[test]
    fn minimal_candidate_record() {
        let dir = TempDir::new().unwrap();
        let p = write(&dir, "c.jsonl", r#"{"id":"a","instruction":"q","responses":["r1","r2"]}"#);
        let pools = load_candidates(&p).unwrap();
        assert_eq!(pools, pool2());
        assert_eq!(pools[0].len(), 2);
    }

    #[test]
    fn single_response_rejected() {
        let dir = TempDir::new().unwrap();
        let p = write(&dir, "c.jsonl", r#"{"id":"a","instruction":"q","responses":["r1"]}"#);
        assert!(matches!(
            load_candidates(&p),
            Err(Error::TooFewResponses { n: 1, .. })
        ));
    }

    #[test]
    fn duplicate_id_names_second_line() {
        let dir = TempDir::new().unwrap();
        let line = r#"{"id":"a","instruction":"q","responses":["r1","r2"]}"#;
        let p = write(&dir, "c.jsonl", &format!("{line}\n{line}\n"));
        match load_candidates(&p) {
            Err(Error::DuplicateId { line, id }) => {
                assert_eq!(line, 2);
                assert_eq!(id, "a");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let dir = TempDir::new().unwrap();
        let good = r#"{"id":"a","instruction":"q","responses":["r1","r2"]}"#;
        let p = write(&dir, "c.jsonl", &format!("{good}\n{{not json\n"));
        assert!(matches!(load_candidates(&p), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn embeddings_alignment() {
        let dir = TempDir::new().unwrap();
        let ok = write(&dir, "e.jsonl", r#"{"id":"a","vectors":[[1,0,0],[0,1,0]]}"#);
        let sets = load_embeddings(&ok, &pool2()).unwrap();
        assert_eq!(sets["a"].dimension(), 3);

        let short = write(&dir, "s.jsonl", r#"{"id":"a","vectors":[[1,0,0]]}"#);
        assert!(matches!(
            load_embeddings(&short, &pool2()),
            Err(Error::CountMismatch { expected: 2, found: 1, .. })
        ));

        let zero = write(&dir, "z.jsonl", r#"{"id":"a","vectors":[[0,0,0],[0,1,0]]}"#);
        assert!(matches!(
            load_embeddings(&zero, &pool2()),
            Err(Error::ZeroNorm { .. })
        ));

        let ragged = write(&dir, "r.jsonl", r#"{"id":"a","vectors":[[1,0,0],[0,1]]}"#);
        assert!(matches!(
            load_embeddings(&ragged, &pool2()),
            Err(Error::DimensionMismatch { .. })
        ));

        let missing = write(&dir, "m.jsonl", r#"{"id":"b","vectors":[[1],[1]]}"#);
        assert!(matches!(
            load_embeddings(&missing, &pool2()),
            Err(Error::MissingId(_))
        ));
    }

    #[test]
    fn scores_alignment() {
        let dir = TempDir::new().unwrap();
        let ok = write(&dir, "s.jsonl", r#"{"id":"a","scores":[0.1,0.7]}"#);
        let t = load_scores(&ok, &pool2(), ScoreKind::Reward).unwrap();
        assert_eq!(t["a"].scores, vec![0.1, 0.7]);

        let nan = write(&dir, "n.jsonl", r#"{"id":"a","scores":[0.1,null]}"#);
        assert!(matches!(
            load_scores(&nan, &pool2(), ScoreKind::Reward),
            Err(Error::NonFinite { .. })
        ));

        let long = write(&dir, "l.jsonl", r#"{"id":"a","scores":[0.1,0.2,0.3]}"#);
        assert!(matches!(
            load_scores(&long, &pool2(), ScoreKind::Reward),
            Err(Error::CountMismatch { expected: 2, found: 3, .. })
        ));
    }

    #[test]
    fn preferences_empty_and_invalid() {
        let dir = TempDir::new().unwrap();
        let p = dir.path().join("p.jsonl");
        write_preferences(&[], &p).unwrap();
        assert_eq!(std::fs::read(&p).unwrap().len(), 0);

        let bad = PreferencePair {
            id: "a".into(),
            instruction: "q".into(),
            chosen: "x".into(),
            rejected: "x".into(),
            chosen_index: 1,
            rejected_index: 1,
            strategy: "aepo".into(),
            lambda: Some(1.0),
            annotations_used: 2,
        };
        let q = dir.path().join("q.jsonl");
        assert!(write_preferences(&[bad], &q).is_err());
        assert!(!q.exists());
    }

    #[test]
    fn binary_sidecar_rejects_truncation() {
        let dir = TempDir::new().unwrap();
        let p = dir.path().join("e.bin");
        let sets = vec![EmbeddingSet {
            id: "a".into(),
            vectors: vec![vec![1.0, 2.0], vec![3.0, 4.0]],
        }];
        write_embeddings_binary(&sets, &p).unwrap();
        let mut bytes = std::fs::read(&p).unwrap();
        assert_eq!(&bytes[..6], EMBEDDING_MAGIC);
        bytes.truncate(bytes.len() - 2);
        std::fs::write(&p, &bytes).unwrap();
        assert!(read_embedding_records(&p).is_err());
    }

    #[test]
    fn binary_sidecar_rejects_values_beyond_f32() {
        let dir = TempDir::new().unwrap();
        let p = dir.path().join("e.bin");
        for bad in [1e300, f64::NAN, f64::INFINITY] {
            let sets = vec![EmbeddingSet {
                id: "a".into(),
                vectors: vec![vec![1.0, bad]],
            }];
            assert!(matches!(
                write_embeddings_binary(&sets, &p),
                Err(Error::NonFinite { .. })
            ));
        }
    }

    #[test]
    fn unicode_survives_verbatim() {
        let dir = TempDir::new().unwrap();
        let p = dir.path().join("c.jsonl");
        let pools = vec![CandidatePool::new(
            "jcm-1",
            "この文は常識的ですか",
            vec!["はい".into(), "いいえ\u{301}".into(), "はい".into()],
        )];
        write_candidates(&pools, &p).unwrap();
        assert_eq!(load_candidates(&p).unwrap(), pools);
    }
}
