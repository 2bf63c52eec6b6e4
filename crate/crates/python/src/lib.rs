//! Python bindings: distances, subset selection, labeling and metrics.
//!
//! ```python
//! import prefsel
//! m = prefsel.DistanceMatrix.from_embeddings(vectors)
//! sel = prefsel.select_exact(m, k=2, lam=1.0)
//! chosen, rejected = prefsel.won_label([(i, rewards[i]) for i in sel.indices])
//! ```

use std::str::FromStr;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use prefsel::annotation::{self, BudgetMode};
use prefsel::dataset::{self, ScoreKind, ScoreTable};
use prefsel::distance;
use prefsel::metrics;
use prefsel::selection::{self, SelectionResult, StrategyKind, DEFAULT_ENUMERATION_CAP};
use prefsel::Error;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyIOError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

/// Validated symmetric dissimilarity matrix with entries in [0, 1].
#[pyclass(name = "DistanceMatrix", module = "prefsel", frozen)]
struct PyDistanceMatrix {
    inner: distance::DistanceMatrix,
}

#[pymethods]
impl PyDistanceMatrix {
    #[new]
    fn new(rows: Vec<Vec<f64>>) -> PyResult<Self> {
        let inner = distance::DistanceMatrix::from_rows(rows).map_err(py_err)?;
        Ok(Self { inner })
    }

    /// Cosine distances (clamped to [0, 1]) between embedding vectors.
    #[staticmethod]
    fn from_embeddings(vectors: Vec<Vec<f64>>) -> PyResult<Self> {
        let inner = distance::DistanceMatrix::from_fn(vectors.len(), |i, j| {
            distance::cosine_distance(&vectors[i], &vectors[j])
        })
        .map_err(py_err)?;
        Ok(Self { inner })
    }

    /// N-gram overlap distances between response texts.
    #[staticmethod]
    #[pyo3(signature = (texts, max_n = 4))]
    fn from_texts(texts: Vec<String>, max_n: usize) -> PyResult<Self> {
        if max_n == 0 {
            return Err(PyValueError::new_err("max_n must be at least 1"));
        }
        let inner = distance::DistanceMatrix::from_fn(texts.len(), |i, j| {
            Ok(distance::ngram_overlap_distance(&texts[i], &texts[j], max_n))
        })
        .map_err(py_err)?;
        Ok(Self { inner })
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn get(&self, i: usize, j: usize) -> PyResult<f64> {
        let n = self.inner.len();
        if i >= n || j >= n {
            return Err(PyValueError::new_err(format!("index out of range for N = {n}")));
        }
        Ok(self.inner.get(i, j))
    }

    fn rows(&self) -> Vec<Vec<f64>> {
        self.inner.rows()
    }

    /// Mean over all N^2 entries, diagonal included.
    fn mean(&self) -> f64 {
        self.inner.mean()
    }

    fn __repr__(&self) -> String {
        format!("DistanceMatrix(N={})", self.inner.len())
    }
}

/// Outcome of one selection: pool indices in selection order plus, where
/// known, the objective parts.
#[pyclass(name = "Selection", module = "prefsel", frozen, get_all)]
struct PySelection {
    strategy: String,
    solver: String,
    indices: Vec<usize>,
    f_rep: Option<f64>,
    f_div: Option<f64>,
    objective: Option<f64>,
}

#[pymethods]
impl PySelection {
    fn sorted_indices(&self) -> Vec<usize> {
        let mut v = self.indices.clone();
        v.sort_unstable();
        v
    }

    fn __repr__(&self) -> String {
        format!(
            "Selection(strategy={:?}, indices={:?}, objective={:?})",
            self.strategy, self.indices, self.objective
        )
    }
}

impl From<SelectionResult> for PySelection {
    fn from(r: SelectionResult) -> Self {
        Self {
            strategy: r.strategy.to_string(),
            solver: r.solver.to_string(),
            indices: r.indices,
            f_rep: r.breakdown.map(|b| b.f_rep),
            f_div: r.breakdown.map(|b| b.f_div),
            objective: r.breakdown.map(|b| b.objective),
        }
    }
}

fn with_breakdown(
    r: SelectionResult,
    matrix: Option<&PyDistanceMatrix>,
    lam: f64,
) -> PyResult<PySelection> {
    match matrix {
        Some(m) => Ok(r.with_breakdown(&m.inner, lam).map_err(py_err)?.into()),
        None => Ok(r.into()),
    }
}

#[pyfunction]
fn cosine_distance(u: Vec<f64>, v: Vec<f64>) -> PyResult<f64> {
    distance::cosine_distance(&u, &v).map_err(py_err)
}

#[pyfunction]
#[pyo3(signature = (a, b, max_n = 4))]
fn ngram_overlap_distance(a: &str, b: &str, max_n: usize) -> f64 {
    distance::ngram_overlap_distance(a, b, max_n)
}

#[pyfunction]
fn f_rep(subset: Vec<usize>, matrix: &PyDistanceMatrix) -> PyResult<f64> {
    selection::f_rep(&subset, &matrix.inner).map_err(py_err)
}

#[pyfunction]
fn f_div(subset: Vec<usize>, matrix: &PyDistanceMatrix) -> PyResult<f64> {
    selection::f_div(&subset, &matrix.inner).map_err(py_err)
}

/// Exhaustive maximizer of `f_rep + lam * f_div`; ties go to the
/// lexicographically smallest subset.
#[pyfunction]
#[pyo3(signature = (matrix, k = 2, lam = 1.0, cap = DEFAULT_ENUMERATION_CAP))]
fn select_exact(matrix: &PyDistanceMatrix, k: usize, lam: f64, cap: u128) -> PyResult<PySelection> {
    selection::select_exact_capped(&matrix.inner, k, lam, cap)
        .map(Into::into)
        .map_err(py_err)
}

#[pyfunction]
#[pyo3(signature = (matrix, k = 2, lam = 1.0))]
fn select_greedy(matrix: &PyDistanceMatrix, k: usize, lam: f64) -> PyResult<PySelection> {
    selection::select_greedy(&matrix.inner, k, lam)
        .map(Into::into)
        .map_err(py_err)
}

#[pyfunction]
#[pyo3(signature = (matrix, k = 2, lam = 1.0))]
fn select_coreset(matrix: &PyDistanceMatrix, k: usize, lam: f64) -> PyResult<PySelection> {
    let r = selection::select_coreset(&matrix.inner, k).map_err(py_err)?;
    with_breakdown(r, Some(matrix), lam)
}

#[pyfunction]
#[pyo3(signature = (n, k = 2, seed = 0, matrix = None, lam = 1.0))]
fn select_random(
    n: usize,
    k: usize,
    seed: u64,
    matrix: Option<&PyDistanceMatrix>,
    lam: f64,
) -> PyResult<PySelection> {
    let r = selection::select_random(n, k, seed).map_err(py_err)?;
    with_breakdown(r, matrix, lam)
}

#[pyfunction]
fn select_won(n: usize) -> PyResult<PySelection> {
    selection::select_won(n).map(Into::into).map_err(py_err)
}

/// `[argmax, argmin]` of the per-response perplexities.
#[pyfunction]
fn select_perplexity(perplexities: Vec<f64>) -> PyResult<PySelection> {
    let table = ScoreTable {
        id: String::new(),
        scores: perplexities,
        kind: ScoreKind::Perplexity,
    };
    selection::select_perplexity_pair(&table)
        .map(Into::into)
        .map_err(py_err)
}

/// `(chosen, rejected)` pool indices from `(index, score)` pairs.
#[pyfunction]
fn won_label(scores: Vec<(usize, f64)>) -> PyResult<(usize, usize)> {
    annotation::won_label(&scores).map_err(py_err)
}

/// `(instructions, annotations)` a strategy uses on a corpus of `corpus_size`
/// pools of `n` responses.
#[pyfunction]
#[pyo3(signature = (strategy, n, k, corpus_size, matched = true))]
fn budget_plan(
    strategy: &str,
    n: usize,
    k: usize,
    corpus_size: usize,
    matched: bool,
) -> PyResult<(u64, u64)> {
    let strategy = StrategyKind::from_str(strategy).map_err(py_err)?;
    let mode = if matched {
        BudgetMode::Matched
    } else {
        BudgetMode::Unconstrained
    };
    let plan = annotation::budget_plan(strategy, n, k, corpus_size, mode).map_err(py_err)?;
    Ok((plan.instructions, plan.annotations))
}

#[pyfunction]
fn distinct_n(text: &str, n: usize) -> Option<f64> {
    metrics::distinct_n(text, n)
}

#[pyfunction]
fn pairwise_distance(indices: Vec<usize>, matrix: &PyDistanceMatrix) -> PyResult<f64> {
    metrics::pairwise_distance(&indices, &matrix.inner).map_err(py_err)
}

#[pyfunction]
fn representativeness(indices: Vec<usize>, matrix: &PyDistanceMatrix) -> PyResult<f64> {
    metrics::representativeness(&indices, &matrix.inner).map_err(py_err)
}

/// Candidate pools from a JSON-lines file, as dicts with `id`,
/// `instruction` and `responses`.
#[pyfunction]
fn load_candidates<'py>(py: Python<'py>, path: &str) -> PyResult<Vec<Bound<'py, PyDict>>> {
    dataset::load_candidates(path)
        .map_err(py_err)?
        .into_iter()
        .map(|p| {
            let d = PyDict::new(py);
            d.set_item("id", &p.instruction.id)?;
            d.set_item("instruction", &p.instruction.text)?;
            d.set_item("responses", p.responses)?;
            Ok(d)
        })
        .collect()
}

#[pymodule(name = "prefsel")]
fn prefsel_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDistanceMatrix>()?;
    m.add_class::<PySelection>()?;
    m.add_function(wrap_pyfunction!(cosine_distance, m)?)?;
    m.add_function(wrap_pyfunction!(ngram_overlap_distance, m)?)?;
    m.add_function(wrap_pyfunction!(f_rep, m)?)?;
    m.add_function(wrap_pyfunction!(f_div, m)?)?;
    m.add_function(wrap_pyfunction!(select_exact, m)?)?;
    m.add_function(wrap_pyfunction!(select_greedy, m)?)?;
    m.add_function(wrap_pyfunction!(select_coreset, m)?)?;
    m.add_function(wrap_pyfunction!(select_random, m)?)?;
    m.add_function(wrap_pyfunction!(select_won, m)?)?;
    m.add_function(wrap_pyfunction!(select_perplexity, m)?)?;
    m.add_function(wrap_pyfunction!(won_label, m)?)?;
    m.add_function(wrap_pyfunction!(budget_plan, m)?)?;
    m.add_function(wrap_pyfunction!(distinct_n, m)?)?;
    m.add_function(wrap_pyfunction!(pairwise_distance, m)?)?;
    m.add_function(wrap_pyfunction!(representativeness, m)?)?;
    m.add_function(wrap_pyfunction!(load_candidates, m)?)?;
    Ok(())
}
