//! Python bindings for `cptag`.

use std::path::PathBuf;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use cptag_core::harness::{run_synthetic_study, SyntheticScorer, SyntheticSpec};
use cptag_core::icp::{calibrate, p_vector, prediction_set, CalibrationModel};
use cptag_core::metrics::{forced_prediction, MetricsReport};
use cptag_core::scorefile::{read_score_file, write_score_file, LabelVocabulary, ScoredExample};

fn value_error(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Strips headline, title, cited and foreign-word markers from a tag.
#[pyfunction]
fn normalize_tag(raw: &str) -> PyResult<String> {
    cptag_core::normalize_tag(raw).map_err(value_error)
}

/// Parses `word/TAG` text into sentences of `(word, tag)` pairs.
#[pyfunction]
fn parse_corpus(text: &str) -> PyResult<Vec<Vec<(String, String)>>> {
    let corpus = cptag_core::parse_tagged_corpus(text).map_err(value_error)?;
    Ok(corpus
        .sentences
        .into_iter()
        .map(|s| s.tokens.into_iter().map(|t| (t.word, t.tag)).collect())
        .collect())
}

/// Sorted calibration nonconformity scores.
#[pyclass(name = "Calibration", frozen)]
struct PyCalibration {
    inner: CalibrationModel,
}

#[pymethods]
impl PyCalibration {
    /// Builds from score rows and their true label indices.
    #[staticmethod]
    fn from_rows(rows: Vec<Vec<f64>>, labels: Vec<usize>) -> PyResult<Self> {
        if rows.len() != labels.len() {
            return Err(value_error("rows and labels differ in length"));
        }
        let inner = calibrate(rows.iter().zip(&labels).map(|(r, &y)| (r.as_slice(), Some(y)))).map_err(value_error)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn from_alphas(alphas: Vec<f64>) -> PyResult<Self> {
        Ok(Self {
            inner: CalibrationModel::from_scores(alphas).map_err(value_error)?,
        })
    }

    #[staticmethod]
    fn from_text(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: CalibrationModel::from_text(text).map_err(value_error)?,
        })
    }

    fn to_text(&self) -> String {
        self.inner.to_text()
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn alphas(&self) -> Vec<f64> {
        self.inner.alphas().to_vec()
    }

    fn p_values(&self, row: Vec<f64>) -> Vec<f64> {
        p_vector(&self.inner, &row).to_f64()
    }

    /// P-values as `(numerators, denominator)`.
    fn p_value_fractions(&self, row: Vec<f64>) -> (Vec<u32>, u64) {
        let pv = p_vector(&self.inner, &row);
        (pv.numerators().to_vec(), pv.denominator())
    }

    fn prediction_set(&self, row: Vec<f64>, epsilon: f64) -> PyResult<Vec<usize>> {
        let set = prediction_set(&p_vector(&self.inner, &row), epsilon).map_err(value_error)?;
        Ok(set.members)
    }

    fn __len__(&self) -> usize {
        self.inner.n()
    }

    fn __repr__(&self) -> String {
        format!("Calibration(n={})", self.inner.n())
    }
}

fn report_dict<'py>(py: Python<'py>, r: &MetricsReport) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("n_test", r.n_test)?;
    d.set_item("ca", r.ca)?;
    d.set_item("cred_paper", r.cred_paper)?;
    d.set_item("cred_conventional", r.cred_conventional)?;
    d.set_item("op", r.op)?;
    d.set_item("of", r.of)?;
    let levels = r
        .per_epsilon
        .iter()
        .map(|e| {
            let level = PyDict::new(py);
            level.set_item("epsilon", e.epsilon)?;
            level.set_item("coverage", e.coverage)?;
            level.set_item("pis", e.pis)?;
            level.set_item("acds", e.acds)?;
            level.set_item("n_eps", e.n_eps)?;
            Ok(level)
        })
        .collect::<PyResult<Vec<_>>>()?;
    d.set_item("per_epsilon", levels)?;
    Ok(d)
}

/// Metrics for test score rows against a calibration.
#[pyfunction]
fn evaluate<'py>(
    py: Python<'py>,
    calibration: &PyCalibration,
    rows: Vec<Vec<f64>>,
    truths: Vec<usize>,
    epsilons: Vec<f64>,
) -> PyResult<Bound<'py, PyDict>> {
    let p: Vec<_> = rows.iter().map(|r| p_vector(&calibration.inner, r)).collect();
    let forced: Vec<usize> = rows.iter().map(|r| forced_prediction(r)).collect();
    let report = MetricsReport::compute(&p, &forced, &truths, &epsilons).map_err(value_error)?;
    report_dict(py, &report)
}

/// Writes a score file and its `.vocab` sidecar. Rows are
/// `(example_id, true_label or None, scores)`.
#[pyfunction]
fn write_scores(path: PathBuf, labels: Vec<String>, rows: Vec<(u64, Option<u32>, Vec<f32>)>) -> PyResult<()> {
    let vocab = LabelVocabulary::new(labels).map_err(value_error)?;
    let rows: Vec<ScoredExample> = rows
        .into_iter()
        .map(|(example_id, true_label, scores)| ScoredExample {
            example_id,
            true_label,
            scores,
        })
        .collect();
    write_score_file(&path, &vocab, &rows).map_err(value_error)
}

#[pyfunction]
#[allow(clippy::type_complexity)]
fn read_scores(path: PathBuf) -> PyResult<(Vec<String>, Vec<(u64, Option<u32>, Vec<f32>)>)> {
    let (vocab, rows) = read_score_file(&path).map_err(value_error)?;
    Ok((
        vocab.labels().to_vec(),
        rows.into_iter().map(|r| (r.example_id, r.true_label, r.scores)).collect(),
    ))
}

/// Mean metrics over `seeds` synthetic runs.
#[pyfunction]
#[pyo3(signature = (epsilons, seed=0, seeds=5, n_classes=10, n_cal=1000, n_test=5000, random=false))]
#[allow(clippy::too_many_arguments)]
fn run_synthetic<'py>(
    py: Python<'py>,
    epsilons: Vec<f64>,
    seed: u64,
    seeds: usize,
    n_classes: usize,
    n_cal: usize,
    n_test: usize,
    random: bool,
) -> PyResult<Bound<'py, PyDict>> {
    let spec = SyntheticSpec {
        n_classes,
        n_cal,
        n_test,
        seed,
        scorer: if random {
            SyntheticScorer::Random
        } else {
            SyntheticScorer::Informative
        },
        ..Default::default()
    };
    let (_, mean) = py
        .detach(|| run_synthetic_study(&spec, &epsilons, seeds))
        .map_err(value_error)?;
    report_dict(py, &mean)
}

#[pymodule(name = "cptag")]
fn cptag_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyCalibration>()?;
    m.add_function(wrap_pyfunction!(normalize_tag, m)?)?;
    m.add_function(wrap_pyfunction!(parse_corpus, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(write_scores, m)?)?;
    m.add_function(wrap_pyfunction!(read_scores, m)?)?;
    m.add_function(wrap_pyfunction!(run_synthetic, m)?)?;
    Ok(())
}
