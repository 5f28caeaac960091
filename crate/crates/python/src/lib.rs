//! Python bindings: datasets, SMOTE, GAN training, the oversampling arms,
//! the evaluation classifier, metrics and the experiment runner.
//!
//! Matrices cross the boundary as lists of row lists.

use std::path::PathBuf;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use smotified::classifier_eval::{
    evaluate, pr_auc, pr_curve, train_classifier, ClassifierLoss, ClassifierSpec, MetricsReport,
    TrainedClassifier,
};
use smotified::dataset::{self, LabelColumn, SplitSpec};
use smotified::gan::{self, GanConfig, LatentSource};
use smotified::harness::{self, ExperimentConfig};
use smotified::numerics::Matrix;
use smotified::smote::{self, SmoteConfig};
use smotified::smotified_gan::{baseline_oversample, Method, OversampleSettings};
use smotified::Error;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io { .. } | Error::NonFiniteLoss { .. } | Error::CollapsedLoss { .. } => {
            PyRuntimeError::new_err(e.to_string())
        }
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn to_matrix(rows: &[Vec<f64>], width: Option<usize>) -> PyResult<Matrix> {
    if rows.is_empty() {
        return Ok(Matrix::zeros(0, width.unwrap_or(0)));
    }
    Matrix::from_rows(rows).map_err(py_err)
}

fn to_rows(m: &Matrix) -> Vec<Vec<f64>> {
    m.iter_rows().map(<[f64]>::to_vec).collect()
}

/// Features plus 0/1 labels (1 = minority).
#[pyclass(name = "Dataset", module = "pysmotified", skip_from_py_object)]
#[derive(Clone)]
struct PyDataset {
    inner: dataset::Dataset,
}

#[pymethods]
impl PyDataset {
    #[new]
    #[pyo3(signature = (features, labels, name = "data".to_string()))]
    fn new(features: Vec<Vec<f64>>, labels: Vec<u8>, name: String) -> PyResult<Self> {
        let m = to_matrix(&features, None)?;
        let inner = dataset::Dataset::new(name, m, labels).map_err(py_err)?;
        Ok(PyDataset { inner })
    }

    /// Loads a CSV; `label_column` is a column name or a 0-based index.
    #[staticmethod]
    #[pyo3(signature = (path, label_column, positive_label, header = true))]
    fn from_csv(path: PathBuf, label_column: &Bound<'_, PyAny>, positive_label: &str, header: bool) -> PyResult<Self> {
        let col = match label_column.extract::<usize>() {
            Ok(i) => LabelColumn::Index(i),
            Err(_) => LabelColumn::Name(label_column.extract::<String>()?),
        };
        let inner = dataset::load_csv(&path, &col, positive_label, header).map_err(py_err)?;
        Ok(PyDataset { inner })
    }

    #[getter]
    fn name(&self) -> String {
        self.inner.name.clone()
    }

    #[getter]
    fn feature_names(&self) -> Vec<String> {
        self.inner.feature_names.clone()
    }

    #[getter]
    fn features(&self) -> Vec<Vec<f64>> {
        to_rows(self.inner.features())
    }

    #[getter]
    fn labels(&self) -> Vec<u8> {
        self.inner.labels().to_vec()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn positives(&self) -> usize {
        self.inner.positives()
    }

    #[getter]
    fn negatives(&self) -> usize {
        self.inner.negatives()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    /// Stratified (train, validation, test) split, min-max scaled on train.
    #[pyo3(signature = (seed = 0, train = 0.8, validation = 0.1, test = 0.1))]
    fn split(&self, seed: u64, train: f64, validation: f64, test: f64) -> PyResult<(Self, Self, Self)> {
        let spec = SplitSpec {
            train,
            validation,
            test,
            seed,
        };
        let p = harness::prepare_split(&self.inner, &spec).map_err(py_err)?;
        Ok((
            PyDataset { inner: p.train },
            PyDataset { inner: p.validation },
            PyDataset { inner: p.test },
        ))
    }

    fn write_csv(&self, path: PathBuf) -> PyResult<()> {
        self.inner.write_csv(&path).map_err(py_err)
    }

    fn __repr__(&self) -> String {
        format!(
            "Dataset(name={:?}, rows={}, dim={}, positives={})",
            self.inner.name,
            self.inner.len(),
            self.inner.dim(),
            self.inner.positives()
        )
    }
}

/// Indices of the `k` nearest rows to row `query` (query excluded).
#[pyfunction]
fn knn(rows: Vec<Vec<f64>>, query: usize, k: usize) -> PyResult<Vec<usize>> {
    smote::knn(query, &to_matrix(&rows, None)?, k).map_err(py_err)
}

/// `target_count` SMOTE rows from the given minority rows.
#[pyfunction]
#[pyo3(signature = (minority, target_count, k = 5, seed = 0))]
fn smote_oversample(minority: Vec<Vec<f64>>, target_count: usize, k: usize, seed: u64) -> PyResult<Vec<Vec<f64>>> {
    let cfg = SmoteConfig {
        k,
        target_count,
        seed,
    };
    let batch = smote::smote_oversample(&to_matrix(&minority, None)?, &cfg).map_err(py_err)?;
    Ok(to_rows(&batch.samples))
}

fn gan_config(epochs: usize, seed: u64, learning_rate: f64) -> GanConfig {
    GanConfig {
        max_epochs: epochs,
        seed,
        learning_rate,
        ..GanConfig::default()
    }
}

/// Trains a GAN on `real` rows. `repertoire=None` uses noise latents.
/// Returns `(synthetic_rows, {"disc_loss": [...], "gen_loss": [...]})`.
#[pyfunction]
#[pyo3(signature = (real, n_fake, repertoire = None, epochs = 2000, seed = 0, learning_rate = 1e-5))]
fn train_gan<'py>(
    py: Python<'py>,
    real: Vec<Vec<f64>>,
    n_fake: usize,
    repertoire: Option<Vec<Vec<f64>>>,
    epochs: usize,
    seed: u64,
    learning_rate: f64,
) -> PyResult<(Vec<Vec<f64>>, Bound<'py, PyDict>)> {
    let real = to_matrix(&real, None)?;
    let latent = match repertoire {
        Some(r) => LatentSource::Repertoire(to_matrix(&r, Some(real.cols()))?),
        None => LatentSource::Noise { dim: real.cols() },
    };
    let cfg = gan_config(epochs, seed, learning_rate);
    let (fake, trace) = py
        .detach(|| {
            let (model, trace) = gan::train_gan(&real, &latent, &cfg, None)?;
            let fake = gan::accumulate_fake(&model, &latent, n_fake, None, seed)?;
            Ok::<_, Error>((fake, trace))
        })
        .map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("disc_loss", trace.disc_loss)?;
    d.set_item("gen_loss", trace.gen_loss)?;
    Ok((to_rows(&fake), d))
}

/// Balances `train` with one arm (`none`, `smote`, `gan`, `smotified_gan`).
/// Returns `(synthetic_rows, augmented_dataset)`.
#[pyfunction]
#[pyo3(signature = (train, method = "smotified_gan", seed = 0, k = 5, gan_epochs = 2000, learning_rate = 1e-5))]
fn oversample(
    py: Python<'_>,
    train: &PyDataset,
    method: &str,
    seed: u64,
    k: usize,
    gan_epochs: usize,
    learning_rate: f64,
) -> PyResult<(Vec<Vec<f64>>, PyDataset)> {
    let method: Method = method.parse().map_err(py_err)?;
    let settings = OversampleSettings {
        k,
        smote_seed: seed,
        gan: gan_config(gan_epochs, seed, learning_rate),
        filter: None,
    };
    let data = &train.inner;
    let out = py
        .detach(|| baseline_oversample(data, method, &settings, None))
        .map_err(py_err)?;
    Ok((to_rows(&out.synthetic), PyDataset { inner: out.augmented }))
}

fn metrics_dict<'py>(py: Python<'py>, m: &MetricsReport) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("tp", m.confusion.tp)?;
    d.set_item("fp", m.confusion.fp)?;
    d.set_item("tn", m.confusion.tn)?;
    d.set_item("fn", m.confusion.fn_)?;
    d.set_item("accuracy", m.accuracy)?;
    d.set_item("precision", m.precision)?;
    d.set_item("recall", m.recall)?;
    d.set_item("f1", m.f1)?;
    d.set_item("pr_auc", m.pr_auc)?;
    Ok(d)
}

/// Point metrics at `threshold` plus PR-AUC, minority as positive.
#[pyfunction]
#[pyo3(signature = (scores, labels, threshold = 0.5))]
fn metrics<'py>(py: Python<'py>, scores: Vec<f64>, labels: Vec<u8>, threshold: f64) -> PyResult<Bound<'py, PyDict>> {
    let m = MetricsReport::from_scores(&scores, &labels, threshold).map_err(py_err)?;
    metrics_dict(py, &m)
}

/// `(threshold, precision, recall)` per distinct score.
type CurvePoints = Vec<(f64, f64, f64)>;

/// `(area, [(threshold, precision, recall), ...])`.
#[pyfunction]
fn precision_recall(scores: Vec<f64>, labels: Vec<u8>) -> PyResult<(f64, CurvePoints)> {
    if scores.len() != labels.len() {
        return Err(PyValueError::new_err("scores and labels differ in length"));
    }
    let curve = pr_curve(&scores, &labels);
    let points = curve.iter().map(|p| (p.threshold, p.precision, p.recall)).collect();
    Ok((pr_auc(&curve), points))
}

/// The evaluation network, trained with best-validation-F1 checkpointing.
#[pyclass(name = "Classifier", module = "pysmotified")]
struct PyClassifier {
    inner: TrainedClassifier,
    threshold: f64,
}

#[pymethods]
impl PyClassifier {
    #[staticmethod]
    #[pyo3(signature = (train, validation, epochs = 2000, seed = 0, loss = "mae", learning_rate = 1e-5))]
    fn fit(
        py: Python<'_>,
        train: &PyDataset,
        validation: &PyDataset,
        epochs: usize,
        seed: u64,
        loss: &str,
        learning_rate: f64,
    ) -> PyResult<Self> {
        let loss = match loss {
            "mae" => ClassifierLoss::Mae,
            "bce" => ClassifierLoss::Bce,
            other => return Err(PyValueError::new_err(format!("unknown loss {other:?}"))),
        };
        let spec = ClassifierSpec {
            max_epochs: epochs,
            seed,
            loss,
            learning_rate,
            ..ClassifierSpec::default()
        };
        let (tr, va) = (&train.inner, &validation.inner);
        let inner = py.detach(|| train_classifier(tr, va, &spec)).map_err(py_err)?;
        Ok(PyClassifier {
            inner,
            threshold: spec.threshold,
        })
    }

    #[getter]
    fn best_epoch(&self) -> usize {
        self.inner.best_epoch
    }

    fn scores(&self, rows: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
        let m = to_matrix(&rows, Some(self.inner.model.input_width()))?;
        self.inner.scores(&m).map_err(py_err)
    }

    fn evaluate<'py>(&self, py: Python<'py>, test: &PyDataset) -> PyResult<Bound<'py, PyDict>> {
        let m = evaluate(&self.inner, &test.inner, self.threshold).map_err(py_err)?;
        metrics_dict(py, &m)
    }
}

/// Runs an experiment from a JSON config string; returns the summary tables.
#[pyfunction]
fn run_experiment(py: Python<'_>, config_json: &str) -> PyResult<String> {
    let cfg: ExperimentConfig = serde_json::from_str(config_json).map_err(|e| PyValueError::new_err(e.to_string()))?;
    let outcome = py.detach(|| harness::run_experiment(&cfg)).map_err(py_err)?;
    Ok(outcome
        .summaries
        .iter()
        .map(harness::summary_text)
        .collect::<Vec<_>>()
        .join("\n"))
}

#[pymodule]
pub fn pysmotified(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDataset>()?;
    m.add_class::<PyClassifier>()?;
    m.add_function(wrap_pyfunction!(knn, m)?)?;
    m.add_function(wrap_pyfunction!(smote_oversample, m)?)?;
    m.add_function(wrap_pyfunction!(train_gan, m)?)?;
    m.add_function(wrap_pyfunction!(oversample, m)?)?;
    m.add_function(wrap_pyfunction!(metrics, m)?)?;
    m.add_function(wrap_pyfunction!(precision_recall, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    Ok(())
}
