//! Python module `ssadvae`: datasets, training, ensembles and the metrics
//! used to evaluate them. Matrices cross the boundary as lists of rows
//! (anything a sequence of float sequences converts from, numpy included).

use std::path::PathBuf;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use ssadvae::cli::RunSpec;
use ssadvae::datakit::{self, CsvOptions, Label, Role, SsadDataset};
use ssadvae::gradcore::{Graph, Tensor};
use ssadvae::models::{self, Method};
use ssadvae::netblocks::GaussianPosterior;
use ssadvae::trainer;
use ssadvae::vbounds;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn runtime_err(e: impl std::fmt::Display) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

fn to_tensor(rows: Vec<Vec<f64>>, width: Option<usize>) -> PyResult<Tensor> {
    let cols = rows.first().map(Vec::len).or(width).unwrap_or(0);
    if let Some(r) = rows.iter().position(|r| r.len() != cols) {
        return Err(value_err(format!("row {r} has {} values, expected {cols}", rows[r].len())));
    }
    let n = rows.len();
    Tensor::matrix(n, cols, rows.into_iter().flatten().collect()).map_err(value_err)
}

fn to_rows(t: &Tensor) -> Vec<Vec<f64>> {
    let cols = t.shape().get(1).copied().unwrap_or(0).max(1);
    t.data().chunks(cols).map(<[f64]>::to_vec).collect()
}

fn label_flags(labels: &[Label]) -> Vec<bool> {
    labels.iter().map(|l| *l == Label::Anomaly).collect()
}

fn parse_method(method: &str) -> PyResult<Method> {
    method.parse().map_err(value_err)
}

/// Labelled feature matrix.
#[pyclass(name = "Dataset", frozen)]
struct PyDataset(SsadDataset);

#[pymethods]
impl PyDataset {
    #[new]
    fn new(features: Vec<Vec<f64>>, anomaly: Vec<bool>) -> PyResult<Self> {
        let labels = anomaly.iter().map(|&a| if a { Label::Anomaly } else { Label::Normal }).collect();
        Ok(Self(SsadDataset::new(to_tensor(features, None)?, labels, "python").map_err(value_err)?))
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.0.dim()
    }

    #[getter]
    fn features(&self) -> Vec<Vec<f64>> {
        to_rows(&self.0.features)
    }

    /// True for anomalies.
    #[getter]
    fn labels(&self) -> Vec<bool> {
        label_flags(&self.0.labels)
    }

    /// Split, standardize and subsample one seed of the benchmark protocol.
    #[pyo3(signature = (train_fraction = 0.6, gamma_l = 0.01, gamma_p = 0.0, seed = 0))]
    fn prepare(&self, train_fraction: f64, gamma_l: f64, gamma_p: f64, seed: u64) -> PyResult<PyPrepared> {
        let p = datakit::prepare(&self.0, train_fraction, gamma_l, gamma_p, seed).map_err(value_err)?;
        let (test_x, test_labels) = p.test.rows_with_role(Role::Test);
        Ok(PyPrepared {
            normal: to_rows(&p.train.normal_stream()),
            outliers: to_rows(&p.train.labeled_outliers()),
            test: to_rows(&test_x),
            test_labels: label_flags(&test_labels),
        })
    }

    fn __repr__(&self) -> String {
        let anomalies = self.0.labels.iter().filter(|l| **l == Label::Anomaly).count();
        format!("Dataset(rows={}, dim={}, anomalies={anomalies})", self.0.len(), self.0.dim())
    }
}

/// Standardized train/test rows for one seed.
#[pyclass(name = "Prepared", frozen, get_all)]
struct PyPrepared {
    normal: Vec<Vec<f64>>,
    outliers: Vec<Vec<f64>>,
    test: Vec<Vec<f64>>,
    test_labels: Vec<bool>,
}

/// Training settings. Keyword arguments use the config-file keys, e.g.
/// `TrainConfig(epochs=40, warmup_epochs=10, widths="16,8,2")`.
#[pyclass(name = "TrainConfig", skip_from_py_object)]
#[derive(Clone)]
struct PyTrainConfig(trainer::TrainConfig);

#[pymethods]
impl PyTrainConfig {
    #[new]
    #[pyo3(signature = (**kwargs))]
    fn new(kwargs: Option<&Bound<'_, pyo3::types::PyDict>>) -> PyResult<Self> {
        let mut cfg = Self(trainer::TrainConfig::default());
        if let Some(kw) = kwargs {
            for (k, v) in kw.iter() {
                cfg.set(&k.extract::<String>()?, &v.str()?.to_string())?;
            }
        }
        Ok(cfg)
    }

    /// Sets one key from its text form.
    fn set(&mut self, key: &str, value: &str) -> PyResult<()> {
        let mut spec = RunSpec {
            train: self.0.clone(),
            ..RunSpec::default()
        };
        spec.set(key, value).map_err(value_err)?;
        self.0 = spec.train;
        Ok(())
    }

    #[getter]
    fn epochs(&self) -> usize {
        self.0.epochs
    }

    #[getter]
    fn ensemble(&self) -> usize {
        self.0.ensemble
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.0.seed
    }

    fn __repr__(&self) -> String {
        format!("{:?}", self.0)
    }
}

/// Trained ensemble; scores are ELBOs, so higher means more normal.
#[pyclass(name = "Ensemble", frozen)]
struct PyEnsemble {
    inner: models::Ensemble,
    epochs: usize,
    score_samples: usize,
}

#[pymethods]
impl PyEnsemble {
    fn __len__(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn input_dim(&self) -> usize {
        self.inner.input_dim()
    }

    #[getter]
    fn method(&self) -> String {
        self.inner.members[0].objective.method.to_string()
    }

    /// Mean member score per row.
    #[pyo3(signature = (x, samples = None))]
    fn score(&self, py: Python<'_>, x: Vec<Vec<f64>>, samples: Option<usize>) -> PyResult<Vec<f64>> {
        let x = to_tensor(x, Some(self.inner.input_dim()))?;
        let s = samples.unwrap_or(self.score_samples);
        py.detach(|| models::ensemble_score(&self.inner, &x, s)).map_err(value_err)
    }

    /// Per-member scores, one list per member.
    #[pyo3(signature = (x, samples = None))]
    fn member_scores(&self, py: Python<'_>, x: Vec<Vec<f64>>, samples: Option<usize>) -> PyResult<Vec<Vec<f64>>> {
        let x = to_tensor(x, Some(self.inner.input_dim()))?;
        let s = samples.unwrap_or(self.score_samples);
        py.detach(|| self.inner.members.iter().map(|m| models::score(m, &x, s)).collect::<Result<_, _>>())
            .map_err(value_err)
    }

    fn save(&self, dir: PathBuf) -> PyResult<()> {
        std::fs::create_dir_all(&dir).map_err(runtime_err)?;
        self.inner.save(&dir, self.epochs).map(|_| ()).map_err(runtime_err)
    }

    #[staticmethod]
    fn load(dir: PathBuf) -> PyResult<Self> {
        let (inner, manifest) = models::Ensemble::load(&dir).map_err(runtime_err)?;
        Ok(Self {
            inner,
            epochs: manifest.training_epochs,
            score_samples: models::SampleCounts::default().score,
        })
    }
}

/// Gaussian blobs: normals around 0, anomalies shifted by `shift` per axis.
#[pyfunction]
#[pyo3(signature = (d, n_normal, n_anomaly = None, shift = 3.0, seed = 0))]
fn synth(d: usize, n_normal: usize, n_anomaly: Option<usize>, shift: f64, seed: u64) -> PyResult<PyDataset> {
    let n_anomaly = n_anomaly.unwrap_or(n_normal / 10);
    datakit::synth_gaussian_ad(d, n_normal, n_anomaly, shift, seed)
        .map(PyDataset)
        .map_err(value_err)
}

/// Reads a CSV file; `label` is `last`, `none`, a column index or a name.
#[pyfunction]
#[pyo3(signature = (path, label = "last", positive = "1"))]
fn load_csv(path: PathBuf, label: &str, positive: &str) -> PyResult<PyDataset> {
    let opts = CsvOptions {
        label: label.parse().map_err(value_err)?,
        positive: positive.to_string(),
        ..CsvOptions::default()
    };
    datakit::load_csv(&path, &opts).map(PyDataset).map_err(value_err)
}

/// Trains one ensemble on normal rows plus (possibly empty) labeled outliers.
#[pyfunction]
#[pyo3(signature = (config, method, normal, outliers = Vec::new()))]
fn train(
    py: Python<'_>,
    config: &PyTrainConfig,
    method: &str,
    normal: Vec<Vec<f64>>,
    outliers: Vec<Vec<f64>>,
) -> PyResult<PyEnsemble> {
    let method = parse_method(method)?;
    let normal = to_tensor(normal, None)?;
    let outliers = to_tensor(outliers, Some(normal.shape()[1]))?;
    let cfg = config.0.clone();
    let out = py
        .detach(|| trainer::train(&cfg, method, &normal, &outliers))
        .map_err(runtime_err)?;
    Ok(PyEnsemble {
        inner: out.ensemble,
        epochs: cfg.epochs,
        score_samples: cfg.samples.score,
    })
}

/// Area under the ROC curve with anomalies as the positive class and low
/// scores meaning anomalous.
#[pyfunction]
fn auroc(scores: Vec<f64>, anomaly: Vec<bool>) -> PyResult<f64> {
    let labels: Vec<Label> = anomaly.iter().map(|&a| if a { Label::Anomaly } else { Label::Normal }).collect();
    datakit::auroc(&scores, &labels).map_err(value_err)
}

/// Numerically stable `log Σ exp(v)`.
#[pyfunction]
fn logsumexp(values: Vec<f64>) -> PyResult<f64> {
    let g = Graph::new();
    let t = Tensor::new(vec![values.len()], values).map_err(value_err)?;
    Ok(g.constant_owned(t).logsumexp(0).map_err(value_err)?.item())
}

/// KL divergence from `N(mu, diag(exp(logvar)))` to `N(prior_mean, I)`.
#[pyfunction]
fn kl_divergence(mu: Vec<f64>, logvar: Vec<f64>, prior_mean: Vec<f64>) -> PyResult<f64> {
    let d = mu.len();
    let g = Graph::new();
    let post = GaussianPosterior {
        mu: g.constant_owned(Tensor::matrix(1, d, mu).map_err(value_err)?),
        logvar: g.constant_owned(Tensor::matrix(1, logvar.len(), logvar).map_err(value_err)?),
    };
    Ok(vbounds::kl_to_gaussian_prior(&post, &prior_mean).map_err(value_err)?.item())
}

#[pymodule]
#[pyo3(name = "ssadvae")]
fn ssadvae_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDataset>()?;
    m.add_class::<PyPrepared>()?;
    m.add_class::<PyTrainConfig>()?;
    m.add_class::<PyEnsemble>()?;
    m.add_function(wrap_pyfunction!(synth, m)?)?;
    m.add_function(wrap_pyfunction!(load_csv, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(auroc, m)?)?;
    m.add_function(wrap_pyfunction!(logsumexp, m)?)?;
    m.add_function(wrap_pyfunction!(kl_divergence, m)?)?;
    Ok(())
}
