//! Python bindings: formulas, semantics and training configurations, the
//! two synthetic experiments and the numerical analyses.

use std::collections::BTreeMap;

use logltn::analysis::{self, GapKind};
use logltn::experiments::{self, ClusterOptions, DigitAddOptions};
use logltn::formula::{self, pretty_print};
use logltn::graph::Precision;
use logltn::nnf;
use logltn::semantics::{self, SemanticsKind};
use logltn::training;
use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;

create_exception!(logltn_py, LogltnError, PyException);

fn err(e: impl std::fmt::Display) -> PyErr {
    LogltnError::new_err(e.to_string())
}

/// A first-order formula.
#[pyclass(module = "logltn_py", frozen)]
struct Formula {
    inner: formula::Formula,
}

#[pymethods]
impl Formula {
    #[staticmethod]
    fn parse(src: &str) -> PyResult<Self> {
        Ok(Formula {
            inner: formula::parse_formula(src).map_err(err)?,
        })
    }

    fn nnf(&self) -> Formula {
        Formula {
            inner: nnf::to_nnf(&self.inner),
        }
    }

    fn is_nnf(&self) -> bool {
        nnf::is_nnf(&self.inner)
    }

    fn free_variables(&self) -> Vec<String> {
        self.inner.free_variables().into_iter().collect()
    }

    fn predicates(&self) -> Vec<String> {
        self.inner.predicates().into_iter().collect()
    }

    /// Truth space (`"log"` or `"linear"`) under a semantics kind.
    fn space(&self, kind: &str) -> PyResult<String> {
        let kind: SemanticsKind = kind.parse().map_err(err)?;
        let s = semantics::infer_space(&self.inner, kind).map_err(err)?;
        Ok(format!("{s:?}").to_lowercase())
    }

    fn __len__(&self) -> usize {
        self.inner.size()
    }

    fn __str__(&self) -> String {
        pretty_print(&self.inner)
    }

    fn __repr__(&self) -> String {
        format!("Formula({:?})", pretty_print(&self.inner))
    }

    fn __eq__(&self, other: &Formula) -> bool {
        self.inner == other.inner
    }
}

/// Named closed formulas.
#[pyclass(module = "logltn_py", frozen)]
struct Knowledgebase {
    inner: formula::Knowledgebase,
}

#[pymethods]
impl Knowledgebase {
    #[staticmethod]
    fn parse(src: &str) -> PyResult<Self> {
        Ok(Knowledgebase {
            inner: formula::parse_kb(src).map_err(err)?,
        })
    }

    fn names(&self) -> Vec<String> {
        (0..self.inner.len()).map(|i| self.inner.label(i)).collect()
    }

    fn formulas(&self) -> Vec<Formula> {
        self.inner
            .formulas()
            .iter()
            .map(|nf| Formula {
                inner: nf.formula.clone(),
            })
            .collect()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

/// Operator configuration with its sharpness schedules.
#[pyclass(module = "logltn_py", frozen)]
struct SemanticsConfig {
    inner: semantics::SemanticsConfig,
}

#[pymethods]
impl SemanticsConfig {
    /// Default schedules ramped over `steps` optimization steps.
    #[new]
    #[pyo3(signature = (kind, steps = 1000))]
    fn new(kind: &str, steps: usize) -> PyResult<Self> {
        let kind: SemanticsKind = kind.parse().map_err(err)?;
        Ok(SemanticsConfig {
            inner: semantics::SemanticsConfig::new(kind, steps),
        })
    }

    #[staticmethod]
    fn constant(kind: &str, alpha: f64, p: f64) -> PyResult<Self> {
        let kind: SemanticsKind = kind.parse().map_err(err)?;
        let inner = semantics::SemanticsConfig::constant(kind, alpha, p);
        inner.validate().map_err(err)?;
        Ok(SemanticsConfig { inner })
    }

    #[getter]
    fn kind(&self) -> String {
        self.inner.kind.to_string()
    }

    #[getter]
    fn epsilon(&self) -> f64 {
        self.inner.epsilon
    }

    #[pyo3(signature = (step = 0))]
    fn alpha(&self, step: usize) -> f64 {
        self.inner.alpha.value(step)
    }

    #[pyo3(signature = (step = 0))]
    fn p(&self, step: usize) -> f64 {
        self.inner.p.value(step)
    }

    fn __repr__(&self) -> String {
        format!("SemanticsConfig({:?})", self.inner.kind.name())
    }
}

/// Optimizer settings.
#[pyclass(module = "logltn_py", frozen)]
struct TrainConfig {
    inner: training::TrainConfig,
}

#[pymethods]
impl TrainConfig {
    #[new]
    #[pyo3(signature = (steps, learning_rate, seed = 0, batch_size = None, precision = "f64"))]
    fn new(steps: usize, learning_rate: f64, seed: u64, batch_size: Option<usize>, precision: &str) -> PyResult<Self> {
        let mut inner = training::TrainConfig::new(steps, learning_rate, seed);
        inner.batch_size = batch_size;
        inner.precision = match precision {
            "f64" => Precision::F64,
            "f32" => Precision::f32(),
            other => return Err(err(format!("unknown precision `{other}`, expected f32 or f64"))),
        };
        inner.validate().map_err(err)?;
        Ok(TrainConfig { inner })
    }

    #[getter]
    fn steps(&self) -> usize {
        self.inner.steps
    }

    #[getter]
    fn learning_rate(&self) -> f64 {
        self.inner.learning_rate
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }
}

/// Per-step losses and satisfactions plus final metrics of one run.
#[pyclass(module = "logltn_py", frozen)]
struct RunRecord {
    inner: training::RunRecord,
}

#[pymethods]
impl RunRecord {
    fn to_csv(&self) -> String {
        self.inner.to_csv()
    }

    #[getter]
    fn metrics(&self) -> BTreeMap<String, String> {
        self.inner.metrics.clone()
    }

    #[getter]
    fn formula_names(&self) -> Vec<String> {
        self.inner.formula_names.clone()
    }

    #[getter]
    fn losses(&self) -> Vec<f64> {
        self.inner.rows.iter().map(|r| r.loss).collect()
    }

    #[getter]
    fn sats(&self) -> Vec<f64> {
        self.inner.rows.iter().map(|r| r.sat).collect()
    }

    fn __len__(&self) -> usize {
        self.inner.rows.len()
    }
}

/// Gaussian blobs clustered from logical constraints alone.
#[pyclass(module = "logltn_py", frozen)]
struct ClusterTask {
    inner: experiments::ClusterTask,
}

#[pymethods]
impl ClusterTask {
    #[new]
    #[pyo3(signature = (seed = 0, points = 200, clusters = 5, dim = 2))]
    fn new(seed: u64, points: usize, clusters: usize, dim: usize) -> PyResult<Self> {
        let opts = ClusterOptions {
            points,
            clusters,
            dim,
            ..ClusterOptions::default()
        };
        Ok(ClusterTask {
            inner: experiments::ClusterTask::generate(&opts, seed).map_err(err)?,
        })
    }

    #[getter]
    fn labels(&self) -> Vec<usize> {
        self.inner.labels.clone()
    }

    #[getter]
    fn threshold(&self) -> f64 {
        self.inner.threshold
    }

    fn to_csv(&self) -> String {
        self.inner.to_csv()
    }

    /// Trains a fresh model; the record's metrics include `ari`.
    fn run(&self, py: Python<'_>, semantics: &SemanticsConfig, train: &TrainConfig) -> PyResult<RunRecord> {
        let inner = py
            .detach(|| experiments::run_cluster(&self.inner, &semantics.inner, &train.inner))
            .map_err(err)?;
        Ok(RunRecord { inner })
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

/// Digit classification learned from sums of two-digit numbers.
#[pyclass(module = "logltn_py", frozen)]
struct DigitAddTask {
    inner: experiments::DigitAddTask,
}

#[pymethods]
impl DigitAddTask {
    #[new]
    #[pyo3(signature = (seed = 0, train_samples = 1024))]
    fn new(seed: u64, train_samples: usize) -> PyResult<Self> {
        let opts = DigitAddOptions {
            train_samples,
            ..DigitAddOptions::default()
        };
        Ok(DigitAddTask {
            inner: experiments::DigitAddTask::generate(&opts, seed).map_err(err)?,
        })
    }

    fn to_csv(&self) -> String {
        self.inner.to_csv()
    }

    /// Trains a fresh classifier; metrics include `digit_accuracy` and
    /// `sum_accuracy`.
    fn run(&self, py: Python<'_>, semantics: &SemanticsConfig, train: &TrainConfig) -> PyResult<RunRecord> {
        let inner = py
            .detach(|| experiments::run_digitadd(&self.inner, &semantics.inner, &train.inner))
            .map_err(err)?;
        Ok(RunRecord { inner })
    }
}

/// LogMeanExp of `xs` with sharpness `alpha`.
#[pyfunction]
fn lme(xs: Vec<f64>, alpha: f64) -> PyResult<f64> {
    semantics::lme(&xs, alpha).map_err(err)
}

/// LogSumExp of `xs` with sharpness `alpha`.
#[pyfunction]
fn lse(xs: Vec<f64>, alpha: f64) -> PyResult<f64> {
    semantics::lse(&xs, alpha).map_err(err)
}

type StabilityTuple = (f64, f64, f64, f64, f64);

/// Rows `(x, naive value, naive grad, fused value, fused grad)` of
/// `log(1 - sigmoid(x))`.
#[pyfunction]
#[pyo3(signature = (precision = "f32"))]
fn stability_table(precision: &str) -> PyResult<Vec<StabilityTuple>> {
    let precision = match precision {
        "f64" => Precision::F64,
        "f32" => Precision::f32(),
        other => return Err(err(format!("unknown precision `{other}`, expected f32 or f64"))),
    };
    Ok(analysis::stability_table(&analysis::STABILITY_INPUTS, precision)
        .into_iter()
        .map(|r| (r.x, r.naive_value, r.naive_grad, r.fused_value, r.fused_grad))
        .collect())
}

/// Location and height of the largest conjunction gap for `n` inputs.
#[pyfunction]
fn demorgan_peak(n: usize) -> PyResult<(f64, f64)> {
    analysis::demorgan_peak(n).map_err(err)
}

/// Mean conjunction gap over an equally spaced grid.
#[pyfunction]
fn demorgan_average(n: usize, points: usize) -> PyResult<f64> {
    analysis::demorgan_average_grid(n, points, GapKind::And).map_err(err)
}

/// Random trials of the LogMeanExp bounds; returns the violation count.
#[pyfunction]
#[pyo3(signature = (trials = 10000, seed = 0))]
fn lme_bound_violations(trials: usize, seed: u64) -> PyResult<usize> {
    Ok(analysis::verify_lme_bounds(trials, 20, (0.1, 10.0), seed, 1e-9)
        .map_err(err)?
        .violations)
}

#[pymodule]
fn logltn_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("LogltnError", m.py().get_type::<LogltnError>())?;
    m.add_class::<Formula>()?;
    m.add_class::<Knowledgebase>()?;
    m.add_class::<SemanticsConfig>()?;
    m.add_class::<TrainConfig>()?;
    m.add_class::<RunRecord>()?;
    m.add_class::<ClusterTask>()?;
    m.add_class::<DigitAddTask>()?;
    m.add_function(wrap_pyfunction!(lme, m)?)?;
    m.add_function(wrap_pyfunction!(lse, m)?)?;
    m.add_function(wrap_pyfunction!(stability_table, m)?)?;
    m.add_function(wrap_pyfunction!(demorgan_peak, m)?)?;
    m.add_function(wrap_pyfunction!(demorgan_average, m)?)?;
    m.add_function(wrap_pyfunction!(lme_bound_violations, m)?)?;
    Ok(())
}
